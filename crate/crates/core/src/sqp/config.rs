use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BarrierUpdate {
    /// `μ ← βμ`
    Geometric {
        factor: f64,
    },
    Constant,
    /// `μ ← βμ` only when both `‖G‖` and `‖∇F̃‖` decreased.
    Adaptive {
        factor: f64,
    },
}

impl Default for BarrierUpdate {
    fn default() -> Self {
        BarrierUpdate::Geometric { factor: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceTest {
    /// `‖∇F̃ + 𝒜ᵀλ‖ ≤ ε_opt`, `‖G‖ ≤ ε_feas`, and `μ ≤ ε_opt` when
    /// inequalities are present; `λ` are least-squares multipliers.
    #[default]
    Stationarity,
    /// `‖∇F‖ ≤ ε_opt` and `‖G‖ ≤ ε_feas`.
    ObjectiveGradient,
}

/// What to do when a step is still not a descent direction after the
/// solver has been re-invoked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonDescentPolicy {
    Abort,
    /// Accept the largest strictly feasible trial step without the Armijo
    /// test, provided `gᵀΔz` is explained by the constraint residual and the
    /// step's accuracy bound. The iterate is flagged in the report.
    #[default]
    AcceptWithinAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqpConfig {
    pub mu0: f64,
    pub mu_min: f64,
    pub barrier_update: BarrierUpdate,
    pub armijo_c: f64,
    pub backtrack_tau: f64,
    pub boundary_theta: f64,
    pub eps_opt: f64,
    pub eps_feas: f64,
    pub max_outer_iters: usize,
    pub max_backtracks: usize,
    pub convergence: ConvergenceTest,
    /// Extra iterations run at `μ = μ_min` after the barrier loop ends.
    pub floor_iterations: usize,
    /// `σ` in the monitored condition `‖G(z⁺)‖ ≤ (1 − σα)‖G(z)‖`.
    pub infeasibility_sigma: f64,
    /// Make the infeasibility condition part of the line search.
    pub enforce_infeasibility_decrease: bool,
    pub non_descent: NonDescentPolicy,
    /// Initial Hessian damping.
    pub damping: f64,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_min: 1e-8,
            barrier_update: BarrierUpdate::default(),
            armijo_c: 1e-4,
            backtrack_tau: 0.5,
            boundary_theta: 0.995,
            eps_opt: 1e-6,
            eps_feas: 1e-8,
            max_outer_iters: 500,
            max_backtracks: 60,
            convergence: ConvergenceTest::default(),
            floor_iterations: 100,
            infeasibility_sigma: 1e-4,
            enforce_infeasibility_decrease: false,
            non_descent: NonDescentPolicy::default(),
            damping: 0.0,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl SqpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return Err(Error::Config(format!(
                "mu0 must be positive, got {}",
                self.mu0
            )));
        }
        if !(self.mu_min > 0.0) {
            return Err(Error::Config(format!(
                "mu_min must be positive, got {}",
                self.mu_min
            )));
        }
        open_unit("armijo_c", self.armijo_c)?;
        open_unit("backtrack_tau", self.backtrack_tau)?;
        open_unit("boundary_theta", self.boundary_theta)?;
        match self.barrier_update {
            BarrierUpdate::Geometric { factor } | BarrierUpdate::Adaptive { factor } => {
                open_unit("barrier_update.factor", factor)?
            }
            BarrierUpdate::Constant => {}
        }
        if !(self.eps_opt >= 0.0) || !(self.eps_feas >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        if self.max_outer_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        open_unit("infeasibility_sigma", self.infeasibility_sigma)?;
        if !(self.damping >= 0.0) {
            return Err(Error::Config(format!(
                "damping must be ≥ 0, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SqpConfig::default().validate().unwrap();
    }

    #[test]
    fn open_intervals_enforced() {
        let cfg = SqpConfig {
            boundary_theta: 1.0,
            ..SqpConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SqpConfig {
            barrier_update: BarrierUpdate::Geometric { factor: 0.0 },
            ..SqpConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
