use nalgebra::DVector;
use serde::Serialize;

use crate::schur::StepDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MuFloor,
    IterCap,
    LineSearchFailure,
    NonDescent,
    SolverFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MuFloor => "mu_floor",
            Termination::IterCap => "iter_cap",
            Termination::LineSearchFailure => "line_search_failure",
            Termination::NonDescent => "non_descent",
            Termination::SolverFailure => "solver_failure",
        }
    }

    /// Terminations that leave a usable final iterate.
    pub fn is_success(self) -> bool {
        matches!(
            self,
            Termination::Converged | Termination::MuFloor | Termination::IterCap
        )
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a step was accepted without passing the Armijo test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmijoWaiver {
    /// `gᵀΔz ≥ 0` after a retry, within the step's accuracy allowance.
    NonDescent,
    /// The merit change was below evaluation roundoff.
    Roundoff,
}

impl ArmijoWaiver {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmijoWaiver::NonDescent => "non_descent",
            ArmijoWaiver::Roundoff => "roundoff",
        }
    }
}

/// State after iteration `index` (index 0 is the initial point).
#[derive(Debug, Clone, Serialize)]
pub struct IterateRecord {
    pub index: usize,
    pub z: DVector<f64>,
    /// Barrier parameter used for the step that produced this iterate.
    pub mu: f64,
    pub alpha: f64,
    pub alpha_max: f64,
    pub backtracks: usize,
    pub step_norm: f64,
    /// `gᵀΔz`
    pub slope: f64,
    /// `F̃(z⁽ⁱ⁾; μ)` and `F̃(z⁽ⁱ⁺¹⁾; μ)` at the same `μ`.
    pub merit_before: f64,
    pub merit_after: f64,
    pub objective: f64,
    pub eq_norm: f64,
    pub grad_norm: f64,
    pub barrier_grad_norm: f64,
    pub stationarity: f64,
    pub max_ineq: f64,
    pub armijo_waiver: Option<ArmijoWaiver>,
    pub solver_retried: bool,
    pub infeasibility_decreased: bool,
    pub kkt_residual: f64,
    pub diagnostics: StepDiagnostics,
}

impl IterateRecord {
    /// Armijo inequality as stored in the record.
    pub fn satisfies_armijo(&self, c: f64) -> bool {
        self.merit_after <= self.merit_before + c * self.alpha * self.slope
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solver: String,
    pub iterates: Vec<IterateRecord>,
    pub termination: Termination,
    pub message: Option<String>,
    pub final_z: DVector<f64>,
}

impl SolveReport {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterateRecord {
        self.iterates
            .last()
            .expect("report always holds the initial point")
    }

    /// `‖z⁽ⁱ⁾ − z_ref‖` for every recorded iterate.
    pub fn distances_to(&self, z_ref: &DVector<f64>) -> Vec<f64> {
        self.iterates
            .iter()
            .map(|r| (&r.z - z_ref).norm())
            .collect()
    }
}
