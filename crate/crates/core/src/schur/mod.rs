//! KKT step solvers for the barrier QP
//! `[Q 𝒜ᵀ; 𝒜 0][Δz; λ] = [−g; r]`.

mod exact;
mod noisy;

pub use exact::{exact_step, schur_complement, ExactSchurSolver, SchurFactors};
pub use noisy::{noisy_step, NoisySchurSolver};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, symmetric_eigen_range};

/// One iteration's quadratic subproblem.
#[derive(Debug, Clone)]
pub struct QpData {
    pub q: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub g: DVector<f64>,
    pub r: DVector<f64>,
    /// Damping `σ` already included in `q`.
    pub damping: f64,
}

impl QpData {
    pub fn new(q: DMatrix<f64>, a: DMatrix<f64>, g: DVector<f64>, r: DVector<f64>) -> Result<Self> {
        let nz = g.len();
        let m = r.len();
        let dims = [
            ("QpData.q (rows)", nz, q.nrows()),
            ("QpData.q (cols)", nz, q.ncols()),
            ("QpData.a (rows)", m, a.nrows()),
            ("QpData.a (cols)", nz, a.ncols()),
        ];
        for (callable, expected, got) in dims {
            if expected != got {
                return Err(Error::Dimension {
                    callable: callable.into(),
                    expected,
                    got,
                });
            }
        }
        Ok(Self {
            q,
            a,
            g,
            r,
            damping: 0.0,
        })
    }

    pub fn with_damping(mut self, sigma: f64) -> Self {
        self.damping = sigma;
        self
    }

    pub fn primal_dim(&self) -> usize {
        self.g.len()
    }

    pub fn dual_dim(&self) -> usize {
        self.r.len()
    }

    /// Spectral condition number of `Q` (`∞` if not positive definite).
    pub fn kappa_q(&self) -> f64 {
        let (lo, hi) = symmetric_eigen_range(&self.q);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Damping-based estimate `λ_max(Q)/σ`, meaningful for Gauss–Newton
    /// blocks where `σ` bounds the smallest eigenvalue from below.
    pub fn kappa_q_damping_estimate(&self) -> Option<f64> {
        (self.damping > 0.0)
            .then(|| symmetric_eigen_range(&self.q).1.max(self.damping) / self.damping)
    }

    pub fn kappa_a(&self) -> f64 {
        condition_number(&self.a)
    }

    /// `‖QΔz + 𝒜ᵀλ + g‖ + ‖𝒜Δz − r‖`.
    pub fn kkt_residual(&self, dz: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let stat = &self.q * dz + self.a.transpose() * lambda + &self.g;
        let prim = &self.a * dz - &self.r;
        stat.norm() + prim.norm()
    }
}

/// Solver-specific diagnostics attached to each step.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StepDiagnostics {
    /// Bound on `‖Δz − Δz_Newton‖` guaranteed for this step.
    pub accuracy_bound: f64,
    pub perturbation_norm: Option<f64>,
    pub alpha_dz: Option<f64>,
    pub p_succ: Option<f64>,
    pub expected_repetitions: Option<f64>,
    pub degree_q: Option<usize>,
    pub degree_s: Option<usize>,
    pub kappa_q: Option<f64>,
    pub kappa_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SchurSolution {
    pub dz: DVector<f64>,
    pub lambda: DVector<f64>,
    pub kkt_residual: f64,
    pub diagnostics: StepDiagnostics,
}

impl SchurSolution {
    pub fn new(
        qp: &QpData,
        dz: DVector<f64>,
        lambda: DVector<f64>,
        diagnostics: StepDiagnostics,
    ) -> Self {
        let kkt_residual = qp.kkt_residual(&dz, &lambda);
        Self {
            dz,
            lambda,
            kkt_residual,
            diagnostics,
        }
    }
}

/// The step oracle called once per outer iteration.
pub trait SchurStepSolver: Send {
    fn name(&self) -> String;

    /// Fixed accuracy `ε_Δz` the backend guarantees, or `None` when the
    /// bound is computed per step (see [`StepDiagnostics::accuracy_bound`]).
    fn declared_accuracy(&self) -> Option<f64>;

    fn step(&mut self, qp: &QpData) -> Result<SchurSolution>;
}
