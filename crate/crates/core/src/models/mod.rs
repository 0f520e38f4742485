//! Benchmark control problems.

pub mod hiv;
pub mod toy;

pub use hiv::{hiv_benchmark, hiv_ocp, HivModel, HivParameters};
pub use toy::{box_barrier_path, double_integrator_riccati, toy_problem, toy_problems, TOY_NAMES};

use nalgebra::DVector;

use crate::error::Result;
use crate::nlp::{transcribe, OcpDefinition, TrajectoryNlp};

/// A problem together with a strictly feasible starting input and, where
/// available, its analytic solution.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub ocp: OcpDefinition,
    /// Constant input whose rollout is the initial guess.
    pub nominal_input: DVector<f64>,
    pub known_solution: Option<DVector<f64>>,
    pub known_multipliers: Option<DVector<f64>>,
}

impl Benchmark {
    pub fn transcribe(&self) -> Result<TrajectoryNlp> {
        transcribe(self.ocp.clone())
    }

    pub fn initial_guess(&self, nlp: &TrajectoryNlp) -> DVector<f64> {
        nlp.rollout_constant(&self.nominal_input)
    }
}
