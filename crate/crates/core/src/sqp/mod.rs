//! Barrier SQP outer loop.

pub mod config;
pub mod driver;
pub mod report;

pub use config::{BarrierUpdate, ConvergenceTest, NonDescentPolicy, SqpConfig};
pub use driver::{
    backtrack, fraction_to_boundary, solve, update_barrier, Accepted, BacktrackError,
    LineSearchOptions, MeritProblem, Progress,
};
pub use report::{ArmijoWaiver, IterateRecord, SolveReport, Termination};
