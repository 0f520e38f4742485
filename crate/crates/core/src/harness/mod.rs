//! Experiment engine behind the command-line tool: configuration, the four
//! commands, CSV output and the ISS envelope fit.

pub mod commands;
pub mod config;
pub mod iss;
pub mod table;

pub use commands::{
    cmd_compare, cmd_qsvt_check, cmd_solve, cmd_sweep, iterates_table, max_accuracy_bound,
    run_solve, trajectory_table, CompareOutcome, QsvtRow, SolveOutcome,
};
pub use config::{ExperimentConfig, ProblemSelector, SolverSelector};
pub use iss::{
    fit_envelope, fit_report, linear_fit, run_sweep, IssFit, IssFitReport, SweepCell, SweepOutcome,
};
pub use table::{read_table, Table};

use crate::error::Error;

/// Process exit status for a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    SolverFailure = 2,
    PartialSweep = 3,
}

impl ExitStatus {
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) | Error::Csv(_) => ExitStatus::Usage,
            _ => ExitStatus::SolverFailure,
        }
    }
}
