//! Optimal control problems and their multiple-shooting transcription.

pub mod barrier;
pub mod ocp;
pub mod transcription;

pub use barrier::{BarrierConfig, BarrierKind};
pub use ocp::{Cost, OcpDefinition, OcpModel};
pub use transcription::{transcribe, StageLayout, TrajectoryNlp};
