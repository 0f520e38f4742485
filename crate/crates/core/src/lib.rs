//! Barrier SQP for discrete-time optimal control with interchangeable
//! KKT step backends: exact block elimination, bounded random
//! perturbations, and a classical simulation of a block-encoding/QSVT
//! linear-systems step.

// Validation uses `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod nlp;
pub mod quantum;
pub mod schur;
pub mod sqp;

pub use error::{Error, Result};
