//! Classical simulation of the block-encoding/QSVT Schur step.

pub mod block_encoding;
pub mod ledger;
pub mod polynomial;
pub mod step;

pub use block_encoding::{be_add, be_mul, BlockEncoding, EncodeOptions, ProductErrorRule};
pub use ledger::{
    closed_form_alpha_dz, predict_normalization, propagate_error_budget, ErrorBudget, ErrorInputs,
    NormalizationInputs, NormalizationLedger,
};
pub use polynomial::{
    build_inversion_spec, build_inversion_spec_with, qsvt_invert, PolynomialOptions,
    QsvtInversionSpec, DEFAULT_DEGREE_CAP,
};
pub use step::{
    quantum_schur_step, quantum_schur_trace, sampled_readout, QuantumConfig, QuantumSchurSolver,
    QuantumTrace, ReadoutMode, QUANTUM_DEGREE_CAP,
};
