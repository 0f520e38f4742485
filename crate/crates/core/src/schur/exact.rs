use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{QpData, SchurSolution, SchurStepSolver, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen_range, symmetrize};

/// Intermediate quantities of block elimination.
pub struct SchurFactors {
    pub q_chol: Cholesky<f64, Dyn>,
    /// `Q⁻¹𝒜ᵀ`
    pub qinv_at: DMatrix<f64>,
    /// `Q⁻¹g`
    pub qinv_g: DVector<f64>,
    /// `S = 𝒜Q⁻¹𝒜ᵀ`
    pub s: DMatrix<f64>,
    /// `b = −r − 𝒜Q⁻¹g`
    pub b: DVector<f64>,
}

fn singular(what: &'static str, m: &DMatrix<f64>) -> Error {
    let (lo, hi) = symmetric_eigen_range(m);
    Error::Singular {
        what,
        detail: format!("eigenvalues in [{lo:.3e}, {hi:.3e}]"),
    }
}

/// Factorizes `Q` once and forms `S` and `b`.
pub fn schur_complement(qp: &QpData) -> Result<SchurFactors> {
    let q_chol = Cholesky::new(qp.q.clone()).ok_or_else(|| singular("Q", &qp.q))?;
    let qinv_at = q_chol.solve(&qp.a.transpose());
    let qinv_g = q_chol.solve(&qp.g);
    let mut s = &qp.a * &qinv_at;
    symmetrize(&mut s);
    let b = -&qp.r - &qp.a * &qinv_g;
    Ok(SchurFactors {
        q_chol,
        qinv_at,
        qinv_g,
        s,
        b,
    })
}

/// `λ = S⁻¹b`, `Δz = −Q⁻¹(g + 𝒜ᵀλ)`.
pub fn exact_step(qp: &QpData) -> Result<SchurSolution> {
    let f = schur_complement(qp)?;
    let lambda = if qp.dual_dim() == 0 {
        DVector::zeros(0)
    } else {
        let s_chol = Cholesky::new(f.s.clone()).ok_or_else(|| singular("S", &f.s))?;
        s_chol.solve(&f.b)
    };
    let dz = -(&f.qinv_g + &f.qinv_at * &lambda);
    Ok(SchurSolution::new(
        qp,
        dz,
        lambda,
        StepDiagnostics::default(),
    ))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSchurSolver;

impl SchurStepSolver for ExactSchurSolver {
    fn name(&self) -> String {
        "exact".into()
    }

    fn declared_accuracy(&self) -> Option<f64> {
        Some(0.0)
    }

    fn step(&mut self, qp: &QpData) -> Result<SchurSolution> {
        exact_step(qp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_variable_hand_solve() {
        let qp = QpData::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(2),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let f = schur_complement(&qp).unwrap();
        assert_eq!(f.s[(0, 0)], 1.0);
        assert_eq!(f.b[0], -1.0);
        let sol = exact_step(&qp).unwrap();
        assert!((sol.lambda[0] + 1.0).abs() < 1e-15);
        assert!((sol.dz[0] - 1.0).abs() < 1e-15);
        assert!(sol.dz[1].abs() < 1e-15);
        assert!(sol.kkt_residual < 1e-14);
    }

    #[test]
    fn homogeneous_system_gives_zero() {
        let qp = QpData::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::zeros(2),
            DVector::zeros(1),
        )
        .unwrap();
        let sol = exact_step(&qp).unwrap();
        assert_eq!(sol.dz.norm(), 0.0);
        assert_eq!(sol.lambda.norm(), 0.0);
    }

    #[test]
    fn indefinite_q_reports_singularity() {
        let qp = QpData::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(2),
            DVector::zeros(1),
        )
        .unwrap();
        assert!(matches!(
            exact_step(&qp),
            Err(Error::Singular { what: "Q", .. })
        ));
    }

    #[test]
    fn rank_deficient_constraints_report_singular_s() {
        let qp = QpData::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            DVector::zeros(2),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            exact_step(&qp),
            Err(Error::Singular { what: "S", .. })
        ));
    }
}
