mod common;

use hybrid_sqp::schur::{
    exact_step, noisy_step, schur_complement, ExactSchurSolver, NoisySchurSolver, QpData,
    SchurStepSolver,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{dense_kkt, random_qp, rng};

#[test]
fn hand_solved_two_variable_instance() {
    let qp = QpData::new(
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::zeros(2),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let f = schur_complement(&qp).unwrap();
    assert!((f.s[(0, 0)] - 1.0).abs() < 1e-15);
    let sol = exact_step(&qp).unwrap();
    assert!((sol.lambda[0] + 1.0).abs() < 1e-14);
    assert!((&sol.dz - DVector::from_column_slice(&[1.0, 0.0])).norm() < 1e-14);
    let (dz, lambda) = dense_kkt(&qp);
    assert!((&sol.dz - dz).norm() < 1e-14);
    assert!((&sol.lambda - lambda).norm() < 1e-14);
}

#[test]
fn twelve_by_four_matches_dense_kkt() {
    let mut r = rng(12);
    let qp = random_qp(12, 4, &mut r);
    let sol = exact_step(&qp).unwrap();
    let (dz, lambda) = dense_kkt(&qp);
    assert!((&sol.dz - dz).norm() <= 1e-10);
    assert!((&sol.lambda - lambda).norm() <= 1e-10);
    assert!(sol.kkt_residual <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_step_agrees_with_dense_factorization(seed in any::<u64>(), nz in 2usize..=24, m_frac in 0.0f64..1.0) {
        let m = 1 + ((nz.min(8) - 1) as f64 * m_frac) as usize;
        let qp = random_qp(nz, m, &mut rng(seed));
        let sol = exact_step(&qp).unwrap();
        let (dz, lambda) = dense_kkt(&qp);
        let scale = 1.0 + qp.g.norm() + qp.r.norm();
        prop_assert!((&sol.dz - dz).norm() <= 1e-9 * scale);
        prop_assert!((&sol.lambda - lambda).norm() <= 1e-9 * scale);
        // Linearized feasibility holds for the returned step.
        prop_assert!((&qp.a * &sol.dz - &qp.r).norm() <= 1e-9 * scale);
    }

    #[test]
    fn noisy_step_stays_within_radius(seed in any::<u64>(), eps in 0.0f64..0.1) {
        let qp = random_qp(6, 2, &mut rng(seed));
        let exact = exact_step(&qp).unwrap();
        let noisy = noisy_step(&qp, eps, false, &mut rng(seed ^ 1)).unwrap();
        prop_assert!((&noisy.dz - &exact.dz).norm() <= eps * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn noisy_solver_is_reproducible(seed in any::<u64>()) {
        let qp = random_qp(5, 2, &mut rng(seed));
        let mut a = NoisySchurSolver::new(1e-3, seed);
        let mut b = NoisySchurSolver::new(1e-3, seed);
        for _ in 0..3 {
            let (x, y) = (a.step(&qp).unwrap(), b.step(&qp).unwrap());
            prop_assert_eq!(x.dz.as_slice(), y.dz.as_slice());
        }
    }
}

#[test]
fn zero_noise_equals_exact_solver() {
    let qp = random_qp(7, 3, &mut rng(3));
    let a = ExactSchurSolver.step(&qp).unwrap();
    let b = NoisySchurSolver::new(0.0, 9).step(&qp).unwrap();
    assert_eq!(a.dz.as_slice(), b.dz.as_slice());
}
