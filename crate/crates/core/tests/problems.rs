mod common;

use hybrid_sqp::models::{box_barrier_path, hiv_benchmark, toy_problem, HivParameters};
use hybrid_sqp::nlp::BarrierConfig;
use hybrid_sqp::schur::{ExactSchurSolver, NoisySchurSolver, QpData};
use hybrid_sqp::sqp::{solve, SolveReport, SqpConfig, Termination};
use nalgebra::DVector;
use proptest::prelude::*;

use common::dense_kkt;

fn exact(name: &str, cfg: &SqpConfig) -> (SolveReport, hybrid_sqp::models::Benchmark) {
    let b = toy_problem(name, None).unwrap();
    let nlp = b.transcribe().unwrap();
    let z0 = b.initial_guess(&nlp);
    (solve(&nlp, &z0, cfg, &mut ExactSchurSolver).unwrap(), b)
}

fn all_strictly_feasible(report: &SolveReport) -> bool {
    report.iterates.iter().all(|r| r.max_ineq < 0.0)
}

#[test]
fn equality_qp_converges_in_one_step() {
    let (report, b) = exact("eqqp", &SqpConfig::default());
    assert_eq!(report.termination, Termination::Converged);
    assert!(
        report.iterations() <= 2,
        "{} iterations",
        report.iterations()
    );
    assert_eq!(report.iterates[1].alpha, 1.0);
    let z_star = b.known_solution.unwrap();
    assert!((&report.final_z - z_star).norm() <= 1e-10);
}

#[test]
fn embedded_qp_multipliers_match_hand_kkt() {
    // ½‖z‖² subject to z₁ = 1: the dense KKT solve from z = 0 lands on (1, 0) with λ = −1.
    let qp = QpData::new(
        nalgebra::DMatrix::identity(2, 2),
        nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::zeros(2),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let (dz, lambda) = dense_kkt(&qp);
    assert!((dz - DVector::from_column_slice(&[1.0, 0.0])).norm() < 1e-15);
    assert!((lambda[0] + 1.0).abs() < 1e-15);
}

#[test]
fn double_integrator_matches_riccati() {
    for horizon in [1, 5, 20] {
        let b = hybrid_sqp::models::toy::double_integrator(horizon);
        let nlp = b.transcribe().unwrap();
        let z0 = b.initial_guess(&nlp);
        let report = solve(&nlp, &z0, &SqpConfig::default(), &mut ExactSchurSolver).unwrap();
        assert!(report.termination.is_success());
        let z_star = b.known_solution.unwrap();
        assert!((&report.final_z - &z_star).norm() <= 1e-8, "N = {horizon}");
    }
}

#[test]
fn box_problem_tracks_barrier_path() {
    for mu in [1e-1, 1e-3, 1e-5] {
        let cfg = SqpConfig {
            mu0: mu,
            mu_min: mu,
            eps_opt: 0.0,
            floor_iterations: 50,
            ..SqpConfig::default()
        };
        let (report, _) = exact("box", &cfg);
        assert_eq!(report.termination, Termination::MuFloor);
        let oracle = box_barrier_path(mu);
        assert!((&report.final_z - &oracle).norm() <= 1e-12, "μ = {mu}");
        // Independent check of the scalar stationarity condition.
        let u = report.final_z[1];
        assert!((2.0 * (u - 2.0) + mu / (1.0 - u)).abs() <= 1e-9);
    }
}

#[test]
fn box_problem_converges_to_active_bound() {
    let (report, b) = exact("box", &SqpConfig::default());
    assert_eq!(report.termination, Termination::Converged);
    assert!((&report.final_z - b.known_solution.unwrap()).norm() <= 1e-6);
    assert!(all_strictly_feasible(&report));
}

#[test]
fn already_optimal_start_returns_immediately() {
    let b = toy_problem("eqqp", None).unwrap();
    let nlp = b.transcribe().unwrap();
    let z = b.known_solution.clone().unwrap();
    let report = solve(&nlp, &z, &SqpConfig::default(), &mut ExactSchurSolver).unwrap();
    assert_eq!(report.termination, Termination::Converged);
    assert_eq!(report.iterations(), 0);
    assert_eq!(report.final_z, z);
}

#[test]
fn rejected_config_is_reported() {
    let b = toy_problem("box", None).unwrap();
    let nlp = b.transcribe().unwrap();
    let z0 = b.initial_guess(&nlp);
    let cfg = SqpConfig {
        armijo_c: 1.5,
        ..SqpConfig::default()
    };
    let err = solve(&nlp, &z0, &cfg, &mut ExactSchurSolver).unwrap_err();
    assert!(err.to_string().contains("armijo_c"));
}

#[test]
fn hiv_exact_solve_is_feasible_and_lowers_viral_load() {
    let b = hiv_benchmark(HivParameters::default()).unwrap();
    let nlp = b.transcribe().unwrap();
    let z0 = b.initial_guess(&nlp);
    assert!(nlp.is_strictly_feasible(&z0));
    let report = solve(&nlp, &z0, &SqpConfig::default(), &mut ExactSchurSolver).unwrap();
    assert_eq!(report.termination, Termination::Converged);
    assert!(all_strictly_feasible(&report));
    let n = nlp.layout().horizon;
    let v: Vec<f64> = (0..=n).map(|k| nlp.state(&report.final_z, k)[2]).collect();
    assert!(v[n] < v[0]);
    assert!(v[n - 40..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn barrier_qp_adds_curvature_for_scalar_constraint() {
    // Box problem at u = 0, μ = 1: H = u − 1 = −1, φ'(−1) = 1, φ''(−1) = 1.
    let b = toy_problem("box", None).unwrap();
    let nlp = b.transcribe().unwrap();
    let z = DVector::from_column_slice(&[0.0, 0.0, 0.0]);
    let with = nlp.build_qp(&z, &BarrierConfig::new(1.0)).unwrap();
    let without = nlp.build_qp(&z, &BarrierConfig::new(1e-300)).unwrap();
    assert!((with.q[(1, 1)] - without.q[(1, 1)] - 1.0).abs() < 1e-12);
    assert!((with.g[1] - without.g[1] - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noisy_iterates_stay_strictly_feasible(seed in any::<u64>(), eps in prop_oneof![Just(0.0), 1e-6f64..1e-1]) {
        let b = toy_problem("box", None).unwrap();
        let nlp = b.transcribe().unwrap();
        let z0 = b.initial_guess(&nlp);
        let cfg = SqpConfig { mu_min: 1e-6, floor_iterations: 20, ..SqpConfig::default() };
        let report = solve(&nlp, &z0, &cfg, &mut NoisySchurSolver::new(eps, seed)).unwrap();
        prop_assert!(report.termination.is_success(), "{}", report.termination);
        prop_assert!(all_strictly_feasible(&report));
        for r in &report.iterates {
            prop_assert!(nlp.is_strictly_feasible(&r.z));
        }
    }
}
