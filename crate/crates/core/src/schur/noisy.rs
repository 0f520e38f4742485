use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{exact_step, QpData, SchurSolution, SchurStepSolver};
use crate::error::{Error, Result};
use crate::linalg::unit_sphere;

/// Exact step plus a perturbation drawn uniformly in direction with radius
/// `u·eps`, `u ~ U(0, 1]`, so `‖e‖ ≤ eps` holds surely.
pub fn noisy_step<R: Rng + ?Sized>(
    qp: &QpData,
    eps: f64,
    perturb_multipliers: bool,
    rng: &mut R,
) -> Result<SchurSolution> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!(
            "noise level must be finite and ≥ 0, got {eps}"
        )));
    }
    let mut sol = exact_step(qp)?;
    if eps == 0.0 {
        return Ok(sol);
    }
    let radius = (1.0 - rng.random::<f64>()) * eps;
    let e = unit_sphere(sol.dz.len(), rng) * radius;
    let norm = e.norm();
    sol.dz += e;
    if perturb_multipliers && !sol.lambda.is_empty() {
        let radius = (1.0 - rng.random::<f64>()) * eps;
        sol.lambda += unit_sphere(sol.lambda.len(), rng) * radius;
    }
    sol.kkt_residual = qp.kkt_residual(&sol.dz, &sol.lambda);
    sol.diagnostics.accuracy_bound = eps;
    sol.diagnostics.perturbation_norm = Some(norm);
    Ok(sol)
}

/// Bounded-error backend with its own deterministic random stream.
#[derive(Debug, Clone)]
pub struct NoisySchurSolver {
    eps: f64,
    perturb_multipliers: bool,
    rng: ChaCha8Rng,
}

impl NoisySchurSolver {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self {
            eps,
            perturb_multipliers: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_multiplier_noise(mut self, on: bool) -> Self {
        self.perturb_multipliers = on;
        self
    }
}

impl SchurStepSolver for NoisySchurSolver {
    fn name(&self) -> String {
        format!("noisy:{}", self.eps)
    }

    fn declared_accuracy(&self) -> Option<f64> {
        Some(self.eps)
    }

    fn step(&mut self, qp: &QpData) -> Result<SchurSolution> {
        noisy_step(qp, self.eps, self.perturb_multipliers, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn qp() -> QpData {
        QpData::new(
            DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]),
            DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]),
            DVector::from_vec(vec![0.3, -1.0, 0.7]),
            DVector::from_vec(vec![0.2]),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_is_exact() {
        let exact = exact_step(&qp()).unwrap();
        let mut s = NoisySchurSolver::new(0.0, 3);
        let sol = s.step(&qp()).unwrap();
        assert_eq!(sol.dz, exact.dz);
        assert_eq!(sol.lambda, exact.lambda);
    }

    #[test]
    fn perturbation_within_radius_and_seeded() {
        let exact = exact_step(&qp()).unwrap();
        let mut a = NoisySchurSolver::new(1e-3, 11);
        let mut b = NoisySchurSolver::new(1e-3, 11);
        for _ in 0..50 {
            let sa = a.step(&qp()).unwrap();
            let sb = b.step(&qp()).unwrap();
            assert!((&sa.dz - &exact.dz).norm() <= 1e-3);
            assert_eq!(sa.dz, sb.dz);
            assert_eq!(sa.lambda, exact.lambda);
        }
    }
}
