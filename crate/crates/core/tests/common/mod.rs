#![allow(dead_code)]

use hybrid_sqp::schur::QpData;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    // Box–Muller keeps the oracle independent of the library's samplers.
    DMatrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    })
}

/// SPD `Q = BᵀB/n + shift·I`, full-row-rank `𝒜`, Gaussian `g` and `r`.
pub fn random_qp(nz: usize, m: usize, rng: &mut impl Rng) -> QpData {
    let b = gaussian(nz, nz, rng);
    let q =
        b.transpose() * &b / nz as f64 + DMatrix::identity(nz, nz) * (0.1 + rng.random::<f64>());
    let mut a = gaussian(m, nz, rng);
    // Adding a scaled identity block keeps the rows comfortably independent.
    for i in 0..m {
        a[(i, i)] += 2.0;
    }
    let g = gaussian(nz, 1, rng).column(0).into_owned();
    let r = gaussian(m, 1, rng).column(0).into_owned();
    QpData::new(q, a, g, r).unwrap()
}

/// Dense LU solve of `[Q 𝒜ᵀ; 𝒜 0][Δz; λ] = [−g; r]`.
pub fn dense_kkt(qp: &QpData) -> (DVector<f64>, DVector<f64>) {
    let (n, m) = (qp.g.len(), qp.r.len());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&qp.q);
    k.view_mut((0, n), (n, m)).copy_from(&qp.a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(&qp.a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&qp.g));
    rhs.rows_mut(n, m).copy_from(&qp.r);
    let sol = k.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
}
