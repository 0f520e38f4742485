//! Odd polynomial approximations of `1/x` on `[1/κ, 1]`.
//!
//! The construction uses `g_b(x) = (1 − (1 − x²)^b)/x`, which has the
//! explicit odd Chebyshev expansion
//! `g_b = 4 Σ_{j<b} (−1)^j P[X ≥ b+j+1] T_{2j+1}` with `X ~ Bin(2b, ½)`,
//! truncated once the discarded coefficient mass fits the error budget.

use nalgebra::{DMatrix, SVD};
use serde::Serialize;

use super::block_encoding::BlockEncoding;
use crate::error::{Error, Result};

pub const DEFAULT_DEGREE_CAP: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialOptions {
    pub degree_cap: usize,
    /// Number of grid points for the numerical check of the built
    /// polynomial; `0` skips it.
    pub verify_grid: usize,
}

impl Default for PolynomialOptions {
    fn default() -> Self {
        Self {
            degree_cap: DEFAULT_DEGREE_CAP,
            verify_grid: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QsvtInversionSpec {
    pub kappa: f64,
    pub eps_prime: f64,
    pub beta: f64,
    pub degree: usize,
    /// Chebyshev coefficients of `p` (already divided by `κβ`); even
    /// entries are zero.
    pub coeffs: Vec<f64>,
    /// Order `b` of the smoothed inverse that is truncated.
    pub smoothing_order: u64,
    /// Proven bound on `sup_{[1/κ,1]} |p(x) − 1/(κβx)|`.
    pub error_bound: f64,
    /// Proven bound on `sup_{[−1,1]} |p(x)|`.
    pub sup_bound: f64,
    /// Measured error on a grid of `[1/κ, 1]`, if verified.
    pub grid_error: Option<f64>,
    /// Measured `max |p|` on a grid of `[−1, 1]`, if verified.
    pub grid_sup: Option<f64>,
    /// Scaled coefficients of `T_{degree+2}, T_{degree+4}, …` that were cut
    /// off, down to a mass of `TAIL_CUTOFF · ε′`.
    #[serde(skip)]
    tail: Vec<f64>,
}

/// Above this degree `p` is evaluated as `g_b/(κβ)` minus the discarded tail.
const CLENSHAW_MAX_DEGREE: usize = 4001;

/// Relative mass (in units of `ε′`) of the tail terms left out of that evaluation.
const TAIL_CUTOFF: f64 = 1e-8;

/// `ln(C(2b, b) / 4^b)`.
fn ln_central_binomial_mass(b: u64) -> f64 {
    if b <= 1_000_000 {
        let mut ln = 0.0;
        for t in 1..=b {
            ln += ((2 * t - 1) as f64 / (2 * t) as f64).ln();
        }
        ln
    } else {
        let bf = b as f64;
        -0.5 * (std::f64::consts::PI * bf).ln() - 1.0 / (8.0 * bf) + 1.0 / (192.0 * bf.powi(3))
    }
}

/// Tail probabilities `t_j = P[X ≥ b+j+1]` for `j = 0..`, stopping once
/// the terms are negligible.
fn binomial_tails(b: u64) -> Vec<f64> {
    let w0 = ln_central_binomial_mass(b).exp();
    let mut weights = Vec::new();
    let mut w = w0;
    let mut i: u64 = 1;
    while i <= b {
        w *= (b - i + 1) as f64 / (b + i) as f64;
        if w < 1e-300 || w < w0 * 1e-40 {
            break;
        }
        weights.push(w);
        i += 1;
    }
    // weights[k] = w_{k+1}; t_j = Σ_{i ≥ j+1} w_i.
    let mut tails = vec![0.0; weights.len()];
    let mut acc = 0.0;
    for k in (0..weights.len()).rev() {
        acc += weights[k];
        tails[k] = acc;
    }
    tails
}

/// `(1 − (1 − x²)^b)/x` evaluated stably on `(0, 1]`.
fn smoothed_inverse(x: f64, b: u64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ln = (b as f64) * (-x * x).ln_1p();
    -ln.exp_m1() / x
}

/// Maximum of `g_b` on `[0, 1]`: log grid followed by golden-section refinement.
fn smoothed_inverse_max(b: u64) -> f64 {
    let n = 4000;
    let lo = 1e-12f64.ln();
    let mut best = (0.0, 0.0);
    let mut xs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let x = (lo + (0.0 - lo) * k as f64 / n as f64).exp();
        xs.push(x);
        let v = smoothed_inverse(x, b);
        if v > best.1 {
            best = (k as f64, v);
        }
    }
    let k = best.0 as usize;
    let (mut a, mut c) = (xs[k.saturating_sub(1)], xs[(k + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = c - phi * (c - a);
        let x2 = a + phi * (c - a);
        if smoothed_inverse(x1, b) < smoothed_inverse(x2, b) {
            a = x1;
        } else {
            c = x2;
        }
    }
    best.1.max(smoothed_inverse(0.5 * (a + c), b))
}

/// Builds `p` with `|p(x) − 1/(κβx)| ≤ ε′` on `[1/κ, 1]` and `|p| ≤ 1` on `[−1, 1]`.
pub fn build_inversion_spec(kappa: f64, eps_prime: f64) -> Result<QsvtInversionSpec> {
    build_inversion_spec_with(kappa, eps_prime, &PolynomialOptions::default())
}

pub fn build_inversion_spec_with(
    kappa: f64,
    eps_prime: f64,
    opts: &PolynomialOptions,
) -> Result<QsvtInversionSpec> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::Config(format!(
            "kappa must be finite and ≥ 1, got {kappa}"
        )));
    }
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::Config(format!(
            "eps_prime must lie in (0, 1), got {eps_prime}"
        )));
    }
    let mut beta = 1.0f64;
    loop {
        let target = kappa * beta * eps_prime;
        // sup_{[1/κ,1]} |g_b − 1/x| = κ(1 − κ⁻²)^b; spend half the budget on it.
        let shrink = -(-1.0 / (kappa * kappa)).ln_1p();
        let b = if shrink.is_infinite() {
            1
        } else {
            ((2.0 / (beta * eps_prime)).ln() / shrink).ceil().max(1.0) as u64
        };
        let approx = if shrink.is_infinite() {
            0.0
        } else {
            kappa * (-(b as f64) * shrink).exp()
        };
        let scale = kappa * beta;
        let peak = smoothed_inverse_max(b);
        if peak > scale {
            beta *= 2.0;
            continue;
        }
        let tails = binomial_tails(b);
        // remainder[J] = 4 Σ_{j > J} t_j.
        let mut remainder = vec![0.0; tails.len() + 1];
        for j in (0..tails.len()).rev() {
            remainder[j] = remainder[j + 1] + 4.0 * tails[j];
        }
        let budget = target - approx;
        let truncation = (0..tails.len())
            .find(|&j| remainder[j + 1] <= budget)
            .unwrap_or(tails.len().saturating_sub(1));
        let degree = 2 * truncation + 1;
        if degree > opts.degree_cap {
            return Err(Error::InfeasibleAccuracy {
                kappa,
                eps_prime,
                degree,
                cap: opts.degree_cap,
            });
        }
        let tail = remainder[truncation + 1];
        let sup_bound = (peak + tail) / scale;
        if sup_bound > 1.0 {
            beta *= 2.0;
            continue;
        }
        let signed = |j: usize| {
            if j.is_multiple_of(2) {
                4.0 * tails[j] / scale
            } else {
                -4.0 * tails[j] / scale
            }
        };
        let mut coeffs = vec![0.0; degree + 1];
        for j in 0..=truncation {
            coeffs[2 * j + 1] = signed(j);
        }
        let tail_coeffs = if degree > CLENSHAW_MAX_DEGREE {
            let end = (truncation + 1..tails.len())
                .find(|&j| remainder[j] <= TAIL_CUTOFF * eps_prime * scale)
                .unwrap_or(tails.len());
            (truncation + 1..end).map(signed).collect()
        } else {
            Vec::new()
        };
        let mut spec = QsvtInversionSpec {
            kappa,
            eps_prime,
            beta,
            degree,
            coeffs,
            smoothing_order: b,
            error_bound: (approx + tail) / scale,
            sup_bound,
            grid_error: None,
            grid_sup: None,
            tail: tail_coeffs,
        };
        if opts.verify_grid > 0 {
            let (err, sup) = spec.grid_check(opts.verify_grid);
            spec.grid_error = Some(err);
            spec.grid_sup = Some(sup);
        }
        return Ok(spec);
    }
}

impl QsvtInversionSpec {
    /// `p(x)`. Low degrees use Clenshaw; high degrees use
    /// `p = g_b/(κβ) − Σ_{tail} c_n T_n`, whose tail is far shorter than the
    /// series and whose truncation is below `1e-8·ε′`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.degree > CLENSHAW_MAX_DEGREE {
            self.eval_by_tail(x)
        } else {
            self.eval_clenshaw(x)
        }
    }

    fn eval_by_tail(&self, x: f64) -> f64 {
        self.eval_tail_lanes([x])[0]
    }

    /// Tail evaluation at `L` points at once; the rotations are independent,
    /// so the lanes overlap instead of waiting on one dependency chain.
    fn eval_tail_lanes<const L: usize>(&self, xs: [f64; L]) -> [f64; L] {
        let theta = xs.map(|x| x.clamp(-1.0, 1.0).acos());
        let rot = theta.map(|t| (2.0 * t).sin_cos());
        let first = self.degree + 2;
        let mut re = [0.0; L];
        let mut im = [0.0; L];
        let mut sum = [0.0; L];
        for (block, cs) in self.tail.chunks(1024).enumerate() {
            // Reseeding each block keeps the phase drift at rounding level.
            let n = (first + 2 * 1024 * block) as f64;
            for l in 0..L {
                (im[l], re[l]) = (n * theta[l]).sin_cos();
            }
            for c in cs {
                for l in 0..L {
                    sum[l] += c * re[l];
                    let (s2, c2) = rot[l];
                    let r = re[l] * c2 - im[l] * s2;
                    im[l] = re[l] * s2 + im[l] * c2;
                    re[l] = r;
                }
            }
        }
        let scale = self.kappa * self.beta;
        std::array::from_fn(|l| smoothed_inverse(xs[l], self.smoothing_order) / scale - sum[l])
    }

    /// `p` at every point of `xs`.
    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        if self.degree <= CLENSHAW_MAX_DEGREE {
            return xs.iter().map(|&x| self.eval_clenshaw(x)).collect();
        }
        const L: usize = 8;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(L) {
            let mut lanes = [chunk[0]; L];
            lanes[..chunk.len()].copy_from_slice(chunk);
            out.extend_from_slice(&self.eval_tail_lanes(lanes)[..chunk.len()]);
        }
        out
    }

    /// Clenshaw evaluation of the Chebyshev series.
    pub fn eval_clenshaw(&self, x: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + x * b1 - b2
    }

    /// `1/(κβx)`.
    pub fn target(&self, x: f64) -> f64 {
        1.0 / (self.kappa * self.beta * x)
    }

    /// `(max |p − 1/(κβx)|` on `[1/κ, 1]`, `max |p|` on `[−1, 1]`)` over
    /// Chebyshev-spaced grids with `points` nodes each.
    pub fn grid_check(&self, points: usize) -> (f64, f64) {
        let lo = 1.0 / self.kappa;
        let mut err: f64 = 0.0;
        let mut sup: f64 = 0.0;
        let n = points.max(2);
        for k in 0..n {
            let t = (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            let x = lo + (1.0 - lo) * 0.5 * (1.0 + t);
            err = err.max((self.eval(x) - self.target(x)).abs());
            sup = sup.max(self.eval(t).abs());
        }
        err = err.max((self.eval(lo) - self.target(lo)).abs());
        (err, sup)
    }
}

/// Applies `p` to the singular values of `U`'s block, producing an
/// encoding of the inverse with `α = κβ/α_U`.
///
/// The error bound `(κ/α_U)² ε_U + α_out ε′` holds when the true operand
/// has singular values at least `α_U/κ`.
pub fn qsvt_invert(u: &BlockEncoding, spec: &QsvtInversionSpec) -> Result<BlockEncoding> {
    let b = u.block();
    if b.nrows() != b.ncols() {
        return Err(Error::Dimension {
            callable: "qsvt_invert".into(),
            expected: b.nrows(),
            got: b.ncols(),
        });
    }
    let lower = 1.0 / spec.kappa;
    let svd = SVD::new(b.clone(), true, true);
    for &s in svd.singular_values.iter() {
        if s < lower * (1.0 - 1e-12) || s > 1.0 + 1e-12 {
            return Err(Error::SpectrumViolation { sigma: s, lower });
        }
    }
    let w = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let values = spec.eval_many(svd.singular_values.as_slice());
    let mut scaled = vt.transpose();
    for (mut col, v) in scaled.column_iter_mut().zip(values) {
        col *= v;
    }
    let block: DMatrix<f64> = scaled * w.transpose();
    let alpha = spec.kappa * spec.beta / u.alpha();
    let c = (spec.kappa / u.alpha()).powi(2);
    let eps = c * u.eps() + alpha * spec.eps_prime;
    BlockEncoding::from_parts(block, alpha, u.ancillas() + 1, eps)
}
