use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, next_power_of_two, spectral_norm};

/// Error composition rule for products of block encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductErrorRule {
    /// `α_U ε_V + α_V ε_U`
    #[default]
    Standard,
    /// `α_U ε_U + α_V ε_V`
    AsPrinted,
}

impl ProductErrorRule {
    pub fn compose(self, alpha_u: f64, eps_u: f64, alpha_v: f64, eps_v: f64) -> f64 {
        match self {
            ProductErrorRule::Standard => alpha_u * eps_v + alpha_v * eps_u,
            ProductErrorRule::AsPrinted => alpha_u * eps_u + alpha_v * eps_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    /// Norm of the representation error injected into the block.
    pub target_eps: f64,
    /// Normalization override; defaults to `‖A‖ + target_eps`.
    pub alpha: Option<f64>,
    pub ancillas: u32,
    pub seed: u64,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            target_eps: 0.0,
            alpha: None,
            ancillas: 1,
            seed: 0,
        }
    }
}

impl EncodeOptions {
    pub fn with_eps(target_eps: f64, seed: u64) -> Self {
        Self {
            target_eps,
            seed,
            ..Self::default()
        }
    }
}

/// Simulated `(α, a, ε)`-block encoding: `‖A − α·B‖ ≤ ε` where `B` is the
/// top-left logical block of a `2ˢ × 2ˢ` embedding.
///
/// Only the logical block is stored; the padded embedding is zero outside it.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    block: DMatrix<f64>,
    dim: usize,
    alpha: f64,
    ancillas: u32,
    eps: f64,
}

impl BlockEncoding {
    /// Builds an encoding from raw parts. `alpha` must be positive and
    /// finite and the block must fit in `dim`.
    pub fn from_parts(block: DMatrix<f64>, alpha: f64, ancillas: u32, eps: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidNormalization(alpha));
        }
        let dim = next_power_of_two(block.nrows().max(block.ncols()));
        Ok(Self {
            block,
            dim,
            alpha,
            ancillas,
            eps,
        })
    }

    pub fn encode(op: &DMatrix<f64>, opts: &EncodeOptions) -> Result<Self> {
        if op.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("operand has non-finite entries".into()));
        }
        if !(opts.target_eps >= 0.0) || !opts.target_eps.is_finite() {
            return Err(Error::Config(format!(
                "encoding error target must be finite and ≥ 0, got {}",
                opts.target_eps
            )));
        }
        let norm = spectral_norm(op);
        let alpha = match opts.alpha {
            Some(a) => a,
            None if norm == 0.0 => 1.0,
            None => norm + opts.target_eps,
        };
        if !(alpha > 0.0) || !alpha.is_finite() || alpha < norm * (1.0 - 1e-12) {
            return Err(Error::InvalidNormalization(alpha));
        }
        let mut perturbed = op.clone();
        if opts.target_eps > 0.0 && op.nrows() > 0 && op.ncols() > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let e = gaussian_matrix(op.nrows(), op.ncols(), &mut rng);
            let radius = (1.0 - rand::Rng::random::<f64>(&mut rng)) * opts.target_eps;
            let en = spectral_norm(&e);
            if en > 0.0 {
                // Shrink slightly so rounding cannot push the norm past ε.
                perturbed += e * (radius * (1.0 - 1e-12) / en);
            }
        }
        Self::from_parts(perturbed / alpha, alpha, opts.ancillas, opts.target_eps)
    }

    /// Encodes a vector as the first column of a block.
    pub fn encode_vector(v: &DVector<f64>, opts: &EncodeOptions) -> Result<Self> {
        Self::encode(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()), opts)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ancillas(&self) -> u32 {
        self.ancillas
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn logical_rows(&self) -> usize {
        self.block.nrows()
    }

    pub fn logical_cols(&self) -> usize {
        self.block.ncols()
    }

    /// Side length `2ˢ` of the padded embedding.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `s` with `2ˢ = dim`.
    pub fn system_qubits(&self) -> u32 {
        self.dim.trailing_zeros()
    }

    /// Top-left logical block.
    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    /// The zero-padded `2ˢ × 2ˢ` embedding.
    pub fn embedded(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dim, self.dim);
        e.view_mut((0, 0), self.block.shape())
            .copy_from(&self.block);
        e
    }

    /// `α·B`, the operand this encoding represents.
    pub fn operand_estimate(&self) -> DMatrix<f64> {
        &self.block * self.alpha
    }

    /// `‖A − α·B‖₂`.
    pub fn definition_gap(&self, true_op: &DMatrix<f64>) -> f64 {
        spectral_norm(&(true_op - self.operand_estimate()))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            block: self.block.transpose(),
            ..self.clone()
        }
    }

    /// Sign absorbed into the block; `α` and `ε` are unchanged.
    pub fn negated(&self) -> Self {
        Self {
            block: -&self.block,
            ..self.clone()
        }
    }
}

/// LCU sum: `α = α_U + α_V`, `a = max(a_U, a_V) + 1`, `ε = ε_U + ε_V`.
pub fn be_add(u: &BlockEncoding, v: &BlockEncoding) -> Result<BlockEncoding> {
    if u.block.shape() != v.block.shape() {
        return Err(Error::Dimension {
            callable: "be_add".into(),
            expected: u.block.nrows() * u.block.ncols(),
            got: v.block.nrows() * v.block.ncols(),
        });
    }
    let alpha = u.alpha + v.alpha;
    let block = (&u.block * u.alpha + &v.block * v.alpha) / alpha;
    let mut out =
        BlockEncoding::from_parts(block, alpha, u.ancillas.max(v.ancillas) + 1, u.eps + v.eps)?;
    out.dim = out.dim.max(u.dim).max(v.dim);
    Ok(out)
}

/// Product: `α = α_Uα_V`, `a = a_U + a_V`, `ε` per `rule`.
pub fn be_mul(
    u: &BlockEncoding,
    v: &BlockEncoding,
    rule: ProductErrorRule,
) -> Result<BlockEncoding> {
    if u.block.ncols() != v.block.nrows() {
        return Err(Error::Dimension {
            callable: "be_mul".into(),
            expected: u.block.ncols(),
            got: v.block.nrows(),
        });
    }
    let eps = rule.compose(u.alpha, u.eps, v.alpha, v.eps);
    let mut out = BlockEncoding::from_parts(
        &u.block * &v.block,
        u.alpha * v.alpha,
        u.ancillas + v.ancillas,
        eps,
    )?;
    out.dim = out.dim.max(u.dim).max(v.dim);
    Ok(out)
}
