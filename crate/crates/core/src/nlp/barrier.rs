use serde::{Deserialize, Serialize};

/// Barrier functions `φ` defined on `s < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    #[default]
    Logarithmic,
}

impl BarrierKind {
    /// `φ(s)`; `+∞` for `s ≥ 0`.
    pub fn phi(self, s: f64) -> f64 {
        match self {
            BarrierKind::Logarithmic => {
                if s < 0.0 {
                    -(-s).ln()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn dphi(self, s: f64) -> f64 {
        match self {
            BarrierKind::Logarithmic => -1.0 / s,
        }
    }

    pub fn d2phi(self, s: f64) -> f64 {
        match self {
            BarrierKind::Logarithmic => 1.0 / (s * s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub mu: f64,
    pub kind: BarrierKind,
    /// Initial Hessian damping; increased automatically when `Q` is not
    /// positive definite.
    pub sigma: f64,
}

impl BarrierConfig {
    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            kind: BarrierKind::Logarithmic,
            sigma: 0.0,
        }
    }
}
