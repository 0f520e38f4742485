//! Normalization and error propagation through the Schur-step circuit.

use serde::{Deserialize, Serialize};

use super::block_encoding::ProductErrorRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInputs {
    pub alpha_q: f64,
    pub alpha_a: f64,
    pub alpha_g: f64,
    pub alpha_r: f64,
    pub kappa_q: f64,
    pub beta_q: f64,
    pub kappa_s: f64,
    pub beta_s: f64,
}

impl NormalizationInputs {
    pub fn ones() -> Self {
        Self {
            alpha_q: 1.0,
            alpha_a: 1.0,
            alpha_g: 1.0,
            alpha_r: 1.0,
            kappa_q: 1.0,
            beta_q: 1.0,
            kappa_s: 1.0,
            beta_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationLedger {
    pub inputs: NormalizationInputs,
    pub alpha_qinv: f64,
    pub alpha_s: f64,
    pub alpha_b: f64,
    pub alpha_sinv: f64,
    pub alpha_lambda: f64,
    pub alpha_1: f64,
    pub alpha_dz: f64,
    /// `‖Δz‖²/α_Δz²`; `NaN` until a readout is recorded.
    pub p_succ: f64,
    pub expected_repetitions: f64,
}

/// Closed-form `α_Δz` with every intermediate substituted.
pub fn closed_form_alpha_dz(i: &NormalizationInputs) -> f64 {
    let kq = i.kappa_q * i.beta_q;
    let ks = i.kappa_s * i.beta_s;
    kq / i.alpha_q
        * (i.alpha_g
            + i.alpha_a * ks / (i.alpha_a * i.alpha_a) * i.alpha_q / kq
                * (i.alpha_r + i.alpha_a * kq / i.alpha_q * i.alpha_g))
}

pub fn predict_normalization(inputs: NormalizationInputs) -> NormalizationLedger {
    let i = inputs;
    let alpha_qinv = i.kappa_q * i.beta_q / i.alpha_q;
    let alpha_s = i.alpha_a * alpha_qinv * i.alpha_a;
    let alpha_b = i.alpha_r + i.alpha_a * alpha_qinv * i.alpha_g;
    let alpha_sinv = i.kappa_s * i.beta_s / alpha_s;
    let alpha_lambda = alpha_sinv * alpha_b;
    let alpha_1 = i.alpha_g + i.alpha_a * alpha_lambda;
    let alpha_dz = alpha_qinv * alpha_1;
    debug_assert!(
        (alpha_dz - closed_form_alpha_dz(&i)).abs() <= 1e-10 * alpha_dz.abs().max(1e-300),
        "recurrence and closed form disagree"
    );
    NormalizationLedger {
        inputs,
        alpha_qinv,
        alpha_s,
        alpha_b,
        alpha_sinv,
        alpha_lambda,
        alpha_1,
        alpha_dz,
        p_succ: f64::NAN,
        expected_repetitions: f64::NAN,
    }
}

impl NormalizationLedger {
    /// Records the success probability of post-selecting the step vector.
    pub fn with_readout(mut self, dz_norm: f64) -> Self {
        self.p_succ = (dz_norm / self.alpha_dz).powi(2);
        self.expected_repetitions = 1.0 / self.p_succ;
        self
    }
}

/// Input errors of the encodings and the two inversion polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorInputs {
    pub eps_q: f64,
    pub eps_a: f64,
    pub eps_g: f64,
    pub eps_r: f64,
    pub eps_prime_q: f64,
    pub eps_prime_s: f64,
}

impl ErrorInputs {
    fn as_array(&self) -> [f64; 6] {
        [
            self.eps_q,
            self.eps_a,
            self.eps_g,
            self.eps_r,
            self.eps_prime_q,
            self.eps_prime_s,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            eps_q: a[0],
            eps_a: a[1],
            eps_g: a[2],
            eps_r: a[3],
            eps_prime_q: a[4],
            eps_prime_s: a[5],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.as_array().map(|v| v * factor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub inputs: ErrorInputs,
    pub rule: ProductErrorRule,
    /// `(κ_Q/α_Q)²`, multiplier of `ε_Q` in the inverse.
    pub c_qinv: f64,
    /// `(κ_S/α_S)²`, multiplier of `ε_S` in the inverse.
    pub c_sinv: f64,
    pub eps_qinv: f64,
    pub eps_aqinv: f64,
    pub eps_s: f64,
    pub eps_b: f64,
    pub eps_sinv: f64,
    pub eps_lambda: f64,
    pub eps_1: f64,
    pub eps_dz: f64,
    /// `∂ε_Δz/∂(ε_Q, ε_𝒜, ε_g, ε_r, ε′_Q, ε′_S)`; the budget is
    /// `Σ sensitivities[k]·inputs[k]`.
    pub sensitivities: [f64; 6],
}

fn chain(i: &ErrorInputs, l: &NormalizationLedger, rule: ProductErrorRule) -> ErrorBudget {
    let n = &l.inputs;
    let c_qinv = (n.kappa_q / n.alpha_q).powi(2);
    let c_sinv = (n.kappa_s / l.alpha_s).powi(2);
    let eps_qinv = c_qinv * i.eps_q + l.alpha_qinv * i.eps_prime_q;
    let alpha_aqinv = n.alpha_a * l.alpha_qinv;
    let eps_aqinv = rule.compose(n.alpha_a, i.eps_a, l.alpha_qinv, eps_qinv);
    let eps_s = rule.compose(alpha_aqinv, eps_aqinv, n.alpha_a, i.eps_a);
    let eps_aqg = rule.compose(alpha_aqinv, eps_aqinv, n.alpha_g, i.eps_g);
    let eps_b = i.eps_r + eps_aqg;
    let eps_sinv = c_sinv * eps_s + l.alpha_sinv * i.eps_prime_s;
    let eps_lambda = rule.compose(l.alpha_sinv, eps_sinv, l.alpha_b, eps_b);
    let eps_atl = rule.compose(n.alpha_a, i.eps_a, l.alpha_lambda, eps_lambda);
    let eps_1 = i.eps_g + eps_atl;
    let eps_dz = rule.compose(l.alpha_qinv, eps_qinv, l.alpha_1, eps_1);
    ErrorBudget {
        inputs: *i,
        rule,
        c_qinv,
        c_sinv,
        eps_qinv,
        eps_aqinv,
        eps_s,
        eps_b,
        eps_sinv,
        eps_lambda,
        eps_1,
        eps_dz,
        sensitivities: [0.0; 6],
    }
}

/// Propagates input errors through the circuit with the same composition
/// order as the simulation.
pub fn propagate_error_budget(
    inputs: ErrorInputs,
    ledger: &NormalizationLedger,
    rule: ProductErrorRule,
) -> ErrorBudget {
    let mut budget = chain(&inputs, ledger, rule);
    for k in 0..6 {
        let mut unit = [0.0; 6];
        unit[k] = 1.0;
        budget.sensitivities[k] = chain(&ErrorInputs::from_array(unit), ledger, rule).eps_dz;
    }
    budget
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ledger_chain() {
        let l = predict_normalization(NormalizationInputs::ones());
        assert_eq!(
            [
                l.alpha_qinv,
                l.alpha_s,
                l.alpha_b,
                l.alpha_sinv,
                l.alpha_lambda,
                l.alpha_1,
                l.alpha_dz
            ],
            [1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 3.0]
        );
    }

    #[test]
    fn hand_traced_ledger() {
        let l = predict_normalization(NormalizationInputs {
            alpha_q: 2.0,
            kappa_q: 4.0,
            kappa_s: 2.0,
            ..NormalizationInputs::ones()
        });
        assert_eq!(l.alpha_qinv, 2.0);
        assert_eq!(l.alpha_s, 2.0);
        assert_eq!(l.alpha_b, 3.0);
        assert_eq!(l.alpha_sinv, 1.0);
        assert_eq!(l.alpha_lambda, 3.0);
        assert_eq!(l.alpha_1, 4.0);
        assert_eq!(l.alpha_dz, 8.0);
    }

    #[test]
    fn readout_square_law() {
        let l = predict_normalization(NormalizationInputs::ones());
        let full = l.with_readout(3.0);
        assert_eq!(full.p_succ, 1.0);
        assert_eq!(full.expected_repetitions, 1.0);
        let half = l.with_readout(1.5);
        assert_eq!(half.p_succ, 0.25);
        assert_eq!(half.expected_repetitions, 4.0);
    }

    #[test]
    fn zero_inputs_give_zero_budget() {
        let l = predict_normalization(NormalizationInputs::ones());
        let b = propagate_error_budget(ErrorInputs::default(), &l, ProductErrorRule::Standard);
        assert_eq!(b.eps_dz, 0.0);
    }

    #[test]
    fn budget_is_linear_in_inputs() {
        let l = predict_normalization(NormalizationInputs {
            alpha_q: 1.7,
            alpha_a: 0.8,
            alpha_g: 2.2,
            alpha_r: 0.3,
            kappa_q: 5.0,
            beta_q: 2.0,
            kappa_s: 9.0,
            beta_s: 4.0,
        });
        let i = ErrorInputs {
            eps_q: 1e-6,
            eps_a: 3e-7,
            eps_g: 2e-6,
            eps_r: 1e-7,
            eps_prime_q: 1e-8,
            eps_prime_s: 5e-9,
        };
        let b1 = propagate_error_budget(i, &l, ProductErrorRule::Standard);
        let b2 = propagate_error_budget(i.scaled(2.0), &l, ProductErrorRule::Standard);
        assert!((b2.eps_dz - 2.0 * b1.eps_dz).abs() <= 1e-12 * b1.eps_dz);
        let lin: f64 = b1
            .sensitivities
            .iter()
            .zip(i.as_array())
            .map(|(c, e)| c * e)
            .sum();
        assert!((lin - b1.eps_dz).abs() <= 1e-12 * b1.eps_dz);
    }
}
