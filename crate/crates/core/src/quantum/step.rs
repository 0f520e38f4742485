use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::block_encoding::{be_add, be_mul, BlockEncoding, EncodeOptions, ProductErrorRule};
use super::ledger::{
    predict_normalization, propagate_error_budget, ErrorBudget, ErrorInputs, NormalizationInputs,
    NormalizationLedger,
};
use super::polynomial::{
    build_inversion_spec_with, qsvt_invert, PolynomialOptions, QsvtInversionSpec,
};
use crate::error::{Error, Result};
use crate::schur::{QpData, SchurSolution, SchurStepSolver, StepDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReadoutMode {
    #[default]
    Exact,
    /// Gaussian readout noise with standard deviation `α_Δz/√shots`.
    Sampled { shots: u64 },
}

/// Degree cap of the step backend; the simulation cost is linear in it.
pub const QUANTUM_DEGREE_CAP: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    pub eps_q: f64,
    pub eps_a: f64,
    pub eps_g: f64,
    pub eps_r: f64,
    pub eps_prime_q: f64,
    pub eps_prime_s: f64,
    pub readout: ReadoutMode,
    pub product_rule: ProductErrorRule,
    pub degree_cap: usize,
    /// Relative safety margin applied to the measured `κ`.
    pub kappa_margin: f64,
    /// Jacobi-equilibrate `Q` and row-normalize `𝒜` before encoding.
    pub equilibrate: bool,
    /// Steps whose error budget exceeds this are reported as failures.
    pub budget_cap: f64,
    /// Steps whose success probability falls below this are failures.
    pub p_succ_floor: f64,
    pub seed: u64,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self {
            eps_q: 0.0,
            eps_a: 0.0,
            eps_g: 0.0,
            eps_r: 0.0,
            eps_prime_q: 1e-10,
            eps_prime_s: 1e-10,
            readout: ReadoutMode::Exact,
            product_rule: ProductErrorRule::Standard,
            degree_cap: QUANTUM_DEGREE_CAP,
            kappa_margin: 1e-6,
            equilibrate: true,
            budget_cap: f64::INFINITY,
            p_succ_floor: 0.0,
            seed: 0,
        }
    }
}

impl QuantumConfig {
    pub fn error_inputs(&self) -> ErrorInputs {
        ErrorInputs {
            eps_q: self.eps_q,
            eps_a: self.eps_a,
            eps_g: self.eps_g,
            eps_r: self.eps_r,
            eps_prime_q: self.eps_prime_q,
            eps_prime_s: self.eps_prime_s,
        }
    }
}

/// Every intermediate encoding of one simulated step, in circuit order.
#[derive(Debug, Clone)]
pub struct QuantumTrace {
    pub nodes: Vec<(&'static str, BlockEncoding)>,
    pub spec_q: QsvtInversionSpec,
    pub spec_s: QsvtInversionSpec,
    pub ledger: NormalizationLedger,
    pub budget: ErrorBudget,
    /// Step and multipliers in the (possibly equilibrated) encoded coordinates.
    pub dz_encoded: DVector<f64>,
    pub lambda_encoded: DVector<f64>,
    pub dz: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Column and row scalings `(D, E)` when equilibration is on.
    pub scaling: Option<(DVector<f64>, DVector<f64>)>,
}

impl QuantumTrace {
    pub fn node(&self, name: &str) -> Option<&BlockEncoding> {
        self.nodes.iter().find(|(n, _)| *n == name).map(|(_, e)| e)
    }

    /// Bound on `‖Δz − Δz_Newton‖` in the original coordinates.
    pub fn accuracy_bound(&self) -> f64 {
        let scale = self.scaling.as_ref().map_or(1.0, |(d, _)| d.amax());
        scale * self.budget.eps_dz
    }
}

fn kappa_for(u: &BlockEncoding, margin: f64, what: &'static str) -> Result<f64> {
    let sigma_min = u
        .block()
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let floor = u.alpha() * sigma_min - u.eps();
    if !(floor > 0.0) {
        return Err(Error::Singular {
            what,
            detail: format!(
                "encoding error {:e} is not below the smallest singular value {:e}",
                u.eps(),
                u.alpha() * sigma_min
            ),
        });
    }
    Ok((u.alpha() / floor * (1.0 + margin)).max(1.0))
}

fn equilibrate(qp: &QpData) -> (QpData, DVector<f64>, DVector<f64>) {
    let d = qp.q.map_diagonal(|v| 1.0 / v.sqrt());
    let mut q = qp.q.clone();
    for i in 0..q.nrows() {
        for j in 0..q.ncols() {
            q[(i, j)] *= d[i] * d[j];
        }
    }
    let mut a = qp.a.clone();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let e = DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| {
            let n = row.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        }),
    );
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= e[i];
    }
    let g = qp.g.component_mul(&d);
    let r = qp.r.component_mul(&e);
    let scaled = QpData {
        q,
        a,
        g,
        r,
        damping: qp.damping,
    };
    (scaled, d, e)
}

/// Runs the simulated circuit and returns every intermediate encoding.
pub fn quantum_schur_trace(qp: &QpData, cfg: &QuantumConfig, call: u64) -> Result<QuantumTrace> {
    if qp.dual_dim() == 0 {
        return Err(Error::Precondition(
            "the quantum Schur step needs at least one equality constraint".into(),
        ));
    }
    let (work, scaling) = if cfg.equilibrate {
        let (w, d, e) = equilibrate(qp);
        (w, Some((d, e)))
    } else {
        (qp.clone(), None)
    };
    let rule = cfg.product_rule;
    let base = cfg.seed ^ call.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let opts = |eps: f64, k: u64| EncodeOptions::with_eps(eps, base.wrapping_add(k));

    let u_q = BlockEncoding::encode(&work.q, &opts(cfg.eps_q, 1))?;
    let u_a = BlockEncoding::encode(&work.a, &opts(cfg.eps_a, 2))?;
    let u_g = BlockEncoding::encode_vector(&work.g, &opts(cfg.eps_g, 3))?;
    let u_r = BlockEncoding::encode_vector(&work.r, &opts(cfg.eps_r, 4))?;

    let poly = PolynomialOptions {
        degree_cap: cfg.degree_cap,
        verify_grid: 0,
    };
    let kappa_q = kappa_for(&u_q, cfg.kappa_margin, "Q")?;
    let spec_q = build_inversion_spec_with(kappa_q, cfg.eps_prime_q, &poly)?;
    let u_qinv = qsvt_invert(&u_q, &spec_q)?;

    let u_at = u_a.adjoint();
    let u_aqinv = be_mul(&u_a, &u_qinv, rule)?;
    let u_s = be_mul(&u_aqinv, &u_at, rule)?;
    let u_aqg = be_mul(&u_aqinv, &u_g, rule)?;
    let u_b = be_add(&u_r.negated(), &u_aqg.negated())?;

    let kappa_s = kappa_for(&u_s, cfg.kappa_margin, "S")?;
    let spec_s = build_inversion_spec_with(kappa_s, cfg.eps_prime_s, &poly)?;
    let u_sinv = qsvt_invert(&u_s, &spec_s)?;
    let u_lambda = be_mul(&u_sinv, &u_b, rule)?;
    let u_atl = be_mul(&u_at, &u_lambda, rule)?;
    let u_1 = be_add(&u_g, &u_atl)?;
    let u_dz = be_mul(&u_qinv, &u_1, rule)?.negated();

    let ledger = predict_normalization(NormalizationInputs {
        alpha_q: u_q.alpha(),
        alpha_a: u_a.alpha(),
        alpha_g: u_g.alpha(),
        alpha_r: u_r.alpha(),
        kappa_q: spec_q.kappa,
        beta_q: spec_q.beta,
        kappa_s: spec_s.kappa,
        beta_s: spec_s.beta,
    });
    let budget = propagate_error_budget(
        ErrorInputs {
            eps_q: u_q.eps(),
            eps_a: u_a.eps(),
            eps_g: u_g.eps(),
            eps_r: u_r.eps(),
            eps_prime_q: cfg.eps_prime_q,
            eps_prime_s: cfg.eps_prime_s,
        },
        &ledger,
        rule,
    );

    let dz_encoded = u_dz.block().column(0).into_owned() * u_dz.alpha();
    let lambda_encoded = u_lambda.block().column(0).into_owned() * u_lambda.alpha();
    let ledger = ledger.with_readout(dz_encoded.norm());

    let (dz, lambda) = match &scaling {
        Some((d, e)) => (dz_encoded.component_mul(d), lambda_encoded.component_mul(e)),
        None => (dz_encoded.clone(), lambda_encoded.clone()),
    };

    let nodes = vec![
        ("Q", u_q),
        ("A", u_a),
        ("g", u_g),
        ("r", u_r),
        ("Qinv", u_qinv),
        ("AQinv", u_aqinv),
        ("S", u_s),
        ("AQinv_g", u_aqg),
        ("b", u_b),
        ("Sinv", u_sinv),
        ("lambda", u_lambda),
        ("At_lambda", u_atl),
        ("one", u_1),
        ("dz", u_dz),
    ];
    Ok(QuantumTrace {
        nodes,
        spec_q,
        spec_s,
        ledger,
        budget,
        dz_encoded,
        lambda_encoded,
        dz,
        lambda,
        scaling,
    })
}

/// Adds the sampled-readout noise to an exact readout.
pub fn sampled_readout(
    exact: &DVector<f64>,
    alpha_dz: f64,
    shots: u64,
    seed: u64,
) -> Result<DVector<f64>> {
    if shots == 0 {
        return Err(Error::Config(
            "sampled readout needs at least one shot".into(),
        ));
    }
    let sd = alpha_dz / (shots as f64).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(exact.map(|v| v + normal.sample(&mut rng)))
}

/// Simulated quantum backend for the Schur step.
#[derive(Debug, Clone)]
pub struct QuantumSchurSolver {
    cfg: QuantumConfig,
    calls: u64,
    last: Option<Box<QuantumTrace>>,
}

impl QuantumSchurSolver {
    pub fn new(cfg: QuantumConfig) -> Self {
        Self {
            cfg,
            calls: 0,
            last: None,
        }
    }

    pub fn config(&self) -> &QuantumConfig {
        &self.cfg
    }

    /// Trace of the most recent successful step.
    pub fn last_trace(&self) -> Option<&QuantumTrace> {
        self.last.as_deref()
    }
}

/// One simulated step, `call` selecting the noise streams.
pub fn quantum_schur_step(
    qp: &QpData,
    cfg: &QuantumConfig,
    call: u64,
) -> Result<(SchurSolution, QuantumTrace)> {
    let trace = quantum_schur_trace(qp, cfg, call)?;
    let mut bound = trace.accuracy_bound();
    if bound > cfg.budget_cap {
        return Err(Error::SolverFailure(format!(
            "step error budget {bound:e} exceeds the usability cap {:e}",
            cfg.budget_cap
        )));
    }
    let p_succ = trace.ledger.p_succ;
    if p_succ < cfg.p_succ_floor {
        return Err(Error::SolverFailure(format!(
            "success probability {p_succ:e} is below the floor {:e}",
            cfg.p_succ_floor
        )));
    }
    let dz = match cfg.readout {
        ReadoutMode::Exact => trace.dz.clone(),
        ReadoutMode::Sampled { shots } => {
            let seed = cfg.seed ^ call.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ 0x5EED;
            let noisy = sampled_readout(&trace.dz_encoded, trace.ledger.alpha_dz, shots, seed)?;
            bound += 3.0 * trace.ledger.alpha_dz * (noisy.len() as f64 / shots as f64).sqrt();
            match &trace.scaling {
                Some((d, _)) => noisy.component_mul(d),
                None => noisy,
            }
        }
    };
    let diagnostics = StepDiagnostics {
        accuracy_bound: bound,
        perturbation_norm: None,
        alpha_dz: Some(trace.ledger.alpha_dz),
        p_succ: Some(p_succ),
        expected_repetitions: Some(trace.ledger.expected_repetitions),
        degree_q: Some(trace.spec_q.degree),
        degree_s: Some(trace.spec_s.degree),
        kappa_q: Some(trace.spec_q.kappa),
        kappa_s: Some(trace.spec_s.kappa),
    };
    let sol = SchurSolution::new(qp, dz, trace.lambda.clone(), diagnostics);
    Ok((sol, trace))
}

impl SchurStepSolver for QuantumSchurSolver {
    fn name(&self) -> String {
        "quantum".into()
    }

    fn declared_accuracy(&self) -> Option<f64> {
        None
    }

    fn step(&mut self, qp: &QpData) -> Result<SchurSolution> {
        let call = self.calls;
        self.calls += 1;
        let (sol, trace) = quantum_schur_step(qp, &self.cfg, call)?;
        self.last = Some(Box::new(trace));
        Ok(sol)
    }
}
