//! Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hybrid_sqp::harness::{
    cmd_compare, cmd_sweep, linear_fit, max_accuracy_bound, CompareOutcome, ExperimentConfig,
};
use hybrid_sqp::models::toy_problem;
use hybrid_sqp::quantum::{
    be_add, be_mul, build_inversion_spec, closed_form_alpha_dz, predict_normalization, qsvt_invert,
    quantum_schur_step, BlockEncoding, EncodeOptions, NormalizationInputs, ProductErrorRule,
    QuantumConfig,
};
use hybrid_sqp::schur::exact_step;
use hybrid_sqp::schur::ExactSchurSolver;
use hybrid_sqp::sqp::{solve, SolveReport, SqpConfig, Termination};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::{dense_kkt, gaussian, random_qp, rng};

type Outcome = Result<String, String>;

fn spectral(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Iterates with `H ≥ 0` across every run of criteria 6 to 8.
#[derive(Default)]
struct FeasibilityAudit {
    runs: usize,
    iterates: usize,
    violations: usize,
    worst: Option<f64>,
}

impl FeasibilityAudit {
    fn record(&mut self, report: &SolveReport) {
        self.runs += 1;
        for r in &report.iterates {
            self.iterates += 1;
            if r.max_ineq.is_finite() {
                self.worst = Some(self.worst.map_or(r.max_ineq, |w| w.max(r.max_ineq)));
            }
            if r.max_ineq >= 0.0 {
                self.violations += 1;
            }
        }
    }
}

fn kkt_oracle() -> Outcome {
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let nz = r.random_range(2..=24);
        let m = r.random_range(1..=nz.min(8));
        let qp = random_qp(nz, m, &mut r);
        let sol = exact_step(&qp).map_err(|e| format!("case {case}: {e}"))?;
        let (dz, lambda) = dense_kkt(&qp);
        let scale = 1.0 + qp.g.norm() + qp.r.norm();
        let err = (&sol.dz - dz).norm().max((&sol.lambda - lambda).norm()) / scale;
        worst = worst.max(err);
        check(
            err <= 1e-9,
            format!("case {case} (nz {nz}, m {m}): relative error {err:e}"),
        )?;
    }
    Ok(format!("100 instances, worst relative error {worst:.2e}"))
}

fn encoding_laws() -> Outcome {
    let mut r = rng(2002);
    let encode = |a: &DMatrix<f64>, eps: f64, seed: u64| {
        BlockEncoding::encode(a, &EncodeOptions::with_eps(eps, seed)).map_err(|e| e.to_string())
    };
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let (n, k, p) = (
            r.random_range(1..6),
            r.random_range(1..6),
            r.random_range(1..6),
        );
        let (eu, ev) = (r.random::<f64>() * 1e-2, r.random::<f64>() * 1e-2);

        let (a, b) = (gaussian(n, k, &mut r), gaussian(k, p, &mut r));
        let (u, v) = (encode(&a, eu, 2 * case)?, encode(&b, ev, 2 * case + 1)?);
        let w = be_mul(&u, &v, ProductErrorRule::Standard).map_err(|e| e.to_string())?;
        let gap = spectral(&(&a * &b - w.operand_estimate()));
        worst = worst.max(gap / w.eps().max(1e-300));
        check(
            gap <= w.eps() * (1.0 + 1e-9) + 1e-12 * w.alpha(),
            format!("product {case}: gap {gap:e} > {:e}", w.eps()),
        )?;
        check(
            w.alpha() == u.alpha() * v.alpha(),
            format!("product {case}: α not multiplicative"),
        )?;

        let (c, d) = (gaussian(n, k, &mut r), gaussian(n, k, &mut r));
        let (u, v) = (encode(&c, eu, 2 * case)?, encode(&d, ev, 2 * case + 1)?);
        let w = be_add(&u, &v).map_err(|e| e.to_string())?;
        let gap = spectral(&(&c + &d - w.operand_estimate()));
        worst = worst.max(gap / w.eps().max(1e-300));
        check(
            gap <= w.eps() * (1.0 + 1e-9) + 1e-12 * w.alpha(),
            format!("sum {case}: gap {gap:e} > {:e}", w.eps()),
        )?;
        check(
            w.alpha() == u.alpha() + v.alpha() && w.eps() == u.eps() + v.eps(),
            format!("sum {case}: (α, ε) not additive"),
        )?;

        let mut pick = |lo: f64, hi: f64| lo + (hi - lo) * r.random::<f64>();
        let inputs = NormalizationInputs {
            alpha_q: pick(0.1, 10.0),
            alpha_a: pick(0.1, 10.0),
            alpha_g: pick(0.1, 10.0),
            alpha_r: pick(0.1, 10.0),
            kappa_q: pick(1.0, 100.0),
            beta_q: pick(1.0, 8.0),
            kappa_s: pick(1.0, 100.0),
            beta_s: pick(1.0, 8.0),
        };
        let l = predict_normalization(inputs);
        let closed = closed_form_alpha_dz(&inputs);
        check(
            (l.alpha_dz - closed).abs() <= 1e-13 * l.alpha_dz,
            format!(
                "ledger {case}: recurrence {} vs closed form {closed}",
                l.alpha_dz
            ),
        )?;
        check(
            l.alpha_dz == l.alpha_qinv * l.alpha_1 && l.alpha_lambda == l.alpha_sinv * l.alpha_b,
            format!("ledger {case}: factors do not compose"),
        )?;
    }
    Ok(format!("200 pairs, worst gap/ε {worst:.3}"))
}

/// `A = V diag(λ) Vᵀ` with `λ₁ = 1/κ`, `λₙ = 1`, orthogonal `V` from a QR of a Gaussian.
fn spd_with_endpoints(n: usize, kappa: f64, r: &mut impl Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let v = gaussian(n, n, r).qr().q();
    let mut eig: Vec<f64> = (0..n)
        .map(|_| 1.0 / kappa + (1.0 - 1.0 / kappa) * r.random::<f64>())
        .collect();
    eig[0] = 1.0 / kappa;
    if n > 1 {
        eig[n - 1] = 1.0;
    }
    let d = DVector::from_vec(eig);
    let a = &v * DMatrix::from_diagonal(&d) * v.transpose();
    let inv = &v * DMatrix::from_diagonal(&d.map(|x| 1.0 / x)) * v.transpose();
    (a, inv)
}

fn qsvt_accuracy() -> Outcome {
    let kappas = [2.0, 4.0, 8.0, 16.0];
    let mut r = rng(3003);
    let mut worst = 0.0f64;
    let mut fits = Vec::new();
    for eps in [1e-4, 1e-6, 1e-8] {
        let mut degrees = Vec::new();
        for &kappa in &kappas {
            let spec = build_inversion_spec(kappa, eps).map_err(|e| e.to_string())?;
            degrees.push(spec.degree as f64);
            let bound = 10.0 * kappa * spec.beta * eps;
            for trial in 0..3 {
                let n = r.random_range(2..=8);
                let (a, exact) = spd_with_endpoints(n, kappa, &mut r);
                let u = BlockEncoding::encode(
                    &a,
                    &EncodeOptions {
                        alpha: Some(1.0),
                        ..Default::default()
                    },
                )
                .map_err(|e| e.to_string())?;
                let inv = qsvt_invert(&u, &spec).map_err(|e| e.to_string())?;
                let err = spectral(&(inv.block() * inv.alpha() - &exact));
                worst = worst.max(err / bound);
                check(
                    err <= bound,
                    format!("κ {kappa}, ε′ {eps:e}, trial {trial}: {err:e} > {bound:e}"),
                )?;
            }
        }
        let (_, _, r2) = linear_fit(&kappas, &degrees);
        check(r2 >= 0.95, format!("ε′ {eps:e}: degree-vs-κ R² {r2:.4}"))?;
        fits.push(format!("{r2:.4}"));
    }
    Ok(format!(
        "worst err/bound {worst:.2e}, R² [{}]",
        fits.join(", ")
    ))
}

fn error_budget() -> Outcome {
    let mut r = rng(4004);
    let mut worst = 0.0f64;
    let mut held = 0;
    for case in 0..50u64 {
        let nz = r.random_range(2..=8);
        let m = r.random_range(1..=nz.min(4));
        let qp = random_qp(nz, m, &mut r);
        let mut pick = |lo: f64, hi: f64| lo * (hi / lo).powf(r.random::<f64>());
        let cfg = QuantumConfig {
            eps_q: pick(1e-11, 1e-6),
            eps_a: pick(1e-11, 1e-6),
            eps_g: pick(1e-11, 1e-6),
            eps_r: pick(1e-11, 1e-6),
            eps_prime_q: pick(1e-10, 1e-4),
            eps_prime_s: pick(1e-10, 1e-4),
            equilibrate: false,
            seed: case,
            ..QuantumConfig::default()
        };
        let (sol, trace) =
            quantum_schur_step(&qp, &cfg, case).map_err(|e| format!("case {case}: {e}"))?;
        let exact = exact_step(&qp).map_err(|e| e.to_string())?;
        let err = (&sol.dz - &exact.dz).norm();
        worst = worst.max(err / trace.budget.eps_dz);
        if err <= trace.budget.eps_dz {
            held += 1;
        }
    }
    check(held == 50, format!("bound held in {held}/50 cases"))?;
    Ok(format!("50/50 within budget, worst err/eps_dz {worst:.2e}"))
}

fn success_probability() -> Outcome {
    let mut r = rng(5005);
    for case in 0..20u64 {
        let nz = r.random_range(2..=10);
        let m = r.random_range(1..=nz.min(4));
        let qp = random_qp(nz, m, &mut r);
        let (sol, trace) =
            quantum_schur_step(&qp, &QuantumConfig::default(), case).map_err(|e| e.to_string())?;
        let d = &sol.diagnostics;
        let (p, alpha, reps) = (
            d.p_succ.ok_or("missing p_succ")?,
            d.alpha_dz.ok_or("missing alpha_dz")?,
            d.expected_repetitions
                .ok_or("missing expected_repetitions")?,
        );
        let expected = (trace.dz_encoded.norm() / alpha).powi(2);
        check(
            (p - expected).abs() <= 1e-12,
            format!("case {case}: p_succ {p:e} vs {expected:e}"),
        )?;
        check(
            (reps * p - 1.0).abs() <= 1e-12,
            format!("case {case}: repetitions {reps} vs 1/{p:e}"),
        )?;
    }
    Ok("20 instances".into())
}

fn barrier_rate(audit: &mut FeasibilityAudit) -> Outcome {
    let b = toy_problem("box", None).map_err(|e| e.to_string())?;
    let nlp = b.transcribe().map_err(|e| e.to_string())?;
    let z0 = b.initial_guess(&nlp);
    let z_star = b
        .known_solution
        .clone()
        .ok_or("box problem has no known solution")?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 1..=7 {
        let mu = 10f64.powi(-k);
        let cfg = SqpConfig {
            mu0: mu,
            mu_min: mu,
            eps_opt: 0.0,
            floor_iterations: 50,
            ..SqpConfig::default()
        };
        let report = solve(&nlp, &z0, &cfg, &mut ExactSchurSolver).map_err(|e| e.to_string())?;
        audit.record(&report);
        check(
            report.termination.is_success(),
            format!("μ {mu:e}: {}", report.termination),
        )?;
        x.push(mu.ln());
        y.push((&report.final_z - &z_star).norm().ln());
    }
    let (slope, _, r2) = linear_fit(&x, &y);
    check((slope - 1.0).abs() <= 0.1, format!("slope {slope:.4}"))?;
    Ok(format!(
        "slope {slope:.4} over μ ∈ [1e-7, 1e-1], R² {r2:.6}"
    ))
}

fn iss_envelope(audit: &mut FeasibilityAudit, root: &Path) -> Outcome {
    let mut lines = Vec::new();
    for problem in ["toy:box", "toy:double_integrator"] {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.name = problem.into();
        cfg.output.dir = root.join(problem.replace(':', "_"));
        let sweep = cmd_sweep(&cfg).map_err(|e| format!("{problem}: {e}"))?;
        audit.record(&sweep.reference);
        for c in &sweep.cells {
            audit.runs += 1;
            audit.iterates += c.iterations + 1;
            audit.violations += c.infeasible_iterates;
        }
        let fit = sweep.fit.as_ref().ok_or(format!("{problem}: no fit"))?;
        check(
            fit.failed_cells == 0,
            format!("{problem}: {} failed cells", fit.failed_cells),
        )?;
        check(
            fit.envelope_violations == 0,
            format!("{problem}: {} envelope violations", fit.envelope_violations),
        )?;
        check(
            fit.overall.rho_hat < 1.0,
            format!("{problem}: ρ̂ = {}", fit.overall.rho_hat),
        )?;
        check(
            fit.seed_spread <= 0.2,
            format!("{problem}: seed spread {:.3}", fit.seed_spread),
        )?;
        lines.push(format!(
            "{problem}: {} cells, ρ̂ {:.2e}, C₂ {:.3}, C₃ {:.3}, spread {:.3}",
            sweep.cells.len(),
            fit.overall.rho_hat,
            fit.overall.c2,
            fit.overall.c3,
            fit.seed_spread
        ));
    }
    Ok(lines.join("; "))
}

fn hiv_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn hiv_reproduction(
    audit: &mut FeasibilityAudit,
    dir: &Path,
) -> Result<(String, CompareOutcome), String> {
    let cfg = hiv_config(dir);
    check(
        cfg.solver.quantum.eps_prime_q == 1e-10 && cfg.solver.quantum.eps_prime_s == 1e-10,
        "ε′ is not 1e-10",
    )?;
    let out = cmd_compare(&cfg).map_err(|e| e.to_string())?;
    audit.record(&out.a);
    audit.record(&out.b);
    let n = out.nlp.layout().horizon;
    check(n == 60, format!("horizon {n}"))?;
    for report in [&out.a, &out.b] {
        check(
            report.termination == Termination::Converged,
            format!("{}: {}", report.solver, report.termination),
        )?;
        let v: Vec<f64> = (0..=n)
            .map(|k| out.nlp.state(&report.final_z, k)[2])
            .collect();
        check(
            v[n - 40..].windows(2).all(|w| w[1] < w[0]),
            format!(
                "{}: viral load not decreasing over the last 40 steps",
                report.solver
            ),
        )?;
    }
    let eps_dz = max_accuracy_bound(&out.b);
    check(
        out.final_distance <= 100.0 * eps_dz,
        format!("distance {:e} > 100·{eps_dz:e}", out.final_distance),
    )?;
    let msg = format!(
        "{} / {} iterations, distance {:.2e}, eps_dz {:.3e}",
        out.a.iterations(),
        out.b.iterations(),
        out.final_distance,
        eps_dz
    );
    Ok((msg, out))
}

fn feasibility(audit: &FeasibilityAudit) -> Outcome {
    check(
        audit.violations == 0,
        format!(
            "{} of {} iterates have H ≥ 0",
            audit.violations, audit.iterates
        ),
    )?;
    Ok(format!(
        "{} runs, {} iterates, max H {:.2e}",
        audit.runs,
        audit.iterates,
        audit.worst.unwrap_or(f64::NEG_INFINITY)
    ))
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    cmd_compare(&hiv_config(second)).map_err(|e| e.to_string())?;
    let (a, b) = (csv_files(first)?, csv_files(second)?);
    check(!a.is_empty(), "no CSV output")?;
    let names = |f: &[(String, Vec<u8>)]| f.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    check(names(&a) == names(&b), "different CSV file sets")?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        check(x == y, format!("{name} differs"))?;
    }
    Ok(format!("{} CSV files identical", a.len()))
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn report(&mut self, id: usize, limit: Option<Duration>, start: Instant, outcome: Outcome) {
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(msg), Some(limit)) if took > limit => {
                Err(format!("{msg}; runtime {took:.1?} over {limit:?}"))
            }
            (o, _) => o,
        };
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                self.failures += 1;
                ("FAIL", m)
            }
        };
        println!(
            "criterion {id:>2}  {tag}  [{:>7.2}s]  {msg}",
            took.as_secs_f64()
        );
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut run = Runner { failures: 0 };
    let mut audit = FeasibilityAudit::default();
    let scratch = tempfile::tempdir().expect("temporary directory");

    let t = Instant::now();
    run.report(1, Some(secs(5)), t, kkt_oracle());
    let t = Instant::now();
    run.report(2, Some(secs(10)), t, encoding_laws());
    let t = Instant::now();
    run.report(3, Some(secs(60)), t, qsvt_accuracy());
    let t = Instant::now();
    run.report(4, Some(secs(60)), t, error_budget());
    let t = Instant::now();
    run.report(5, Some(secs(5)), t, success_probability());
    let t = Instant::now();
    run.report(6, Some(secs(10)), t, barrier_rate(&mut audit));
    let t = Instant::now();
    run.report(
        7,
        Some(secs(300)),
        t,
        iss_envelope(&mut audit, &scratch.path().join("sweep")),
    );

    let first = scratch.path().join("hiv_1");
    let t = Instant::now();
    let hiv = hiv_reproduction(&mut audit, &first);
    let hiv_ok = hiv.is_ok();
    run.report(8, Some(secs(600)), t, hiv.map(|(msg, _)| msg));

    let t = Instant::now();
    run.report(9, None, t, feasibility(&audit));

    let t = Instant::now();
    let outcome = if hiv_ok {
        determinism(&first, &scratch.path().join("hiv_2"))
    } else {
        Err("criterion 8 did not produce output".into())
    };
    run.report(10, None, t, outcome);

    if run.failures == 0 {
        println!("all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", run.failures);
        ExitCode::FAILURE
    }
}
