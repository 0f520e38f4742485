use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{spd_with_spectrum, spectral_norm};
use crate::nlp::TrajectoryNlp;
use crate::quantum::{
    build_inversion_spec_with, qsvt_invert, BlockEncoding, EncodeOptions, PolynomialOptions,
};
use crate::sqp::{solve, SolveReport};

use super::config::{ExperimentConfig, SolverSelector};
use super::iss::{linear_fit, run_sweep, SweepOutcome};
use super::table::{num, opt, opt_usize, Table};

pub const MANIFEST: &str = "manifest.json";

/// Collects output tables, writes them and the manifest.
struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, table: &Table) -> Result<()> {
        let bytes = table.to_bytes()?;
        self.files.insert(name.to_string(), hex_sha256(&bytes));
        std::fs::write(self.dir.join(name), bytes)?;
        Ok(())
    }

    fn finish(
        self,
        command: &str,
        cfg: &ExperimentConfig,
        summary: serde_json::Value,
    ) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            seed: u64,
            config: &'a ExperimentConfig,
            summary: serde_json::Value,
            files: &'a BTreeMap<String, String>,
        }
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
            summary,
            files: &self.files,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub const ITERATE_COLUMNS: [&str; 27] = [
    "i",
    "mu",
    "alpha",
    "alpha_max",
    "backtracks",
    "step_norm",
    "slope",
    "eq_norm",
    "grad_norm",
    "barrier_grad_norm",
    "stationarity",
    "objective",
    "merit_before",
    "merit_after",
    "max_ineq",
    "armijo_waiver",
    "solver_retried",
    "kkt_residual",
    "accuracy_bound",
    "perturbation_norm",
    "alpha_dz",
    "p_succ",
    "expected_repetitions",
    "degree_q",
    "degree_s",
    "kappa_q",
    "kappa_s",
];

pub fn iterates_table(report: &SolveReport) -> Table {
    let mut t = Table::new(&ITERATE_COLUMNS);
    for r in &report.iterates {
        let d = &r.diagnostics;
        t.push(vec![
            r.index.to_string(),
            num(r.mu),
            num(r.alpha),
            num(r.alpha_max),
            r.backtracks.to_string(),
            num(r.step_norm),
            num(r.slope),
            num(r.eq_norm),
            num(r.grad_norm),
            num(r.barrier_grad_norm),
            num(r.stationarity),
            num(r.objective),
            num(r.merit_before),
            num(r.merit_after),
            num(r.max_ineq),
            r.armijo_waiver
                .map(|w| w.as_str().to_string())
                .unwrap_or_default(),
            r.solver_retried.to_string(),
            num(r.kkt_residual),
            num(d.accuracy_bound),
            opt(d.perturbation_norm),
            opt(d.alpha_dz),
            opt(d.p_succ),
            opt(d.expected_repetitions),
            opt_usize(d.degree_q),
            opt_usize(d.degree_s),
            opt(d.kappa_q),
            opt(d.kappa_s),
        ]);
    }
    t
}

/// One row per stage `k = 0..=N` in reported units; inputs are empty at `k = N`.
pub fn trajectory_table(nlp: &TrajectoryNlp, z: &DVector<f64>) -> Table {
    let model = &nlp.ocp().model;
    let units = model.state_units();
    let mut header = vec!["k".to_string()];
    header.extend(model.state_labels());
    header.extend(model.input_labels());
    let mut t = Table::new(&header);
    let n = nlp.layout().horizon;
    for k in 0..=n {
        let mut row = vec![k.to_string()];
        row.extend(nlp.state(z, k).iter().zip(&units).map(|(x, s)| num(x * s)));
        if k < n {
            row.extend(nlp.input(z, k).iter().map(|u| num(*u)));
        } else {
            row.extend(std::iter::repeat_n(String::new(), model.input_dim()));
        }
        t.push(row);
    }
    t
}

/// Largest accuracy bound over a run's steps.
pub fn max_accuracy_bound(report: &SolveReport) -> f64 {
    report
        .iterates
        .iter()
        .map(|r| r.diagnostics.accuracy_bound)
        .fold(0.0, f64::max)
}

fn run_one(
    nlp: &TrajectoryNlp,
    z0: &DVector<f64>,
    cfg: &ExperimentConfig,
    selector: SolverSelector,
) -> Result<SolveReport> {
    let mut solver = selector.build(cfg.seed, &cfg.solver.quantum);
    solve(nlp, z0, &cfg.sqp, solver.as_mut())
}

fn termination_summary(report: &SolveReport) -> serde_json::Value {
    serde_json::json!({
        "solver": report.solver,
        "termination": report.termination.as_str(),
        "message": report.message,
        "iterations": report.iterations(),
        "final_objective": report.last().objective,
        "final_eq_norm": report.last().eq_norm,
        "final_stationarity": report.last().stationarity,
        "max_accuracy_bound": max_accuracy_bound(report),
    })
}

pub struct SolveOutcome {
    pub nlp: TrajectoryNlp,
    pub report: SolveReport,
}

/// Single solve without writing anything.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let bench = cfg.problem.benchmark()?;
    let nlp = bench.transcribe()?;
    let z0 = bench.initial_guess(&nlp);
    let report = run_one(&nlp, &z0, cfg, cfg.solver.selector()?)?;
    Ok(SolveOutcome { nlp, report })
}

/// Single solve; writes `iterates.csv`, `trajectory.csv` and the manifest.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<SolveOutcome> {
    let SolveOutcome { nlp, report } = run_solve(cfg)?;
    let mut out = Artifacts::new(&cfg.output.dir)?;
    out.write("iterates.csv", &iterates_table(&report))?;
    out.write("trajectory.csv", &trajectory_table(&nlp, &report.final_z))?;
    out.finish("solve", cfg, termination_summary(&report))?;
    Ok(SolveOutcome { nlp, report })
}

pub struct CompareOutcome {
    pub nlp: TrajectoryNlp,
    pub a: SolveReport,
    pub b: SolveReport,
    pub final_distance: f64,
}

/// Runs two backends from the same `z0` and writes paired residuals.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CompareOutcome> {
    cfg.validate()?;
    let [sa, sb] = match cfg.compare.solvers.as_slice() {
        [a, b] => [a.parse::<SolverSelector>()?, b.parse::<SolverSelector>()?],
        other => {
            return Err(Error::Config(format!(
                "compare.solvers needs exactly two entries, got {}",
                other.len()
            )))
        }
    };
    let bench = cfg.problem.benchmark()?;
    let nlp = bench.transcribe()?;
    let z0 = bench.initial_guess(&nlp);
    let (ra, rb) = rayon::join(
        || run_one(&nlp, &z0, cfg, sa),
        || run_one(&nlp, &z0, cfg, sb),
    );
    let (a, b) = (ra?, rb?);
    let final_distance = (&a.final_z - &b.final_z).norm();

    let mut paired = Table::new(&[
        "i",
        "eq_norm_a",
        "eq_norm_b",
        "stationarity_a",
        "stationarity_b",
        "grad_norm_a",
        "grad_norm_b",
        "step_norm_a",
        "step_norm_b",
        "distance",
    ]);
    let rows = a.iterates.len().max(b.iterates.len());
    for i in 0..rows {
        let (ia, ib) = (a.iterates.get(i), b.iterates.get(i));
        let f = |r: Option<&crate::sqp::IterateRecord>,
                 get: fn(&crate::sqp::IterateRecord) -> f64| {
            r.map(|r| num(get(r))).unwrap_or_default()
        };
        let dist = match (ia, ib) {
            (Some(x), Some(y)) => num((&x.z - &y.z).norm()),
            _ => String::new(),
        };
        paired.push(vec![
            i.to_string(),
            f(ia, |r| r.eq_norm),
            f(ib, |r| r.eq_norm),
            f(ia, |r| r.stationarity),
            f(ib, |r| r.stationarity),
            f(ia, |r| r.grad_norm),
            f(ib, |r| r.grad_norm),
            f(ia, |r| r.step_norm),
            f(ib, |r| r.step_norm),
            dist,
        ]);
    }

    let model = &nlp.ocp().model;
    let units = model.state_units();
    let mut header = vec!["k".to_string()];
    header.extend(model.state_labels().iter().map(|l| format!("d_{l}")));
    header.extend(model.input_labels().iter().map(|l| format!("d_{l}")));
    let mut stages = Table::new(&header);
    let n = nlp.layout().horizon;
    for k in 0..=n {
        let dx = nlp.state(&a.final_z, k) - nlp.state(&b.final_z, k);
        let mut row = vec![k.to_string()];
        row.extend(dx.iter().zip(&units).map(|(d, s)| num(d * s)));
        if k < n {
            let du = nlp.input(&a.final_z, k) - nlp.input(&b.final_z, k);
            row.extend(du.iter().map(|d| num(*d)));
        } else {
            row.extend(std::iter::repeat_n(String::new(), model.input_dim()));
        }
        stages.push(row);
    }

    let mut summary = Table::new(&[
        "solver_a",
        "solver_b",
        "termination_a",
        "termination_b",
        "iterations_a",
        "iterations_b",
        "final_distance",
        "max_accuracy_bound_a",
        "max_accuracy_bound_b",
    ]);
    summary.push(vec![
        sa.to_string(),
        sb.to_string(),
        a.termination.to_string(),
        b.termination.to_string(),
        a.iterations().to_string(),
        b.iterations().to_string(),
        num(final_distance),
        num(max_accuracy_bound(&a)),
        num(max_accuracy_bound(&b)),
    ]);

    let mut out = Artifacts::new(&cfg.output.dir)?;
    out.write("comparison.csv", &paired)?;
    out.write("comparison_stages.csv", &stages)?;
    out.write("comparison_summary.csv", &summary)?;
    out.write("iterates_a.csv", &iterates_table(&a))?;
    out.write("iterates_b.csv", &iterates_table(&b))?;
    out.write("trajectory_a.csv", &trajectory_table(&nlp, &a.final_z))?;
    out.write("trajectory_b.csv", &trajectory_table(&nlp, &b.final_z))?;
    out.finish(
        "compare",
        cfg,
        serde_json::json!({
            "a": termination_summary(&a),
            "b": termination_summary(&b),
            "final_distance": final_distance,
        }),
    )?;
    Ok(CompareOutcome {
        nlp,
        a,
        b,
        final_distance,
    })
}

/// Noisy-backend sweep over `μ_min × ε × seeds` plus the envelope fit.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let bench = cfg.problem.benchmark()?;
    let nlp = bench.transcribe()?;
    let z0 = bench.initial_guess(&nlp);
    let outcome = run_sweep(&nlp, &z0, &cfg.sqp, &cfg.sweep, cfg.workers)?;
    let fit = outcome.fit.as_ref();

    let mut cells = Table::new(&[
        "mu_min",
        "eps",
        "seed",
        "status",
        "termination",
        "iterations",
        "tail",
        "tail_start",
        "envelope",
        "infeasible_iterates",
    ]);
    let mut raw = Table::new(&["mu_min", "eps", "seed", "i", "mu", "distance"]);
    for c in &outcome.cells {
        cells.push(vec![
            num(c.mu_min),
            num(c.eps),
            c.seed.to_string(),
            if c.ok() { "ok".into() } else { "failed".into() },
            c.termination
                .map(|t| t.to_string())
                .unwrap_or_else(|| "error".into()),
            c.iterations.to_string(),
            num(c.tail),
            c.tail_start.to_string(),
            fit.map(|f| num(f.overall.envelope(c.tail_start, c.mu_min, c.eps)))
                .unwrap_or_default(),
            c.infeasible_iterates.to_string(),
        ]);
        for (i, (d, mu)) in c.distances.iter().zip(&c.mus).enumerate() {
            raw.push(vec![
                num(c.mu_min),
                num(c.eps),
                c.seed.to_string(),
                i.to_string(),
                num(*mu),
                num(*d),
            ]);
        }
    }

    let mut fits = Table::new(&["scope", "rho_hat", "c1", "c2", "c3", "r_squared", "d0"]);
    if let Some(f) = fit {
        let mut row = |scope: String, x: &super::iss::IssFit| {
            fits.push(vec![
                scope,
                num(x.rho_hat),
                num(x.c1),
                num(x.c2),
                num(x.c3),
                num(x.r_squared),
                num(x.d0),
            ])
        };
        row("overall".into(), &f.overall);
        for (s, x) in &f.per_seed {
            row(format!("seed:{s}"), x);
        }
    }

    let mut out = Artifacts::new(&cfg.output.dir)?;
    out.write("sweep.csv", &cells)?;
    out.write("sweep_distances.csv", &raw)?;
    out.write("iss_fit.csv", &fits)?;
    out.write(
        "reference_iterates.csv",
        &iterates_table(&outcome.reference),
    )?;
    out.finish(
        "sweep",
        cfg,
        serde_json::json!({
            "partial": outcome.partial(),
            "failed_cells": outcome.cells.iter().filter(|c| !c.ok()).count(),
            "reference_termination": outcome.reference.termination.as_str(),
            "d0": outcome.d0,
            "fit": fit,
        }),
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct QsvtRow {
    pub kappa: f64,
    pub eps_prime: f64,
    pub degree: Option<usize>,
    pub beta: Option<f64>,
    pub grid_err: Option<f64>,
    pub matrix_err: Option<f64>,
    /// `InfeasibleAccuracy` or other construction failure.
    pub note: Option<String>,
}

fn qsvt_row(kappa: f64, eps_prime: f64, cfg: &ExperimentConfig, seed: u64) -> QsvtRow {
    let opts = PolynomialOptions {
        degree_cap: cfg.qsvt.degree_cap,
        verify_grid: cfg.qsvt.grid_points,
    };
    let mut row = QsvtRow {
        kappa,
        eps_prime,
        degree: None,
        beta: None,
        grid_err: None,
        matrix_err: None,
        note: None,
    };
    let spec = match build_inversion_spec_with(kappa, eps_prime, &opts) {
        Ok(s) => s,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    row.degree = Some(spec.degree);
    row.beta = Some(spec.beta);
    row.grid_err = spec.grid_error;
    let n = cfg.qsvt.matrix_dim.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eig: Vec<f64> = (0..n)
        .map(|i| (1.0 / kappa).powf(1.0 - i as f64 / (n - 1) as f64))
        .collect();
    let a = spd_with_spectrum(&eig, &mut rng);
    let result = BlockEncoding::encode(
        &a,
        &EncodeOptions {
            alpha: Some(1.0),
            ..EncodeOptions::default()
        },
    )
    .and_then(|u| qsvt_invert(&u, &spec));
    match (result, a.clone().try_inverse()) {
        (Ok(inv), Some(exact)) => {
            row.matrix_err = Some(spectral_norm(&(inv.block() * inv.alpha() - exact)))
        }
        (Err(e), _) => row.note = Some(e.to_string()),
        (_, None) => row.note = Some("test matrix is singular".into()),
    }
    row
}

/// Degree, grid error and matrix inversion error for each `(κ, ε′)`.
pub fn cmd_qsvt_check(cfg: &ExperimentConfig) -> Result<Vec<QsvtRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (ie, &eps) in cfg.qsvt.eps_primes.iter().enumerate() {
        for (ik, &kappa) in cfg.qsvt.kappas.iter().enumerate() {
            jobs.push((kappa, eps, cfg.seed.wrapping_add((ie * 1000 + ik) as u64)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<QsvtRow> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(k, e, s)| qsvt_row(k, e, cfg, s))
            .collect()
    });

    let mut t = Table::new(&[
        "kappa",
        "eps_prime",
        "degree",
        "beta",
        "grid_err",
        "matrix_err",
        "note",
    ]);
    for r in &rows {
        t.push(vec![
            num(r.kappa),
            num(r.eps_prime),
            opt_usize(r.degree),
            opt(r.beta),
            opt(r.grid_err),
            opt(r.matrix_err),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    let mut out = Artifacts::new(&cfg.output.dir)?;
    out.write("qsvt.csv", &t)?;
    out.finish(
        "qsvt-check",
        cfg,
        serde_json::json!({
            "rows": rows.len(),
            "capped": rows.iter().filter(|r| r.degree.is_none()).count(),
            "degree_fit_r_squared": degree_fit_r_squared(&rows),
        }),
    )?;
    Ok(rows)
}

/// R² of `degree ~ κ` at each `ε′`, worst over `ε′`.
pub fn degree_fit_r_squared(rows: &[QsvtRow]) -> Option<f64> {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.eps_prime).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut worst: Option<f64> = None;
    for e in eps {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.eps_prime == e)
            .filter_map(|r| r.degree.map(|d| (r.kappa, d as f64)))
            .unzip();
        if x.len() >= 3 {
            let (_, _, r2) = linear_fit(&x, &y);
            worst = Some(worst.map_or(r2, |w: f64| w.min(r2)));
        }
    }
    worst
}
