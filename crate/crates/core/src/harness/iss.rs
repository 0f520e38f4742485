use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nlp::TrajectoryNlp;
use crate::schur::{ExactSchurSolver, NoisySchurSolver};
use crate::sqp::{solve, SolveReport, SqpConfig, Termination};

use super::config::SweepSection;

/// Relative level below which a distance counts as converged roundoff.
const ROUNDOFF: f64 = 1e-13;

/// One `(μ_min, ε, seed)` cell of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub mu_min: f64,
    pub eps: f64,
    pub seed: u64,
    pub termination: Option<Termination>,
    pub failure: Option<String>,
    pub iterations: usize,
    /// `‖z⁽ⁱ⁾ − z*_exact‖` for `i = 0..=iterations`.
    pub distances: Vec<f64>,
    pub mus: Vec<f64>,
    /// Largest distance over the trailing window.
    pub tail: f64,
    /// First iterate index of the trailing window.
    pub tail_start: usize,
    /// Recorded iterates with some `H_j ≥ 0`.
    pub infeasible_iterates: usize,
}

impl SweepCell {
    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.termination.is_some_and(Termination::is_success)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IssFit {
    pub rho_hat: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// R² of the log-linear contraction fit.
    pub r_squared: f64,
    pub d0: f64,
}

impl IssFit {
    pub fn envelope(&self, tail_start: usize, mu_min: f64, eps: f64) -> f64 {
        self.c1 * self.rho_hat.powi(tail_start as i32) * self.d0 + self.c2 * mu_min + self.c3 * eps
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IssFitReport {
    pub overall: IssFit,
    pub per_seed: Vec<(u64, IssFit)>,
    /// Largest `|c_s / mean − 1|` over seeds and over `ρ̂, C₁, C₂, C₃`.
    pub seed_spread: f64,
    pub envelope_violations: usize,
    pub failed_cells: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reference: SolveReport,
    pub z_ref: DVector<f64>,
    pub d0: f64,
    pub cells: Vec<SweepCell>,
    pub fit: Option<IssFitReport>,
}

impl SweepOutcome {
    pub fn partial(&self) -> bool {
        self.cells.iter().any(|c| !c.ok())
    }
}

/// Driver settings that keep every run going until the barrier floor.
fn run_to_floor(base: &SqpConfig, mu_min: f64, floor_iterations: usize) -> SqpConfig {
    SqpConfig {
        mu_min,
        eps_opt: 0.0,
        eps_feas: 0.0,
        floor_iterations,
        ..base.clone()
    }
}

/// Exact-backend solution at `μ_min = reference_mu_min`, the `z*_exact` of
/// every sweep distance.
pub fn reference_solution(
    nlp: &TrajectoryNlp,
    z0: &DVector<f64>,
    base: &SqpConfig,
    spec: &SweepSection,
) -> Result<SolveReport> {
    let cfg = run_to_floor(base, spec.reference_mu_min, spec.floor_iterations.max(5));
    let report = solve(nlp, z0, &cfg, &mut ExactSchurSolver)?;
    if !report.termination.is_success() {
        return Err(Error::SolverFailure(format!(
            "reference solve ended with {}: {}",
            report.termination,
            report.message.clone().unwrap_or_default()
        )));
    }
    Ok(report)
}

fn tail_window(n_iter: usize, fraction: f64) -> usize {
    let len = ((n_iter as f64) * fraction).ceil() as usize;
    len.clamp(1, n_iter.max(1))
}

fn run_cell(
    nlp: &TrajectoryNlp,
    z0: &DVector<f64>,
    z_ref: &DVector<f64>,
    base: &SqpConfig,
    spec: &SweepSection,
    (mu_min, eps, seed): (f64, f64, u64),
) -> SweepCell {
    let cfg = run_to_floor(base, mu_min, spec.floor_iterations);
    let mut solver = NoisySchurSolver::new(eps, seed);
    let mut cell = SweepCell {
        mu_min,
        eps,
        seed,
        termination: None,
        failure: None,
        iterations: 0,
        distances: Vec::new(),
        mus: Vec::new(),
        tail: f64::NAN,
        tail_start: 0,
        infeasible_iterates: 0,
    };
    match solve(nlp, z0, &cfg, &mut solver) {
        Ok(report) => {
            cell.termination = Some(report.termination);
            if !report.termination.is_success() {
                cell.failure = report
                    .message
                    .clone()
                    .or(Some(report.termination.to_string()));
            }
            cell.iterations = report.iterations();
            cell.distances = report.distances_to(z_ref);
            cell.mus = report.iterates.iter().map(|r| r.mu).collect();
            cell.infeasible_iterates = report.iterates.iter().filter(|r| r.max_ineq >= 0.0).count();
            let n = cell.iterations;
            if n > 0 {
                let len = tail_window(n, spec.tail_fraction);
                cell.tail_start = n + 1 - len;
                cell.tail = cell.distances[cell.tail_start..]
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max);
            } else {
                cell.tail = cell.distances[0];
            }
        }
        Err(e) => cell.failure = Some(e.to_string()),
    }
    cell
}

/// Runs every cell with the noisy backend on a pool of `workers` threads.
/// Cells come back in grid order regardless of scheduling.
pub fn run_sweep(
    nlp: &TrajectoryNlp,
    z0: &DVector<f64>,
    base: &SqpConfig,
    spec: &SweepSection,
    workers: usize,
) -> Result<SweepOutcome> {
    let reference = reference_solution(nlp, z0, base, spec)?;
    let z_ref = reference.final_z.clone();
    let d0 = (z0 - &z_ref).norm();
    let mut jobs = Vec::new();
    for &mu in &spec.mu_min {
        for &eps in &spec.eps {
            for &seed in &spec.seeds {
                jobs.push((mu, eps, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        jobs.par_iter()
            .map(|&job| run_cell(nlp, z0, &z_ref, base, spec, job))
            .collect()
    });
    let fit = fit_report(&cells, d0).ok();
    Ok(SweepOutcome {
        reference,
        z_ref,
        d0,
        cells,
        fit,
    })
}

/// Least-squares line through `(x, y)`; returns slope, intercept and R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

/// Upper-envelope fit over the usable cells.
///
/// `ρ̂` and `C₁` come from the `ε = 0` run at the smallest `μ_min`: a
/// log-linear fit over the iterates before the barrier floor is reached,
/// stopping at the first distance at roundoff level. `C₁` is then lifted so
/// the line bounds every point. `C₂` and `C₃` are the smallest nonnegative
/// constants that make the envelope hold for the `ε = 0` and `ε > 0` tails.
pub fn fit_envelope(cells: &[&SweepCell], d0: f64) -> Result<IssFit> {
    let zero: Vec<&SweepCell> = cells.iter().copied().filter(|c| c.eps == 0.0).collect();
    let anchor = zero
        .iter()
        .copied()
        .min_by(|a, b| a.mu_min.total_cmp(&b.mu_min).then(a.seed.cmp(&b.seed)))
        .ok_or_else(|| Error::Precondition("envelope fit needs a converged ε = 0 cell".into()))?;
    if !(d0 > 0.0) {
        return Err(Error::Precondition(
            "initial point already at the reference".into(),
        ));
    }
    let floor = ROUNDOFF * d0;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, (&d, &mu)) in anchor.distances.iter().zip(&anchor.mus).enumerate() {
        xs.push(i as f64);
        ys.push(d.max(floor).ln());
        if d <= floor || (i > 0 && mu <= anchor.mu_min) {
            break;
        }
    }
    let (slope, _, r2) = if xs.len() >= 2 {
        linear_fit(&xs, &ys)
    } else {
        (floor.ln() - d0.ln(), 0.0, 1.0)
    };
    let rho_hat = slope.exp();
    let c1 = xs
        .iter()
        .zip(&ys)
        .map(|(&i, &ly)| (ly - d0.ln() - i * slope).exp())
        .fold(1.0, f64::max);
    let mut fit = IssFit {
        rho_hat,
        c1,
        c2: 0.0,
        c3: 0.0,
        r_squared: r2,
        d0,
    };
    for c in &zero {
        let excess = c.tail - fit.envelope(c.tail_start, 0.0, 0.0);
        fit.c2 = fit.c2.max(excess.max(0.0) / c.mu_min);
    }
    for c in cells.iter().filter(|c| c.eps > 0.0) {
        let excess = c.tail - fit.envelope(c.tail_start, c.mu_min, 0.0);
        fit.c3 = fit.c3.max(excess.max(0.0) / c.eps);
    }
    Ok(fit)
}

fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return if values.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    values
        .iter()
        .map(|v| (v / mean - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Overall and per-seed fits plus the envelope audit.
pub fn fit_report(cells: &[SweepCell], d0: f64) -> Result<IssFitReport> {
    let usable: Vec<&SweepCell> = cells.iter().filter(|c| c.ok()).collect();
    let overall = fit_envelope(&usable, d0)?;
    let mut seeds: Vec<u64> = usable.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut per_seed = Vec::new();
    for s in seeds {
        let subset: Vec<&SweepCell> = usable.iter().copied().filter(|c| c.seed == s).collect();
        per_seed.push((s, fit_envelope(&subset, d0)?));
    }
    let pick: [fn(&IssFit) -> f64; 4] = [|f| f.rho_hat, |f| f.c1, |f| f.c2, |f| f.c3];
    let seed_spread = pick
        .iter()
        .map(|get| relative_spread(&per_seed.iter().map(|(_, f)| get(f)).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let envelope_violations = usable
        .iter()
        .filter(|c| c.tail > overall.envelope(c.tail_start, c.mu_min, c.eps) * (1.0 + 1e-12))
        .count();
    Ok(IssFitReport {
        overall,
        per_seed,
        seed_spread,
        envelope_violations,
        failed_cells: cells.len() - usable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(mu_min: f64, eps: f64, seed: u64, distances: Vec<f64>, mus: Vec<f64>) -> SweepCell {
        let n = distances.len() - 1;
        let start = n + 1 - tail_window(n, 0.2);
        SweepCell {
            mu_min,
            eps,
            seed,
            termination: Some(Termination::MuFloor),
            failure: None,
            iterations: n,
            tail: distances[start..].iter().cloned().fold(0.0, f64::max),
            tail_start: start,
            distances,
            mus,
            infeasible_iterates: 0,
        }
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, b, r2) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_sequence_gives_its_ratio() {
        let mus: Vec<f64> = (0..10).map(|i| 0.5f64.powi(i).max(1e-3)).collect();
        let d: Vec<f64> = (0..10).map(|i| 0.5f64.powi(i)).collect();
        let c = cell(1e-3, 0.0, 1, d, mus);
        let fit = fit_envelope(&[&c], 1.0).unwrap();
        assert!((fit.rho_hat - 0.5).abs() < 1e-12);
        assert!((fit.c1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_dominates_every_cell() {
        let mus: Vec<f64> = (0..12).map(|i| 0.5f64.powi(i).max(1e-3)).collect();
        let base: Vec<f64> = (0..12).map(|i| 0.5f64.powi(i).max(1e-3)).collect();
        let mut cells = vec![cell(1e-3, 0.0, 1, base.clone(), mus.clone())];
        for (k, eps) in [1e-2, 1e-1].into_iter().enumerate() {
            let noisy = base
                .iter()
                .enumerate()
                .map(|(i, d)| d + eps * ((i + k) % 3) as f64 / 2.0)
                .collect();
            cells.push(cell(1e-3, eps, 1, noisy, mus.clone()));
        }
        let report = fit_report(&cells, 1.0).unwrap();
        assert_eq!(report.envelope_violations, 0);
        assert!(report.overall.rho_hat < 1.0);
        assert!(report.overall.c3 > 0.0);
    }
}
