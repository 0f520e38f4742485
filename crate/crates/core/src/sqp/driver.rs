use nalgebra::DVector;

use super::config::{BarrierUpdate, ConvergenceTest, NonDescentPolicy, SqpConfig};
use super::report::{ArmijoWaiver, IterateRecord, SolveReport, Termination};
use crate::error::{Error, Result};
use crate::nlp::{BarrierConfig, TrajectoryNlp};
use crate::schur::{SchurSolution, SchurStepSolver, StepDiagnostics};

/// What the line search needs to know about a problem.
pub trait MeritProblem {
    fn inequalities(&self, z: &DVector<f64>) -> DVector<f64>;
    /// `F̃(z; μ)`, `+∞` outside the strict interior.
    fn merit(&self, z: &DVector<f64>, mu: f64) -> f64;
    fn equality_norm(&self, z: &DVector<f64>) -> f64;
}

impl MeritProblem for TrajectoryNlp {
    fn inequalities(&self, z: &DVector<f64>) -> DVector<f64> {
        TrajectoryNlp::inequalities(self, z)
    }

    fn merit(&self, z: &DVector<f64>, mu: f64) -> f64 {
        self.barrier_objective(z, &BarrierConfig::new(mu))
    }

    fn equality_norm(&self, z: &DVector<f64>) -> f64 {
        self.equalities(z).norm()
    }
}

/// `min(1, θ min_{j: d_j > 0} (−H_j)/d_j)`, or 1 if no `d_j` is positive.
pub fn fraction_to_boundary(h_vals: &DVector<f64>, h_dirderivs: &DVector<f64>, theta: f64) -> f64 {
    let mut cap = f64::INFINITY;
    for (h, d) in h_vals.iter().zip(h_dirderivs.iter()) {
        if *d > 0.0 {
            cap = cap.min(-h / d);
        }
    }
    if cap.is_infinite() {
        1.0
    } else {
        (theta * cap).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    pub armijo_c: f64,
    pub tau: f64,
    pub max_backtracks: usize,
    /// `σ` of the infeasibility-decrease condition when it is enforced.
    pub infeasibility_sigma: Option<f64>,
    /// Skip the Armijo test (the first strictly feasible trial is taken).
    pub waive_armijo: bool,
}

impl LineSearchOptions {
    pub fn from_config(cfg: &SqpConfig) -> Self {
        Self {
            armijo_c: cfg.armijo_c,
            tau: cfg.backtrack_tau,
            max_backtracks: cfg.max_backtracks,
            infeasibility_sigma: cfg
                .enforce_infeasibility_decrease
                .then_some(cfg.infeasibility_sigma),
            waive_armijo: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted {
    pub alpha: f64,
    pub backtracks: usize,
    pub merit_before: f64,
    pub merit_after: f64,
    pub waiver: Option<ArmijoWaiver>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BacktrackError {
    NonDescent { slope: f64 },
    Exhausted { trials: usize },
}

fn roundoff(merit: f64) -> f64 {
    1e-13 * (1.0 + merit.abs())
}

/// Largest `α ∈ {α_max, τα_max, …}` keeping `H < 0` and satisfying the
/// Armijo condition on `F̃`.
pub fn backtrack<P: MeritProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    dz: &DVector<f64>,
    g: &DVector<f64>,
    mu: f64,
    alpha_max: f64,
    opts: &LineSearchOptions,
) -> std::result::Result<Accepted, BacktrackError> {
    let merit0 = problem.merit(z, mu);
    let slope = g.dot(dz);
    if dz.iter().all(|&v| v == 0.0) {
        return Ok(Accepted {
            alpha: alpha_max,
            backtracks: 0,
            merit_before: merit0,
            merit_after: merit0,
            waiver: None,
        });
    }
    if slope >= 0.0 && !opts.waive_armijo {
        return Err(BacktrackError::NonDescent { slope });
    }
    let g_norm = if opts.infeasibility_sigma.is_some() {
        problem.equality_norm(z)
    } else {
        0.0
    };
    let mut alpha = alpha_max;
    for k in 0..opts.max_backtracks {
        if k > 0 {
            alpha *= opts.tau;
        }
        let trial = z + dz * alpha;
        if !problem.inequalities(&trial).iter().all(|&h| h < 0.0) {
            continue;
        }
        let merit = problem.merit(&trial, mu);
        if !merit.is_finite() {
            continue;
        }
        if let Some(sigma) = opts.infeasibility_sigma {
            if problem.equality_norm(&trial) > (1.0 - sigma * alpha) * g_norm {
                continue;
            }
        }
        let waiver = if opts.waive_armijo {
            Some(ArmijoWaiver::NonDescent)
        } else if merit <= merit0 + opts.armijo_c * alpha * slope {
            None
        } else if (merit - merit0).abs() <= roundoff(merit0) {
            Some(ArmijoWaiver::Roundoff)
        } else {
            continue;
        };
        return Ok(Accepted {
            alpha,
            backtracks: k,
            merit_before: merit0,
            merit_after: merit,
            waiver,
        });
    }
    Err(BacktrackError::Exhausted {
        trials: opts.max_backtracks,
    })
}

/// Residual norms of the iteration just taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub eq_norm_before: f64,
    pub eq_norm_after: f64,
    pub barrier_grad_before: f64,
    pub barrier_grad_after: f64,
}

pub fn update_barrier(mu: f64, rule: &BarrierUpdate, progress: &Progress) -> f64 {
    match *rule {
        BarrierUpdate::Geometric { factor } => factor * mu,
        BarrierUpdate::Constant => mu,
        BarrierUpdate::Adaptive { factor } => {
            if progress.eq_norm_after < progress.eq_norm_before
                && progress.barrier_grad_after < progress.barrier_grad_before
            {
                factor * mu
            } else {
                mu
            }
        }
    }
}

struct Metrics {
    objective: f64,
    eq_norm: f64,
    grad_norm: f64,
    barrier_grad_norm: f64,
    stationarity: f64,
    max_ineq: f64,
}

fn metrics(nlp: &TrajectoryNlp, z: &DVector<f64>, mu: f64) -> Metrics {
    let bc = BarrierConfig::new(mu);
    let grad = nlp.objective_gradient(z);
    let bgrad = nlp.barrier_gradient(z, &bc);
    let stationarity = if nlp.eq_dim() == 0 {
        bgrad.norm()
    } else {
        // Least-squares multipliers: min ‖𝒜ᵀλ + ∇F̃‖.
        let at = nlp.equality_jacobian(z).transpose();
        match at.clone().svd(true, true).solve(&(-&bgrad), 1e-14) {
            Ok(lambda) => (at * lambda + &bgrad).norm(),
            Err(_) => bgrad.norm(),
        }
    };
    let h = nlp.inequalities(z);
    Metrics {
        objective: nlp.objective(z),
        eq_norm: nlp.equalities(z).norm(),
        grad_norm: grad.norm(),
        barrier_grad_norm: bgrad.norm(),
        stationarity,
        max_ineq: h.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn converged(m: &Metrics, mu: f64, cfg: &SqpConfig, has_ineq: bool) -> bool {
    match cfg.convergence {
        ConvergenceTest::ObjectiveGradient => {
            m.grad_norm <= cfg.eps_opt && m.eq_norm <= cfg.eps_feas
        }
        ConvergenceTest::Stationarity => {
            m.stationarity <= cfg.eps_opt
                && m.eq_norm <= cfg.eps_feas
                && (!has_ineq || mu <= cfg.eps_opt)
        }
    }
}

fn record(index: usize, z: &DVector<f64>, mu: f64, m: &Metrics) -> IterateRecord {
    IterateRecord {
        index,
        z: z.clone(),
        mu,
        alpha: 0.0,
        alpha_max: 0.0,
        backtracks: 0,
        step_norm: 0.0,
        slope: 0.0,
        merit_before: f64::NAN,
        merit_after: f64::NAN,
        objective: m.objective,
        eq_norm: m.eq_norm,
        grad_norm: m.grad_norm,
        barrier_grad_norm: m.barrier_grad_norm,
        stationarity: m.stationarity,
        max_ineq: m.max_ineq,
        armijo_waiver: None,
        solver_retried: false,
        infeasibility_decreased: true,
        kkt_residual: 0.0,
        diagnostics: StepDiagnostics::default(),
    }
}

fn nonzero(v: &DVector<f64>) -> bool {
    v.iter().any(|&x| x != 0.0)
}

/// Runs the barrier SQP loop from a strictly feasible `z0`.
pub fn solve(
    nlp: &TrajectoryNlp,
    z0: &DVector<f64>,
    cfg: &SqpConfig,
    schur: &mut dyn SchurStepSolver,
) -> Result<SolveReport> {
    cfg.validate()?;
    if z0.len() != nlp.decision_dim() {
        return Err(Error::Dimension {
            callable: "solve (z0)".into(),
            expected: nlp.decision_dim(),
            got: z0.len(),
        });
    }
    if let Some((j, h)) = nlp
        .inequalities(z0)
        .iter()
        .enumerate()
        .find(|(_, h)| !(**h < 0.0))
    {
        return Err(Error::Precondition(format!(
            "initial point is not strictly feasible: H[{j}] = {h:e}"
        )));
    }
    let has_ineq = nlp.ineq_dim() > 0;
    let mut ls = LineSearchOptions::from_config(cfg);
    let mut z = z0.clone();
    let mut mu = cfg.mu0;
    let mut m = metrics(nlp, &z, mu);
    let mut iterates = vec![record(0, &z, mu, &m)];
    let mut message = None;
    if converged(&m, mu, cfg, has_ineq) {
        return Ok(SolveReport {
            solver: schur.name(),
            iterates,
            termination: Termination::Converged,
            message,
            final_z: z,
        });
    }
    let mut floor_left = cfg.floor_iterations;

    let termination = loop {
        if !(mu > cfg.mu_min) {
            if floor_left == 0 {
                break Termination::MuFloor;
            }
            floor_left -= 1;
            mu = cfg.mu_min;
        }
        if iterates.len() > cfg.max_outer_iters {
            break Termination::IterCap;
        }
        let bc = BarrierConfig {
            sigma: cfg.damping,
            ..BarrierConfig::new(mu)
        };
        let qp = match nlp.build_qp(&z, &bc) {
            Ok(qp) => qp,
            Err(e) => {
                message = Some(e.to_string());
                break Termination::SolverFailure;
            }
        };
        let mut step = |retried: bool| -> std::result::Result<(SchurSolution, f64, bool), String> {
            let sol = schur.step(&qp).map_err(|e| e.to_string())?;
            let slope = qp.g.dot(&sol.dz);
            Ok((sol, slope, retried))
        };
        let mut attempt = step(false);
        let retry = matches!(&attempt, Ok((sol, slope, _)) if *slope >= 0.0 && nonzero(&sol.dz));
        if retry {
            attempt = step(true);
        }
        let (sol, slope, retried) = match attempt {
            Ok(v) => v,
            Err(e) => {
                message = Some(e);
                break Termination::SolverFailure;
            }
        };
        ls.waive_armijo = false;
        if slope >= 0.0 && nonzero(&sol.dz) {
            // gᵀΔz = ρ₁ᵀΔz − ΔzᵀQΔz − λᵀ(r + ρ₂) for KKT residual (ρ₁, ρ₂).
            let allowance = sol.lambda.dot(&qp.r).abs()
                + sol.kkt_residual * (sol.dz.norm() + sol.lambda.norm())
                + qp.g.norm() * sol.diagnostics.accuracy_bound
                + 1e-12 * (1.0 + qp.g.norm() * sol.dz.norm());
            match cfg.non_descent {
                NonDescentPolicy::AcceptWithinAccuracy if slope <= allowance => {
                    ls.waive_armijo = true
                }
                _ => {
                    message = Some(format!("non-descent step: gᵀΔz = {slope:e}"));
                    break Termination::NonDescent;
                }
            }
        }

        let h = nlp.inequalities(&z);
        let dh = if has_ineq {
            nlp.inequality_jacobian(&z) * &sol.dz
        } else {
            DVector::zeros(0)
        };
        let alpha_max = fraction_to_boundary(&h, &dh, cfg.boundary_theta);
        let accepted = match backtrack(nlp, &z, &sol.dz, &qp.g, mu, alpha_max, &ls) {
            Ok(a) => a,
            Err(e) => {
                message = Some(format!("{e:?}"));
                break Termination::LineSearchFailure;
            }
        };
        let z_new = &z + &sol.dz * accepted.alpha;
        let m_new = metrics(nlp, &z_new, mu);
        let progress = Progress {
            eq_norm_before: m.eq_norm,
            eq_norm_after: m_new.eq_norm,
            barrier_grad_before: qp.g.norm(),
            barrier_grad_after: m_new.barrier_grad_norm,
        };
        let mut rec = record(iterates.len(), &z_new, mu, &m_new);
        rec.alpha = accepted.alpha;
        rec.alpha_max = alpha_max;
        rec.backtracks = accepted.backtracks;
        rec.step_norm = sol.dz.norm();
        rec.slope = slope;
        rec.merit_before = accepted.merit_before;
        rec.merit_after = accepted.merit_after;
        rec.armijo_waiver = accepted.waiver;
        rec.solver_retried = retried;
        rec.infeasibility_decreased =
            m_new.eq_norm <= (1.0 - cfg.infeasibility_sigma * accepted.alpha) * m.eq_norm;
        rec.kkt_residual = sol.kkt_residual;
        rec.diagnostics = sol.diagnostics;
        iterates.push(rec);
        z = z_new;
        m = m_new;

        if converged(&m, mu, cfg, has_ineq) {
            break Termination::Converged;
        }
        if mu > cfg.mu_min {
            mu = update_barrier(mu, &cfg.barrier_update, &progress);
        }
    };
    Ok(SolveReport {
        solver: schur.name(),
        iterates,
        termination,
        message,
        final_z: z,
    })
}
