use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_sqp::harness::{
    cmd_compare, cmd_qsvt_check, cmd_solve, cmd_sweep, ExitStatus, ExperimentConfig,
};
use hybrid_sqp::Result;

#[derive(Parser, Debug)]
#[command(
    name = "hybrid-sqp",
    version,
    about = "Barrier SQP experiments with exact, noisy and simulated QSVT steps"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML experiment file; fields not given keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and QSVT checks.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `hiv` or `toy:<name>` (overrides `problem.name`).
    #[arg(long, global = true)]
    problem: Option<String>,
    /// `exact`, `noisy:<eps>` or `quantum` (overrides `solver.kind`).
    #[arg(long, global = true)]
    solver: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write iterates.csv and trajectory.csv.
    Solve,
    /// Run two backends from the same initial point.
    Compare {
        /// Two solver selectors (overrides `compare.solvers`).
        #[arg(long, num_args = 2)]
        solvers: Option<Vec<String>>,
    },
    /// Noisy-backend sweep over μ_min × ε and the envelope fit.
    Sweep,
    /// Polynomial degree and inversion error per (κ, ε′).
    QsvtCheck,
}

fn load(global: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &global.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    if let Some(p) = &global.problem {
        cfg.problem.name = p.clone();
    }
    if let Some(s) = &global.solver {
        cfg.solver.kind = s.clone();
    }
    if cfg.workers == 0 {
        cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitStatus> {
    let mut cfg = load(&cli.global)?;
    let dir = cfg.output.dir.display().to_string();
    match cli.command {
        Command::Solve => {
            let out = cmd_solve(&cfg)?;
            let r = &out.report;
            println!(
                "{}: {} after {} iterations, objective {:e}; wrote {dir}",
                r.solver,
                r.termination,
                r.iterations(),
                r.last().objective
            );
            if !r.termination.is_success() {
                eprintln!(
                    "solver failure: {}",
                    r.message.as_deref().unwrap_or(r.termination.as_str())
                );
                return Ok(ExitStatus::SolverFailure);
            }
        }
        Command::Compare { solvers } => {
            if let Some(s) = solvers {
                cfg.compare.solvers = s;
            }
            let out = cmd_compare(&cfg)?;
            println!(
                "{} ({}) vs {} ({}): final distance {:e}; wrote {dir}",
                out.a.solver,
                out.a.termination,
                out.b.solver,
                out.b.termination,
                out.final_distance
            );
            for r in [&out.a, &out.b] {
                if !r.termination.is_success() {
                    eprintln!(
                        "{} failed: {}",
                        r.solver,
                        r.message.as_deref().unwrap_or(r.termination.as_str())
                    );
                    return Ok(ExitStatus::SolverFailure);
                }
            }
        }
        Command::Sweep => {
            let out = cmd_sweep(&cfg)?;
            match &out.fit {
                Some(f) => println!(
                    "rho_hat {:e}, C1 {:e}, C2 {:e}, C3 {:e}, seed spread {:.3}, violations {}; wrote {dir}",
                    f.overall.rho_hat, f.overall.c1, f.overall.c2, f.overall.c3, f.seed_spread, f.envelope_violations
                ),
                None => println!("envelope fit unavailable; wrote {dir}"),
            }
            if out.partial() {
                let failed = out.cells.iter().filter(|c| !c.ok()).count();
                eprintln!("{failed} of {} cells failed", out.cells.len());
                return Ok(ExitStatus::PartialSweep);
            }
        }
        Command::QsvtCheck => {
            let rows = cmd_qsvt_check(&cfg)?;
            let capped = rows.iter().filter(|r| r.degree.is_none()).count();
            println!(
                "{} rows ({capped} hit the degree cap); wrote {dir}",
                rows.len()
            );
        }
    }
    Ok(ExitStatus::Success)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                ExitStatus::Usage as u8
            } else {
                0
            });
        }
    };
    match run(cli) {
        Ok(s) => ExitCode::from(s as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::for_error(&e) as u8)
        }
    }
}
