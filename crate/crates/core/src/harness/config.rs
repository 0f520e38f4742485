use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{hiv_benchmark, toy_problem, Benchmark, HivParameters, TOY_NAMES};
use crate::quantum::{QuantumConfig, QuantumSchurSolver};
use crate::schur::{ExactSchurSolver, NoisySchurSolver, SchurStepSolver};
use crate::sqp::SqpConfig;

/// Which problem to solve: `hiv` or `toy:<name>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSelector {
    Hiv,
    Toy(String),
}

impl std::str::FromStr for ProblemSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hiv" => Ok(ProblemSelector::Hiv),
            _ => match s.strip_prefix("toy:") {
                Some(name) if TOY_NAMES.contains(&name) => {
                    Ok(ProblemSelector::Toy(name.to_string()))
                }
                Some(name) => Err(Error::Config(format!(
                    "unknown problem selector `{s}`: no toy problem `{name}` (expected one of {})",
                    TOY_NAMES.join(", ")
                ))),
                None => Err(Error::Config(format!(
                    "unknown problem selector `{s}` (expected `hiv` or `toy:<name>`)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for ProblemSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProblemSelector::Hiv => f.write_str("hiv"),
            ProblemSelector::Toy(n) => write!(f, "toy:{n}"),
        }
    }
}

/// Which Schur-step backend to use: `exact`, `noisy:<ε>` or `quantum`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverSelector {
    Exact,
    Noisy(f64),
    Quantum,
}

impl std::str::FromStr for SolverSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverSelector::Exact),
            "quantum" => Ok(SolverSelector::Quantum),
            _ => {
                let eps = s
                    .strip_prefix("noisy:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v >= 0.0 && v.is_finite());
                eps.map(SolverSelector::Noisy).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown solver selector `{s}` (expected `exact`, `noisy:<eps>` or `quantum`)"
                    ))
                })
            }
        }
    }
}

impl std::fmt::Display for SolverSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverSelector::Exact => f.write_str("exact"),
            SolverSelector::Noisy(e) => write!(f, "noisy:{e}"),
            SolverSelector::Quantum => f.write_str("quantum"),
        }
    }
}

impl SolverSelector {
    pub fn build(&self, seed: u64, quantum: &QuantumConfig) -> Box<dyn SchurStepSolver> {
        match *self {
            SolverSelector::Exact => Box::new(ExactSchurSolver),
            SolverSelector::Noisy(eps) => Box::new(NoisySchurSolver::new(eps, seed)),
            SolverSelector::Quantum => Box::new(QuantumSchurSolver::new(QuantumConfig {
                seed,
                ..quantum.clone()
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    /// Horizon of the double-integrator toy problem.
    pub horizon: Option<usize>,
    pub hiv: HivParameters,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: "hiv".into(),
            horizon: None,
            hiv: HivParameters::default(),
        }
    }
}

impl ProblemSection {
    pub fn selector(&self) -> Result<ProblemSelector> {
        self.name.parse()
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        match self.selector()? {
            ProblemSelector::Hiv => hiv_benchmark(self.hiv.clone()),
            ProblemSelector::Toy(name) => toy_problem(&name, self.horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: String,
    pub quantum: QuantumConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            kind: "exact".into(),
            quantum: QuantumConfig::default(),
        }
    }
}

impl SolverSection {
    pub fn selector(&self) -> Result<SolverSelector> {
        self.kind.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub solvers: Vec<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            solvers: vec!["exact".into(), "quantum".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub mu_min: Vec<f64>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Barrier floor of the exact reference solve.
    pub reference_mu_min: f64,
    /// Iterations held at `μ_min` after the barrier loop. The tail limsup is
    /// a maximum over noisy steps, so short tails make it seed-dependent.
    pub floor_iterations: usize,
    /// Fraction of trailing iterations used for the tail estimate.
    pub tail_fraction: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            mu_min: vec![1e-4, 1e-6, 1e-8],
            eps: vec![0.0, 1e-6, 1e-4, 1e-2],
            seeds: vec![1, 2, 3, 4, 5],
            reference_mu_min: 1e-10,
            floor_iterations: 400,
            tail_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QsvtSection {
    pub kappas: Vec<f64>,
    pub eps_primes: Vec<f64>,
    pub matrix_dim: usize,
    pub grid_points: usize,
    pub degree_cap: usize,
}

impl Default for QsvtSection {
    fn default() -> Self {
        Self {
            kappas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            eps_primes: vec![1e-4, 1e-6, 1e-8],
            matrix_dim: 8,
            grid_points: 2000,
            degree_cap: crate::quantum::DEFAULT_DEGREE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub sqp: SqpConfig,
    pub compare: CompareSection,
    pub sweep: SweepSection,
    pub qsvt: QsvtSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.selector()?;
        self.solver.selector()?;
        self.sqp.validate()?;
        self.problem.hiv.validate()?;
        for s in &self.compare.solvers {
            s.parse::<SolverSelector>()?;
        }
        let sw = &self.sweep;
        if sw.mu_min.is_empty() || sw.eps.is_empty() || sw.seeds.is_empty() {
            return Err(Error::Config(
                "sweep grids and seed list must be nonempty".into(),
            ));
        }
        let mut seeds = sw.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != sw.seeds.len() {
            return Err(Error::Config("sweep seeds must be distinct".into()));
        }
        if sw.mu_min.iter().any(|m| !(*m > 0.0)) || sw.eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config(
                "sweep mu_min must be positive and eps nonnegative".into(),
            ));
        }
        if !(sw.tail_fraction > 0.0 && sw.tail_fraction <= 1.0) {
            return Err(Error::Config(
                "sweep.tail_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.qsvt.kappas.iter().any(|k| !(*k >= 1.0)) {
            return Err(Error::Config("qsvt.kappas entries must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors_parse() {
        assert_eq!(
            "hiv".parse::<ProblemSelector>().unwrap(),
            ProblemSelector::Hiv
        );
        assert_eq!(
            "toy:box".parse::<ProblemSelector>().unwrap(),
            ProblemSelector::Toy("box".into())
        );
        assert!("toy:".parse::<ProblemSelector>().is_err());
        assert_eq!(
            "noisy:1e-3".parse::<SolverSelector>().unwrap(),
            SolverSelector::Noisy(1e-3)
        );
        assert!("noisy:-1".parse::<SolverSelector>().is_err());
        assert!("magic".parse::<SolverSelector>().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 7
            [problem]
            name = "toy:double_integrator"
            horizon = 5
            [sqp]
            mu_min = 1e-6
            barrier_update = { rule = "geometric", factor = 0.25 }
            [solver]
            kind = "noisy:0.001"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.problem.horizon, Some(5));
        assert_eq!(cfg.sqp.mu_min, 1e-6);
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn parse_error_names_field() {
        let err = ExperimentConfig::from_toml_str("[sqp]\nmu_zero = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("mu_zero"), "{err}");
    }
}
