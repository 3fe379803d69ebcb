use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::Problem;
use crate::error::{Error, Result};
use crate::generators::parse_generator;
use crate::regularization::OptimizerConfig;
use crate::solver::SolverConfig;
use crate::terminal::TerminalCondition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Solve,
    Regularize,
    #[default]
    QuadraticUniqueness,
    LinearUniqueness,
    Convergence,
    Comparison,
    BoundsAudit,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub generator: String,
    pub terminal: String,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Overrides the registry's growth / y-Lipschitz constant.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ProblemConfig {
    pub fn new(generator: &str, terminal: &str, horizon: f64) -> Self {
        Self {
            generator: generator.to_string(),
            terminal: terminal.to_string(),
            horizon,
            lipschitz: None,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let mut generator = parse_generator(&self.generator)?;
        if let Some(l) = self.lipschitz {
            generator = generator.with_lipschitz(l)?;
        }
        let terminal = TerminalCondition::parse(&self.terminal, self.horizon)?;
        Ok(Problem {
            generator,
            terminal,
            generator_expr: self.generator.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Convolution indices, strictly increasing.
    pub n: Vec<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            n: vec![4.0, 8.0, 16.0, 32.0, 64.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub steps: usize,
    /// Step counts for convergence studies.
    pub steps_schedule: Vec<usize>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            steps_schedule: vec![50, 100, 200, 400],
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub uniqueness_tol: f64,
    /// Defaults to `1e-6 + 2 fp_tol`.
    pub monotonicity_slack: Option<f64>,
    /// Stability guard: an index is skipped when `modulus * dt` reaches this.
    pub stability_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            uniqueness_tol: 1e-2,
            monotonicity_slack: None,
            stability_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub t: f64,
    pub y: f64,
    /// Sample count for the convolution property checks.
    pub samples: usize,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        Self {
            z_min: -3.0,
            z_max: 3.0,
            points: 61,
            t: 0.0,
            y: 0.0,
            samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Replaces `max(L_gen, L_xi)` in the bound check.
    pub declared_l: Option<f64>,
    pub offenders: usize,
    pub grid_radius: f64,
    pub grid_points: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            declared_l: None,
            offenders: 10,
            grid_radius: 6.0,
            grid_points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub problem: ProblemConfig,
    /// Second problem for comparison runs.
    #[serde(default)]
    pub comparison: Option<ProblemConfig>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub regularize: RegularizeConfig,
    #[serde(default)]
    pub audit: AuditConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Defaults everywhere except the problem.
    pub fn new(pipeline: Pipeline, problem: ProblemConfig) -> Self {
        Self {
            pipeline,
            seed: 0,
            output_dir: default_output(),
            problem,
            comparison: None,
            schedule: ScheduleConfig::default(),
            lattice: LatticeConfig::default(),
            optimizer: OptimizerConfig::default(),
            solver: SolverConfig::default(),
            tolerances: Tolerances::default(),
            regularize: RegularizeConfig::default(),
            audit: AuditConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn monotonicity_slack(&self) -> f64 {
        self.tolerances
            .monotonicity_slack
            .unwrap_or(1e-6 + 2.0 * self.solver.fp_tol)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.solver.validate()?;
        if !(self.problem.horizon.is_finite() && self.problem.horizon > 0.0) {
            return Err(Error::Config(format!("problem.horizon must be > 0, got {}", self.problem.horizon)));
        }
        let n = &self.schedule.n;
        if n.iter().any(|x| !(x.is_finite() && *x > 0.0)) || n.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!("schedule.n must be positive and strictly increasing, got {n:?}")));
        }
        if self.lattice.steps == 0 || self.lattice.steps_schedule.contains(&0) {
            return Err(Error::Config("lattice step counts must be >= 1".into()));
        }
        let t = &self.tolerances;
        if !(t.uniqueness_tol.is_finite() && t.uniqueness_tol > 0.0) {
            return Err(Error::Config(format!("tolerances.uniqueness_tol must be > 0, got {}", t.uniqueness_tol)));
        }
        if let Some(s) = t.monotonicity_slack {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("tolerances.monotonicity_slack must be >= 0, got {s}")));
            }
        }
        if !(t.stability_threshold > 0.0 && t.stability_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "tolerances.stability_threshold must lie in (0, 1], got {}",
                t.stability_threshold
            )));
        }
        let r = &self.regularize;
        if !(r.z_min < r.z_max) || r.points < 2 {
            return Err(Error::Config("regularize needs z_min < z_max and points >= 2".into()));
        }
        if let Some(l) = self.audit.declared_l {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("audit.declared_l must be > 0, got {l}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [problem]
            generator = "quad(1)"
            terminal = "sin@T"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline, Pipeline::QuadraticUniqueness);
        assert_eq!(cfg.schedule.n, vec![4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(cfg.lattice.steps, 200);
        assert_eq!(cfg.solver.fp_tol, 1e-12);
        assert_eq!(cfg.optimizer.coarse_points, 257);
        assert_eq!(cfg.monotonicity_slack(), 1e-6 + 2e-12);
        assert_eq!(cfg.problem.horizon, 1.0);
    }

    #[test]
    fn full_config_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            pipeline = "linear-uniqueness"
            seed = 11
            output_dir = "runs/a"

            [problem]
            generator = "softabs"
            terminal = "sin@T"
            horizon = 0.5

            [schedule]
            n = [2, 4]

            [lattice]
            steps = 100

            [optimizer]
            coarse_points = 129

            [tolerances]
            uniqueness_tol = 0.05
            monotonicity_slack = 1e-5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline, Pipeline::LinearUniqueness);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.optimizer.coarse_points, 129);
        assert_eq!(cfg.optimizer.refine_iters, 60);
        assert_eq!(cfg.monotonicity_slack(), 1e-5);
        let p = cfg.problem.build().unwrap();
        assert_eq!(p.horizon(), 0.5);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "[problem]\ngenerator = \"zero\"\nterminal = \"sin@T\"\n";
        assert!(ExperimentConfig::from_toml_str(&format!("{base}[schedule]\nn = [8, 4]\n")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{base}[lattice]\nsteps = 0\n")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{base}[tolerances]\nuniqueness_tol = -1\n")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{base}bogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml_str("pipeline = \"nope\"\n[problem]\ngenerator=\"zero\"\nterminal=\"sin@T\"").is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{base}[optimizer]\ntol = 0\n")).is_err());
    }
}
