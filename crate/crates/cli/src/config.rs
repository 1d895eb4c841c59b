//! Experiment configuration files.
//!
//! A config is a TOML document with a `version`, the shared problem,
//! schedule and step-size tables, and one table per subcommand:
//!
//! ```toml
//! version = 1
//! seed = 42
//! eps = 1e-8
//!
//! [problem]
//! name = "quadratic_diag"
//! eigenvalues = [1.0, 2.0]
//! noise = { kind = "gaussian", sigma = 0.5 }
//!
//! [schedule]
//! kind = "adam"
//! lambda = 1.0
//! alpha1 = 1.0
//! alpha2 = 1.0
//!
//! [stepsize]
//! gamma0 = 0.5
//! alpha = 0.7
//!
//! [optimize]
//! algorithm = "general"
//! n_iter = 100000
//! n_runs = 100
//! x0 = [1.0, 1.0]
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::Path;

use adaflow_core::optimize::{Algorithm, StepsizeSpec};
use adaflow_core::problems::{self, NoiseModel, Problem};
use adaflow_core::schedules::{Coefficient, ScheduleSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

fn default_eps() -> f64 {
    adaflow_core::optimize::DEFAULT_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepsize: Option<StepsizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traps: Option<TrapsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemConfig {
    QuadraticDiag(QuadraticConfig),
    SaddleQuartic(SaddleConfig),
    LeastSquares(LeastSquaresConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleConfig {
    #[serde(default)]
    pub noise: NoiseConfig,
}

/// Least squares with minibatch sampling; without `d`/`k` the fixed
/// four-point data set is used, otherwise Gaussian data from `data_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresConfig {
    pub batch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Gaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Adam {
        lambda: f64,
        alpha1: f64,
        alpha2: f64,
    },
    Constant {
        h: f64,
        r: f64,
        p: f64,
        q: f64,
    },
    HeavyBall {
        r: f64,
    },
    Nag {
        alpha: f64,
    },
    /// Each coefficient is `limit + amplitude·(1 + t)^(−rate)`.
    PowerLaw {
        h: PowerLawConfig,
        r: PowerLawConfig,
        p: PowerLawConfig,
        q: PowerLawConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawConfig {
    pub limit: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeConfig {
    pub gamma0: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemConfig {
    General,
    Adagrad,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmConfig {
    General,
    Adagrad,
    Nag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub system: SystemConfig,
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Step-halving tolerance; 0 integrates with fixed steps.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    /// Keep every `record_every`-th accepted step in the trajectory file.
    #[serde(default = "one")]
    pub record_every: usize,
    /// Number of check points for the Nesterov change of variable; 0 disables it.
    #[serde(default)]
    pub change_of_variable: usize,
}

fn default_t0() -> f64 {
    adaflow_core::integrate::DEFAULT_T0
}

fn default_step() -> f64 {
    1e-2
}

fn default_tol() -> f64 {
    1e-8
}

fn default_min_step() -> f64 {
    1e-12
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub algorithm: AlgorithmConfig,
    pub n_iter: usize,
    pub n_runs: usize,
    pub x0: Vec<f64>,
    /// Iterations between recorded rows; 0 keeps only the first and last.
    #[serde(default)]
    pub record_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    /// Defaults to the first declared minimum of the problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default)]
    pub n_runs: usize,
    #[serde(default)]
    pub n_iter: usize,
    #[serde(default = "default_filter")]
    pub filter_radius: f64,
}

fn default_filter() -> f64 {
    adaflow_core::clt::DEFAULT_FILTER_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapsConfig {
    pub x_star: Vec<f64>,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub n_runs: usize,
    #[serde(default)]
    pub n_iter: usize,
    #[serde(default)]
    pub init_radius: f64,
    #[serde(default = "default_classify")]
    pub classify_radius: f64,
    /// Partial-sum checks of the summability hypotheses (10⁶ terms).
    #[serde(default = "yes")]
    pub check_assumptions: bool,
}

fn default_classify() -> f64 {
    adaflow_core::traps::DEFAULT_CLASSIFY_RADIUS
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_problem(&self) -> Result<Problem, CliError> {
        Ok(self.problem.build()?)
    }

    pub fn build_schedule(&self) -> Result<ScheduleSpec, CliError> {
        Ok(self.schedule.build()?)
    }

    pub fn build_stepsize(&self) -> Result<StepsizeSpec, CliError> {
        let s = self
            .stepsize
            .ok_or_else(|| CliError::Config("missing [stepsize] table".into()))?;
        Ok(StepsizeSpec::new(s.gamma0, s.alpha)?)
    }

    /// The algorithm together with the schedule it runs under.
    pub fn algorithm(&self, which: AlgorithmConfig) -> Result<Algorithm, CliError> {
        match (which, &self.schedule) {
            (AlgorithmConfig::Nag, ScheduleConfig::Nag { alpha }) => Ok(Algorithm::Nag { alpha: *alpha }),
            (AlgorithmConfig::Nag, _) => Err(CliError::Config(
                "algorithm \"nag\" needs a schedule of kind \"nag\"".into(),
            )),
            (_, ScheduleConfig::Nag { .. }) => Err(CliError::Config(
                "a schedule of kind \"nag\" is only valid with the nag algorithm".into(),
            )),
            (AlgorithmConfig::General, _) => Ok(Algorithm::General),
            (AlgorithmConfig::Adagrad, _) => Ok(Algorithm::Adagrad),
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> adaflow_core::Result<Problem> {
        match self {
            Self::QuadraticDiag(c) => {
                problems::quadratic_diag(c.eigenvalues.clone(), c.noise.build(c.eigenvalues.len()))
            }
            Self::SaddleQuartic(c) => problems::saddle_quartic(c.noise.build(2)),
            Self::LeastSquares(c) => match (c.d, c.k) {
                (None, None) => problems::default_least_squares(c.batch),
                (Some(d), Some(k)) => problems::random_least_squares(d, k, c.batch, c.data_seed),
                _ => Err(adaflow_core::Error::Config(
                    "least_squares needs both d and k, or neither".into(),
                )),
            },
        }
    }
}

impl NoiseConfig {
    fn build(&self, d: usize) -> NoiseModel {
        match self {
            Self::None => NoiseModel::None,
            Self::Gaussian { sigma } => NoiseModel::isotropic(d, *sigma),
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> adaflow_core::Result<ScheduleSpec> {
        match *self {
            Self::Adam { lambda, alpha1, alpha2 } => ScheduleSpec::adam(lambda, alpha1, alpha2),
            Self::Constant { h, r, p, q } => ScheduleSpec::constant(h, r, p, q),
            Self::HeavyBall { r } => ScheduleSpec::heavy_ball(r),
            Self::Nag { alpha } => ScheduleSpec::nag(alpha),
            Self::PowerLaw { h, r, p, q } => {
                let c = |x: PowerLawConfig| Coefficient::power_law(x.limit, x.amplitude, x.rate);
                let spec = ScheduleSpec::Custom {
                    h: c(h),
                    r: c(r),
                    p: c(p),
                    q: c(q),
                };
                spec.validate_params()?;
                Ok(spec)
            }
        }
    }
}
