use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symvi_core::elbo::OptimizerConfig;
use symvi_core::families::{BaseDensity, BaseKind, Mode, DEFAULT_BASE_DF};
use symvi_core::mcmc::Algorithm;
use symvi_core::Exec;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Target {
    Student,
    Glm,
    EightSchoolsNc,
    Mixture,
    EightSchools,
    Crescent,
}

impl Table1Target {
    pub const ALL: [Table1Target; 6] = [
        Table1Target::Student,
        Table1Target::Glm,
        Table1Target::EightSchoolsNc,
        Table1Target::Mixture,
        Table1Target::EightSchools,
        Table1Target::Crescent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table1Target::Student => "student",
            Table1Target::Glm => "glm",
            Table1Target::EightSchoolsNc => "eight_schools_nc",
            Table1Target::Mixture => "mixture",
            Table1Target::EightSchools => "eight_schools",
            Table1Target::Crescent => "crescent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailTarget {
    Laplace,
    StudentT { df: f64 },
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.step > 0.0 && self.lo < self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("bad grid {self:?}")));
        }
        if (self.hi - self.lo) / self.step > 1e6 {
            return Err(HarnessError::InvalidConfig("grid has more than 1e6 points".into()));
        }
        Ok(())
    }
}

fn grid_tail() -> GridSpec {
    GridSpec::new(-2.0, 2.0, 0.01)
}
fn grid_mixture() -> GridSpec {
    GridSpec::new(-15.0, 15.0, 0.01)
}
fn grid_skew() -> GridSpec {
    GridSpec::new(-5.0, 5.0, 0.01)
}
fn default_tail_targets() -> Vec<TailTarget> {
    vec![TailTarget::Laplace, TailTarget::StudentT { df: 10.0 }, TailTarget::Cauchy]
}
fn default_m_values() -> Vec<f64> {
    vec![1.0, 10.0]
}
fn default_alphas() -> Vec<f64> {
    vec![0.0, 1.0, 3.0, 10.0]
}
fn default_n_obs() -> Vec<usize> {
    vec![0, 4, 128]
}
fn default_prior_scale() -> f64 {
    symvi_core::targets::LOGISTIC_PRIOR_SCALE
}
fn default_data_seed() -> u64 {
    2024
}
fn default_dim() -> usize {
    10
}
fn default_dfs() -> Vec<f64> {
    vec![3.0, 5.0, 10.0, 20.0]
}
fn default_rho() -> f64 {
    0.9
}
fn default_df() -> f64 {
    10.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_segments() -> usize {
    3
}
fn default_points() -> usize {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// VI versus long-run MCMC means for logistic regression with `N`
    /// observations, for each `N` in `n_obs`.
    LogisticSymmetry {
        #[serde(default = "default_n_obs")]
        n_obs: Vec<usize>,
        #[serde(default = "default_prior_scale")]
        prior_scale: f64,
        #[serde(default = "default_data_seed")]
        data_seed: u64,
    },
    /// Grid search of a Gaussian location over symmetric heavy-tailed
    /// targets.
    TailRobust {
        #[serde(default = "default_tail_targets")]
        targets: Vec<TailTarget>,
        #[serde(default = "grid_tail")]
        grid: GridSpec,
    },
    /// KL curves over the location for `½N(−m,1) + ½N(m,1)`.
    #[serde(rename = "mixture_1d")]
    Mixture1d {
        #[serde(default = "default_m_values")]
        m_values: Vec<f64>,
        #[serde(default = "grid_mixture")]
        grid: GridSpec,
        #[serde(default = "default_scale")]
        q_scale: f64,
    },
    /// Location error on skew-normal targets.
    Skew {
        #[serde(default = "default_alphas")]
        alphas: Vec<f64>,
        #[serde(default = "grid_skew")]
        grid: GridSpec,
        #[serde(default = "default_scale")]
        q_scale: f64,
    },
    /// Full-rank fits to `dim`-dimensional Student-t targets with
    /// equicorrelated scale matrix, compared with the scale-equation solver.
    MultiStudentGamma {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_dfs")]
        dfs: Vec<f64>,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Fitted scale against the target's scale matrix, one Student-t target.
    ScaleRecovery {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_df")]
        df: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// One benchmark row: VI fit, reference moments, error table, ε₉₀.
    Table1Row { target: Table1Target },
    /// Convexity of the KL along random location segments.
    ConvexityProbe {
        #[serde(default = "default_segments")]
        segments: usize,
        #[serde(default = "default_points")]
        n_points: usize,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::LogisticSymmetry { .. } => "logistic_symmetry",
            Experiment::TailRobust { .. } => "tail_robust",
            Experiment::Mixture1d { .. } => "mixture_1d",
            Experiment::Skew { .. } => "skew",
            Experiment::MultiStudentGamma { .. } => "multi_student_gamma",
            Experiment::ScaleRecovery { .. } => "scale_recovery",
            Experiment::Table1Row { .. } => "table1_row",
            Experiment::ConvexityProbe { .. } => "convexity_probe",
        }
    }

    /// Family used when the config does not specify one.
    pub fn default_family(&self) -> FamilySpec {
        match self {
            Experiment::TailRobust { .. } | Experiment::Mixture1d { .. } => FamilySpec {
                base: BaseChoice::Gaussian,
                mode: Mode::LocationOnly,
            },
            Experiment::Skew { .. } => FamilySpec {
                base: BaseChoice::LaplaceIid,
                mode: Mode::LocationOnly,
            },
            Experiment::ConvexityProbe { .. } => FamilySpec {
                base: BaseChoice::Gaussian,
                mode: Mode::LocationOnly,
            },
            _ => FamilySpec::default(),
        }
    }
}

/// Every experiment kind with a one-line description.
pub const EXPERIMENTS: [(&str, &str); 8] = [
    ("logistic_symmetry", "VI vs MCMC posterior means for logistic regression as N grows"),
    ("tail_robust", "Gaussian location grid search over Laplace, Student-t and Cauchy targets"),
    ("mixture_1d", "KL curves for a symmetric two-component mixture (m = 1 and m = 10)"),
    ("skew", "location error of a Laplace family on skew-normal targets"),
    ("multi_student_gamma", "correlation and scale recovery on 10-D Student-t, per df"),
    ("scale_recovery", "fitted scale vs target scale matrix for one Student-t target"),
    ("table1_row", "benchmark row: errors and symmetry statistic for one target"),
    ("convexity_probe", "discrete convexity of KL along random location segments"),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseChoice {
    Gaussian,
    LaplaceIid,
    StudentTIid {
        #[serde(default = "default_base_df")]
        df: f64,
    },
}

fn default_base_df() -> f64 {
    DEFAULT_BASE_DF
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub base: BaseChoice,
    pub mode: Mode,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            base: BaseChoice::Gaussian,
            mode: Mode::FullRank,
        }
    }
}

impl FamilySpec {
    pub fn base_density(&self, dim: usize) -> Result<BaseDensity, HarnessError> {
        let base = match self.base {
            BaseChoice::Gaussian => BaseDensity::gaussian(dim),
            BaseChoice::LaplaceIid => BaseDensity::laplace_iid(dim),
            BaseChoice::StudentTIid { df } => BaseDensity {
                kind: BaseKind::StudentTIid { df },
                dim,
            },
        };
        base.validate()
            .map_err(|e| HarnessError::InvalidConfig(format!("family: {e}")))?;
        Ok(base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSpec {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    /// Defaults to random-walk Metropolis for d ≤ 3 and HMC above.
    pub algorithm: Option<Algorithm>,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 2000,
            n_samples: 25_000,
            algorithm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Execution policy for the data-parallel loops; never changes results.
    #[serde(default)]
    pub exec: Exec,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            family: None,
            optimizer: OptimizerConfig::default(),
            sampler: SamplerSpec::default(),
            seed: 0,
            output: None,
            exec: Exec::default(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn family(&self) -> FamilySpec {
        self.family.unwrap_or_else(|| self.experiment.default_family())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::InvalidConfig(m));
        self.optimizer
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(format!("optimizer: {e}")))?;
        self.family().base_density(1)?;
        if self.sampler.n_chains == 0 || self.sampler.n_samples < 100 {
            return invalid("sampler needs n_chains >= 1 and n_samples >= 100".into());
        }
        match &self.experiment {
            Experiment::LogisticSymmetry { n_obs, prior_scale, .. } => {
                if n_obs.is_empty() || !(*prior_scale > 0.0) {
                    return invalid("logistic_symmetry needs n_obs and prior_scale > 0".into());
                }
            }
            Experiment::TailRobust { targets, grid } => {
                grid.validate()?;
                if targets.is_empty() {
                    return invalid("tail_robust needs at least one target".into());
                }
            }
            Experiment::Mixture1d { m_values, grid, q_scale } => {
                grid.validate()?;
                if m_values.iter().any(|m| !(*m >= 0.0)) || !(*q_scale > 0.0) {
                    return invalid("mixture_1d needs m >= 0 and q_scale > 0".into());
                }
            }
            Experiment::Skew { alphas, grid, q_scale } => {
                grid.validate()?;
                if alphas.iter().any(|a| !a.is_finite()) || !(*q_scale > 0.0) {
                    return invalid("skew needs finite alphas and q_scale > 0".into());
                }
            }
            Experiment::MultiStudentGamma { dim, dfs, rho } => {
                check_student(*dim, dfs, *rho)?;
                self.require_spherical()?;
            }
            Experiment::ScaleRecovery { dim, df, rho } => {
                check_student(*dim, &[*df], *rho)?;
                self.require_spherical()?;
            }
            Experiment::Table1Row { .. } => {}
            Experiment::ConvexityProbe { segments, n_points } => {
                if *segments == 0 || *n_points < 3 {
                    return invalid("convexity_probe needs segments >= 1, n_points >= 3".into());
                }
            }
        }
        let family = self.family();
        let grid_experiment = matches!(
            self.experiment,
            Experiment::TailRobust { .. } | Experiment::Mixture1d { .. } | Experiment::Skew { .. }
        );
        if grid_experiment && family.mode != Mode::LocationOnly {
            return invalid("grid experiments need a location_only family".into());
        }
        Ok(())
    }

    /// Correlation recovery is only claimed for a spherical (Gaussian) base.
    fn require_spherical(&self) -> Result<(), HarnessError> {
        let fam = self.family();
        if fam.base != BaseChoice::Gaussian || fam.mode != Mode::FullRank {
            return Err(HarnessError::InvalidConfig(
                "correlation recovery needs a full_rank gaussian family".into(),
            ));
        }
        Ok(())
    }
}

fn check_student(dim: usize, dfs: &[f64], rho: f64) -> Result<(), HarnessError> {
    let lower = -1.0 / (dim.max(2) as f64 - 1.0);
    if dim < 2 || dfs.is_empty() || dfs.iter().any(|d| !(*d > 2.0)) || !(rho > lower && rho < 1.0)
    {
        return Err(HarnessError::InvalidConfig(
            "student experiments need dim >= 2, df > 2 and a positive-definite correlation".into(),
        ));
    }
    Ok(())
}
