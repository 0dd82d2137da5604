use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use symvi_core::diagnostics::{ConvexityVerdict, ErrorTable, GammaSolution, SymmetryReport};
use symvi_core::elbo::OptimizationTrace;
use symvi_core::families::LocationScaleApprox;
use symvi_core::targets::Normalization;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub label: String,
    pub approx: LocationScaleApprox,
    pub optimizer_seed: u64,
    pub converged: bool,
    pub steps_used: usize,
    /// Mean per-step ELBO estimate over the final window.
    pub final_elbo: f64,
    #[serde(skip)]
    pub trace: OptimizationTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledErrorTable {
    pub label: String,
    pub table: ErrorTable,
}

/// [`SymmetryReport`] without the per-draw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySummary {
    pub label: String,
    pub epsilon_90: f64,
    pub mu_used: Vec<f64>,
    pub n_samples: usize,
    pub n_degenerate: usize,
    pub normalization: Normalization,
}

impl SymmetrySummary {
    pub fn new(label: impl Into<String>, r: &SymmetryReport) -> Self {
        Self {
            label: label.into(),
            epsilon_90: r.epsilon_90,
            mu_used: r.mu_used.clone(),
            n_samples: r.n_samples,
            n_degenerate: r.n_degenerate,
            normalization: r.normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaComparison {
    pub df: f64,
    pub gamma_fit: f64,
    pub oracle: GammaSolution,
    pub relative_gap: f64,
    pub scale_deviation: f64,
    pub max_correlation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub series: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledConvexity {
    pub label: String,
    pub log_concave: bool,
    pub verdict: ConvexityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    /// The config as run, with the output path cleared.
    pub config: ExperimentConfig,
    pub version: String,
    pub fits: Vec<Fit>,
    pub error_tables: Vec<LabeledErrorTable>,
    pub symmetry: Vec<SymmetrySummary>,
    pub gamma: Vec<GammaComparison>,
    pub convexity: Vec<LabeledConvexity>,
    pub curves: Vec<Curve>,
    pub scalars: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Excluded from the determinism contract.
    pub wall_clock_seconds: f64,
}

impl ExperimentResult {
    pub fn new(config: &ExperimentConfig) -> Self {
        let mut config = config.clone();
        config.output = None;
        Self {
            experiment: config.experiment.kind().to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            fits: Vec::new(),
            error_tables: Vec::new(),
            symmetry: Vec::new(),
            gamma: Vec::new(),
            convexity: Vec::new(),
            curves: Vec::new(),
            scalars: BTreeMap::new(),
            warnings: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn curve(&self, series: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.series == series)
    }

    pub fn fit(&self, label: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.label == label)
    }

    pub(crate) fn set(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }
}
