//! Target densities with exact log-density gradients.
//!
//! Analytic targets ship normalized log densities. The crescent and the
//! Bayesian posteriors ship the sampling-statement kernel: every additive
//! term that does not depend on the latent variables is dropped, which is
//! what a probabilistic-programming `~` statement accumulates. The
//! convention matters for the reflection statistic, whose denominator is
//! `log p(z)` itself; each target records which one it uses.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::DatasetFixture;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, LowerTriangularFactor, Matrix, PosDefMatrix};
use crate::rng::{self, Rng};
use crate::special::{inv_mills, ln_gamma, log_ndtr, log_sum_exp, normal_logpdf, sigmoid, softplus};

/// A log density on `R^dim` with its gradient.
pub trait LogDensity: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn log_density(&self, z: &[f64]) -> f64;

    /// Writes `∇ log p(z)` into `grad` and returns `log p(z)`.
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;

    /// True when `z` is within `radius` of a non-differentiable point.
    fn near_kink(&self, _z: &[f64], _radius: f64) -> bool {
        false
    }

    /// Kinks and modes of a 1-D density, used as quadrature break points.
    fn breakpoints_1d(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Writes one exact draw into `out`; false if there is no exact sampler.
    fn sample_exact(&self, _rng: &mut Rng, _out: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Normalized,
    /// Parameter-free constants dropped, as a `~` statement accumulates.
    DroppedConstants,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownMoments {
    pub mean: Option<Vec<f64>>,
    pub covariance: Option<Matrix>,
    pub correlation: Option<Matrix>,
    pub scale_matrix: Option<PosDefMatrix>,
}

/// Spherical profile `f(r) = log p₀` of an elliptical density, through its
/// derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialProfile {
    Gaussian,
    StudentT { df: f64 },
}

impl RadialProfile {
    /// `f′(r)` for a `dim`-dimensional density.
    pub fn log_derivative(&self, r: f64, dim: usize) -> f64 {
        match *self {
            RadialProfile::Gaussian => -r,
            RadialProfile::StudentT { df } => -(df + dim as f64) * r / (df + r * r),
        }
    }

    /// Whether `log p₀` is concave, the precondition for exact correlation
    /// recovery.
    pub fn is_log_concave(&self) -> bool {
        matches!(self, RadialProfile::Gaussian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticalStructure {
    pub location: Vec<f64>,
    pub scale: PosDefMatrix,
    pub profile: RadialProfile,
}

#[derive(Clone)]
pub struct TargetDensity {
    name: String,
    model: Arc<dyn LogDensity>,
    pub known_moments: KnownMoments,
    /// Point of even symmetry, when the density has one.
    pub symmetry_point: Option<Vec<f64>>,
    pub elliptical: Option<EllipticalStructure>,
    pub log_concave: bool,
    pub normalization: Normalization,
    /// Additive constant turning `log_density` into the normalized density.
    pub log_normalizer_offset: Option<f64>,
    /// Constant added on top of the model, see [`TargetDensity::shifted`].
    shift: f64,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("log_concave", &self.log_concave)
            .field("symmetry_point", &self.symmetry_point)
            .field("normalization", &self.normalization)
            .finish()
    }
}

impl TargetDensity {
    pub fn new(name: impl Into<String>, model: Arc<dyn LogDensity>) -> Self {
        Self {
            name: name.into(),
            model,
            known_moments: KnownMoments::default(),
            symmetry_point: None,
            elliptical: None,
            log_concave: false,
            normalization: Normalization::Normalized,
            log_normalizer_offset: Some(0.0),
            shift: 0.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &dyn LogDensity {
        self.model.as_ref()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        self.model.log_density(z) + self.shift
    }

    pub fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.model.log_density_and_grad(z, grad) + self.shift
    }

    pub fn grad_log_density(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_grad(z, &mut g);
        g
    }

    /// The normalized log density, when the normalizer is known.
    pub fn normalized_log_density(&self, z: &[f64]) -> Option<f64> {
        self.log_normalizer_offset
            .map(|c| self.log_density(z) + c)
    }

    pub fn near_kink(&self, z: &[f64], radius: f64) -> bool {
        self.model.near_kink(z, radius)
    }

    /// The same density with `c` added to every log-density value.
    pub fn shifted(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.shift += c;
        t.log_normalizer_offset = t.log_normalizer_offset.map(|o| o - c);
        t
    }

    pub fn has_exact_sampler(&self) -> bool {
        let mut out = vec![0.0; self.dim()];
        self.model.sample_exact(&mut rng::stream(0, 0), &mut out)
    }

    /// `n` exact draws, row `i` from stream `(seed, i)`.
    pub fn sample_exact(&self, n: usize, seed: u64) -> Option<Matrix> {
        if !self.has_exact_sampler() {
            return None;
        }
        let d = self.dim();
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            let mut r = rng::stream(seed, i as u64);
            self.model.sample_exact(&mut r, m.row_mut(i));
        }
        Some(m)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn check_positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {x}")))
    }
}

// ---------------------------------------------------------------------------
// Elliptical targets

#[derive(Debug)]
struct Elliptical {
    loc: Vec<f64>,
    chol: LowerTriangularFactor,
    profile: RadialProfile,
    log_norm: f64,
}

impl Elliptical {
    fn whiten(&self, z: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = z.iter().zip(&self.loc).map(|(a, b)| a - b).collect();
        self.chol.solve_in_place(&mut w);
        w
    }

    fn log_kernel(&self, r2: f64) -> f64 {
        let d = self.loc.len() as f64;
        match self.profile {
            RadialProfile::Gaussian => -0.5 * r2,
            RadialProfile::StudentT { df } => -0.5 * (df + d) * (r2 / df).ln_1p(),
        }
    }
}

impl LogDensity for Elliptical {
    fn dim(&self) -> usize {
        self.loc.len()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let w = self.whiten(z);
        let r2: f64 = w.iter().map(|x| x * x).sum();
        self.log_norm + self.log_kernel(r2)
    }

    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let mut w = self.whiten(z);
        let r2: f64 = w.iter().map(|x| x * x).sum();
        let factor = match self.profile {
            RadialProfile::Gaussian => 1.0,
            RadialProfile::StudentT { df } => (df + self.loc.len() as f64) / (df + r2),
        };
        let lp = self.log_norm + self.log_kernel(r2);
        // ∇ = -factor · M⁻¹(z - μ) = -factor · L⁻ᵀ w
        self.chol.solve_transpose_in_place(&mut w);
        for (g, x) in grad.iter_mut().zip(&w) {
            *g = -factor * x;
        }
        lp
    }

    fn breakpoints_1d(&self) -> Vec<f64> {
        vec![self.loc[0]]
    }

    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        let d = self.loc.len();
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let radial = match self.profile {
            RadialProfile::Gaussian => 1.0,
            RadialProfile::StudentT { df } => {
                let chi2: f64 = Gamma::new(0.5 * df, 2.0).expect("df > 0").sample(rng);
                (df / chi2).sqrt()
            }
        };
        self.chol.mul_vec_into(&x, out);
        for (o, m) in out.iter_mut().zip(&self.loc) {
            *o = m + radial * *o;
        }
        true
    }
}

pub fn make_mvn(mean: &[f64], scale: &PosDefMatrix) -> Result<TargetDensity> {
    check_len(scale.dim(), mean.len())?;
    let chol = cholesky(scale)?;
    let d = mean.len() as f64;
    let log_norm = -0.5 * d * (2.0 * PI).ln() - 0.5 * log_det(&chol);
    let model = Elliptical {
        loc: mean.to_vec(),
        chol,
        profile: RadialProfile::Gaussian,
        log_norm,
    };
    let mut t = TargetDensity::new("mvn", Arc::new(model));
    t.known_moments = KnownMoments {
        mean: Some(mean.to_vec()),
        covariance: Some(scale.matrix().clone()),
        correlation: Some(scale.correlation()),
        scale_matrix: Some(scale.clone()),
    };
    t.symmetry_point = Some(mean.to_vec());
    t.elliptical = Some(EllipticalStructure {
        location: mean.to_vec(),
        scale: scale.clone(),
        profile: RadialProfile::Gaussian,
    });
    t.log_concave = true;
    Ok(t)
}

pub fn make_multi_student_t(df: f64, loc: &[f64], scale: &PosDefMatrix) -> Result<TargetDensity> {
    check_positive("df", df)?;
    check_len(scale.dim(), loc.len())?;
    let chol = cholesky(scale)?;
    let d = loc.len() as f64;
    let log_norm = ln_gamma(0.5 * (df + d)) - ln_gamma(0.5 * df) - 0.5 * d * (df * PI).ln()
        - 0.5 * log_det(&chol);
    let profile = RadialProfile::StudentT { df };
    let model = Elliptical {
        loc: loc.to_vec(),
        chol,
        profile,
        log_norm,
    };
    let mut t = TargetDensity::new("multi_student_t", Arc::new(model));
    t.known_moments = KnownMoments {
        mean: (df > 1.0).then(|| loc.to_vec()),
        covariance: (df > 2.0).then(|| scale.matrix().scale(df / (df - 2.0))),
        correlation: Some(scale.correlation()),
        scale_matrix: Some(scale.clone()),
    };
    t.symmetry_point = Some(loc.to_vec());
    t.elliptical = Some(EllipticalStructure {
        location: loc.to_vec(),
        scale: scale.clone(),
        profile,
    });
    t.log_concave = false;
    Ok(t)
}

// ---------------------------------------------------------------------------
// Univariate targets

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnivariateKind {
    Laplace,
    StudentT { df: f64 },
    Cauchy,
    SkewNormal { alpha: f64 },
}

#[derive(Debug)]
struct Univariate {
    kind: UnivariateKind,
    loc: f64,
    scale: f64,
    log_norm: f64,
}

impl Univariate {
    fn eval(&self, x: f64) -> (f64, f64) {
        let u = (x - self.loc) / self.scale;
        let s = self.scale;
        match self.kind {
            UnivariateKind::Laplace => (self.log_norm - u.abs(), -u.signum() / s),
            UnivariateKind::StudentT { df } => student_1d(df, u, s, self.log_norm),
            UnivariateKind::Cauchy => student_1d(1.0, u, s, self.log_norm),
            UnivariateKind::SkewNormal { alpha } => {
                let lp = self.log_norm - 0.5 * u * u + log_ndtr(alpha * u);
                (lp, (-u + alpha * inv_mills(alpha * u)) / s)
            }
        }
    }
}

fn student_1d(df: f64, u: f64, s: f64, log_norm: f64) -> (f64, f64) {
    let lp = log_norm - 0.5 * (df + 1.0) * (u * u / df).ln_1p();
    (lp, -(df + 1.0) * u / (s * (df + u * u)))
}

impl LogDensity for Univariate {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.eval(z[0]).0
    }

    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (lp, g) = self.eval(z[0]);
        grad[0] = g;
        lp
    }

    fn near_kink(&self, z: &[f64], radius: f64) -> bool {
        matches!(self.kind, UnivariateKind::Laplace) && (z[0] - self.loc).abs() < radius
    }

    fn breakpoints_1d(&self) -> Vec<f64> {
        vec![self.loc]
    }

    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        let u = match self.kind {
            UnivariateKind::Laplace => {
                let a: f64 = rng.sample(Exp1);
                let b: f64 = rng.sample(Exp1);
                a - b
            }
            UnivariateKind::StudentT { df } => student_draw(rng, df),
            UnivariateKind::Cauchy => student_draw(rng, 1.0),
            UnivariateKind::SkewNormal { alpha } => {
                let delta = alpha / (1.0 + alpha * alpha).sqrt();
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                delta * a.abs() + (1.0 - delta * delta).sqrt() * b
            }
        };
        out[0] = self.loc + self.scale * u;
        true
    }
}

fn student_draw(rng: &mut Rng, df: f64) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    let chi2: f64 = Gamma::new(0.5 * df, 2.0).expect("df > 0").sample(rng);
    x / (chi2 / df).sqrt()
}

pub fn make_univariate(kind: UnivariateKind, loc: f64, scale: f64) -> Result<TargetDensity> {
    check_positive("scale", scale)?;
    let ls = scale.ln();
    let (name, log_norm, mean, var, symmetric, log_concave) = match kind {
        UnivariateKind::Laplace => (
            "laplace",
            -LN_2 - ls,
            Some(loc),
            Some(2.0 * scale * scale),
            true,
            true,
        ),
        UnivariateKind::StudentT { df } => {
            check_positive("df", df)?;
            let c = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - ls;
            let var = (df > 2.0).then(|| scale * scale * df / (df - 2.0));
            ("student_t", c, (df > 1.0).then_some(loc), var, true, false)
        }
        UnivariateKind::Cauchy => ("cauchy", -PI.ln() - ls, None, None, true, false),
        UnivariateKind::SkewNormal { alpha } => {
            if !alpha.is_finite() {
                return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
            }
            let delta = alpha / (1.0 + alpha * alpha).sqrt();
            let m = loc + scale * delta * (2.0 / PI).sqrt();
            let v = scale * scale * (1.0 - 2.0 * delta * delta / PI);
            let c = LN_2 - 0.5 * (2.0 * PI).ln() - ls;
            ("skew_normal", c, Some(m), Some(v), alpha == 0.0, true)
        }
    };
    let model = Univariate {
        kind,
        loc,
        scale,
        log_norm,
    };
    let mut t = TargetDensity::new(name, Arc::new(model));
    t.known_moments = KnownMoments {
        mean: mean.map(|m| vec![m]),
        covariance: var.map(|v| Matrix::from_diag(&[v])),
        correlation: var.map(|_| Matrix::identity(1)),
        scale_matrix: None,
    };
    t.symmetry_point = symmetric.then(|| vec![loc]);
    t.log_concave = log_concave;
    Ok(t)
}

// ---------------------------------------------------------------------------
// Mixtures

#[derive(Debug)]
struct Mixture1d {
    m: f64,
}

impl Mixture1d {
    fn eval(&self, x: f64) -> (f64, f64) {
        let a = -LN_2 + normal_logpdf(x, -self.m, 1.0);
        let b = -LN_2 + normal_logpdf(x, self.m, 1.0);
        let lp = log_sum_exp(a, b);
        let wa = (a - lp).exp();
        let wb = (b - lp).exp();
        (lp, -wa * (x + self.m) - wb * (x - self.m))
    }
}

impl LogDensity for Mixture1d {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        self.eval(z[0]).0
    }
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (lp, g) = self.eval(z[0]);
        grad[0] = g;
        lp
    }
    fn breakpoints_1d(&self) -> Vec<f64> {
        if self.m > 0.0 {
            vec![-self.m, 0.0, self.m]
        } else {
            vec![0.0]
        }
    }
    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        out[0] = sign * self.m + rng.sample::<f64, _>(StandardNormal);
        true
    }
}

/// `0.5 N(z; -m, 1) + 0.5 N(z; m, 1)`.
pub fn make_gaussian_mixture_1d(m: f64) -> Result<TargetDensity> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("m must be >= 0, got {m}")));
    }
    let mut t = TargetDensity::new("mixture_1d", Arc::new(Mixture1d { m }));
    t.known_moments = KnownMoments {
        mean: Some(vec![0.0]),
        covariance: Some(Matrix::from_diag(&[1.0 + m * m])),
        correlation: Some(Matrix::identity(1)),
        scale_matrix: None,
    };
    t.symmetry_point = Some(vec![0.0]);
    t.log_concave = m <= 1.0;
    Ok(t)
}

/// Components of each coordinate of the 2-D mixture: (mean, sd).
pub const MIXTURE_2D_COMPONENTS: [(f64, f64); 2] = [(-1.0, 2.0), (3.0, 1.0)];

#[derive(Debug)]
struct Mixture2d;

impl Mixture2d {
    fn eval(x: f64) -> (f64, f64) {
        let [(m1, s1), (m2, s2)] = MIXTURE_2D_COMPONENTS;
        let a = -LN_2 + normal_logpdf(x, m1, s1);
        let b = -LN_2 + normal_logpdf(x, m2, s2);
        let lp = log_sum_exp(a, b);
        let wa = (a - lp).exp();
        let wb = (b - lp).exp();
        (lp, -wa * (x - m1) / (s1 * s1) - wb * (x - m2) / (s2 * s2))
    }
}

impl LogDensity for Mixture2d {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        Self::eval(z[0]).0 + Self::eval(z[1]).0
    }
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (a, ga) = Self::eval(z[0]);
        let (b, gb) = Self::eval(z[1]);
        grad[0] = ga;
        grad[1] = gb;
        a + b
    }
    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        for o in out.iter_mut() {
            let (m, s) = MIXTURE_2D_COMPONENTS[usize::from(rng.random::<bool>())];
            *o = m + s * rng.sample::<f64, _>(StandardNormal);
        }
        true
    }
}

/// Two iid coordinates, each `½ N(-1, 2²) + ½ N(3, 1)`.
pub fn make_gaussian_mixture_2d() -> TargetDensity {
    let mut t = TargetDensity::new("mixture", Arc::new(Mixture2d));
    let [(m1, _), (m2, _)] = MIXTURE_2D_COMPONENTS;
    let mean = 0.5 * m1 + 0.5 * m2;
    t.known_moments.mean = Some(vec![mean, mean]);
    t
}

// ---------------------------------------------------------------------------
// Crescent

#[derive(Debug)]
struct Crescent {
    /// Center of the quadratic in z₁: 0 for the banana, 100 for the shifted form.
    shift: f64,
}

impl Crescent {
    fn ridge(&self, z1: f64) -> (f64, f64) {
        if self.shift == 0.0 {
            (0.03 * (z1 * z1 - 100.0), 0.06 * z1)
        } else {
            let u = z1 - self.shift;
            (0.03 * u * u, 0.06 * u)
        }
    }
}

impl LogDensity for Crescent {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        let (m, _) = self.ridge(z[0]);
        let r = z[1] - m;
        -z[0] * z[0] / 200.0 - 0.5 * r * r
    }
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (m, dm) = self.ridge(z[0]);
        let r = z[1] - m;
        grad[0] = -z[0] / 100.0 + r * dm;
        grad[1] = -r;
        -z[0] * z[0] / 200.0 - 0.5 * r * r
    }
    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        out[0] = 10.0 * rng.sample::<f64, _>(StandardNormal);
        out[1] = self.ridge(out[0]).0 + rng.sample::<f64, _>(StandardNormal);
        true
    }
}

/// `z₁ ~ N(0, 10²)`, `z₂ | z₁ ~ N(0.03 (z₁² − 100), 1)`; symmetric under
/// `z₁ ↦ −z₁`, neither even- nor elliptically symmetric.
pub fn make_crescent() -> TargetDensity {
    let mut t = TargetDensity::new("crescent", Arc::new(Crescent { shift: 0.0 }));
    // Var z₂ = 1 + 0.03²·Var(z₁²) = 1 + 0.0009·2·10⁴
    t.known_moments = KnownMoments {
        mean: Some(vec![0.0, 0.0]),
        covariance: Some(Matrix::from_diag(&[100.0, 19.0])),
        correlation: Some(Matrix::identity(2)),
        scale_matrix: None,
    };
    t.normalization = Normalization::DroppedConstants;
    t.log_normalizer_offset = Some(-(2.0 * PI * 10.0).ln());
    t
}

/// The variant centred at `z₁ = 100`: `z₂ | z₁ ~ N(0.03 (z₁ − 100)², 1)`.
pub fn make_crescent_shifted() -> TargetDensity {
    let mut t = TargetDensity::new("crescent_shifted", Arc::new(Crescent { shift: 100.0 }));
    t.known_moments.mean = Some(vec![0.0, 0.03 * (100.0 + 100.0 * 100.0)]);
    t.normalization = Normalization::DroppedConstants;
    t.log_normalizer_offset = Some(-(2.0 * PI * 10.0).ln());
    t
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression

#[derive(Debug)]
struct LogisticRegression {
    x1: Vec<f64>,
    x2: Vec<f64>,
    y: Vec<f64>,
    prior_scale: f64,
}

impl LogDensity for LogisticRegression {
    fn dim(&self) -> usize {
        3
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let prior: f64 = -z.iter().map(|b| b.abs()).sum::<f64>() / self.prior_scale;
        let lik: f64 = (0..self.y.len())
            .map(|i| {
                let eta = z[0] + z[1] * self.x1[i] + z[2] * self.x2[i];
                self.y[i] * eta - softplus(eta)
            })
            .sum();
        prior + lik
    }

    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for k in 0..3 {
            lp -= z[k].abs() / self.prior_scale;
            grad[k] = -z[k].signum() / self.prior_scale;
        }
        for i in 0..self.y.len() {
            let eta = z[0] + z[1] * self.x1[i] + z[2] * self.x2[i];
            lp += self.y[i] * eta - softplus(eta);
            let r = self.y[i] - sigmoid(eta);
            grad[0] += r;
            grad[1] += r * self.x1[i];
            grad[2] += r * self.x2[i];
        }
        lp
    }

    fn near_kink(&self, z: &[f64], radius: f64) -> bool {
        z.iter().any(|b| b.abs() < radius)
    }

    fn sample_exact(&self, rng: &mut Rng, out: &mut [f64]) -> bool {
        if !self.y.is_empty() {
            return false;
        }
        for o in out.iter_mut() {
            let a: f64 = rng.sample(Exp1);
            let b: f64 = rng.sample(Exp1);
            *o = self.prior_scale * (a - b);
        }
        true
    }
}

/// Default Laplace prior scale on each coefficient.
pub const LOGISTIC_PRIOR_SCALE: f64 = 0.5;

/// Coefficients `(β₀, β₁, β₂)` with iid `Laplace(0, prior_scale)` priors and
/// `yᵢ ~ Bernoulli(logit⁻¹(β₀ + β₁ x1ᵢ + β₂ x2ᵢ))`. An empty dataset leaves
/// the prior.
pub fn make_logistic_regression(data: &DatasetFixture, prior_scale: f64) -> Result<TargetDensity> {
    check_positive("prior_scale", prior_scale)?;
    let y = data.column("y")?.to_vec();
    let x1 = data.column("x1")?.to_vec();
    let x2 = data.column("x2")?.to_vec();
    if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidParameter(format!("y must be 0/1, got {bad}")));
    }
    let n = y.len();
    let model = LogisticRegression {
        x1,
        x2,
        y,
        prior_scale,
    };
    let mut t = TargetDensity::new("logistic_regression", Arc::new(model));
    t.log_concave = true;
    t.normalization = Normalization::DroppedConstants;
    if n == 0 {
        let var = 2.0 * prior_scale * prior_scale;
        t.symmetry_point = Some(vec![0.0; 3]);
        t.known_moments = KnownMoments {
            mean: Some(vec![0.0; 3]),
            covariance: Some(Matrix::from_diag(&[var; 3])),
            correlation: Some(Matrix::identity(3)),
            scale_matrix: None,
        };
        t.log_normalizer_offset = Some(-3.0 * (2.0 * prior_scale).ln());
    } else {
        t.log_normalizer_offset = None;
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Eight schools

#[derive(Debug)]
struct EightSchools {
    y: Vec<f64>,
    sigma: Vec<f64>,
    centered: bool,
    likelihood: bool,
}

impl EightSchools {
    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mu = z[0];
        let log_tau = z[1];
        let tau = log_tau.exp();
        let n = self.y.len();
        // mu ~ N(5, 3²); tau ~ N⁺(0, 5²) on log scale with Jacobian log tau
        let mut lp = -(mu - 5.0).powi(2) / 18.0 - tau * tau / 50.0 + log_tau;
        let mut g_mu = -(mu - 5.0) / 9.0;
        let mut g_lt = -tau * tau / 25.0 + 1.0;
        let mut g_rest = vec![0.0; n];
        if self.centered {
            lp -= n as f64 * log_tau;
            g_lt -= n as f64;
            for i in 0..n {
                let theta = z[2 + i];
                let u = (theta - mu) / tau;
                lp -= 0.5 * u * u;
                g_mu += u / tau;
                g_lt += u * u;
                g_rest[i] = -u / tau;
                if self.likelihood {
                    let r = (self.y[i] - theta) / self.sigma[i];
                    lp -= 0.5 * r * r;
                    g_rest[i] += r / self.sigma[i];
                }
            }
        } else {
            for i in 0..n {
                let eps = z[2 + i];
                lp -= 0.5 * eps * eps;
                g_rest[i] = -eps;
                if self.likelihood {
                    let theta = mu + tau * eps;
                    let r = (self.y[i] - theta) / self.sigma[i];
                    lp -= 0.5 * r * r;
                    let w = r / self.sigma[i];
                    g_mu += w;
                    g_lt += w * tau * eps;
                    g_rest[i] += w * tau;
                }
            }
        }
        if let Some(g) = grad {
            g[0] = g_mu;
            g[1] = g_lt;
            g[2..].copy_from_slice(&g_rest);
        }
        lp
    }
}

impl LogDensity for EightSchools {
    fn dim(&self) -> usize {
        2 + self.y.len()
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        self.eval(z, None)
    }
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(z, Some(grad))
    }
}

fn eight_schools(data: &DatasetFixture, centered: bool, likelihood: bool) -> Result<TargetDensity> {
    let y = data.column_of_len("y", 8)?.to_vec();
    let sigma = data.column_of_len("sigma", 8)?.to_vec();
    for &s in &sigma {
        check_positive("sigma", s)?;
    }
    let name = if centered { "eight_schools" } else { "eight_schools_nc" };
    let model = EightSchools {
        y,
        sigma,
        centered,
        likelihood,
    };
    let mut t = TargetDensity::new(name, Arc::new(model));
    t.normalization = Normalization::DroppedConstants;
    t.log_normalizer_offset = None;
    Ok(t)
}

/// Latent `(μ, log τ, θ₁..₈)` when `centered`, else `(μ, log τ, ε₁..₈)` with
/// `θᵢ = μ + τ εᵢ`.
pub fn make_eight_schools(data: &DatasetFixture, centered: bool) -> Result<TargetDensity> {
    eight_schools(data, centered, true)
}

/// The eight-schools prior alone (likelihood terms removed).
pub fn make_eight_schools_prior(data: &DatasetFixture, centered: bool) -> Result<TargetDensity> {
    eight_schools(data, centered, false)
}

/// Maps a non-centered draw `(μ, log τ, ε)` to centered coordinates
/// `(μ, log τ, μ + τ ε)`.
pub fn eight_schools_to_centered(z: &[f64]) -> Vec<f64> {
    let tau = z[1].exp();
    let mut out = z.to_vec();
    for e in out[2..].iter_mut() {
        *e = z[0] + tau * *e;
    }
    out
}

// ---------------------------------------------------------------------------
// Binomial GLM

#[derive(Debug)]
struct BinomialGlm {
    trials: Vec<f64>,
    successes: Vec<f64>,
    ye: Vec<f64>,
}

const GLM_PRIOR_VAR: f64 = 100.0 * 100.0;

impl LogDensity for BinomialGlm {
    fn dim(&self) -> usize {
        3
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        let prior = -z.iter().map(|b| b * b).sum::<f64>() / (2.0 * GLM_PRIOR_VAR);
        let lik: f64 = (0..self.ye.len())
            .map(|i| {
                let t = self.ye[i];
                let eta = z[0] + z[1] * t + z[2] * t * t;
                self.successes[i] * eta - self.trials[i] * softplus(eta)
            })
            .sum();
        prior + lik
    }
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for k in 0..3 {
            lp -= z[k] * z[k] / (2.0 * GLM_PRIOR_VAR);
            grad[k] = -z[k] / GLM_PRIOR_VAR;
        }
        for i in 0..self.ye.len() {
            let t = self.ye[i];
            let eta = z[0] + z[1] * t + z[2] * t * t;
            lp += self.successes[i] * eta - self.trials[i] * softplus(eta);
            let r = self.successes[i] - self.trials[i] * sigmoid(eta);
            grad[0] += r;
            grad[1] += r * t;
            grad[2] += r * t * t;
        }
        lp
    }
}

/// `(α, β₁, β₂)` with `N(0, 100²)` priors and
/// `Cᵢ ~ Binomial(Nᵢ, logit⁻¹(α + β₁ yeᵢ + β₂ yeᵢ²))`.
pub fn make_binomial_glm(data: &DatasetFixture) -> Result<TargetDensity> {
    let trials = data.column("N")?.to_vec();
    let successes = data.column("C")?.to_vec();
    let ye = data.column("ye")?.to_vec();
    for (c, n) in successes.iter().zip(&trials) {
        if !(*c >= 0.0 && c <= n) {
            return Err(Error::InvalidParameter(format!("need 0 <= C <= N, got C={c}, N={n}")));
        }
    }
    let model = BinomialGlm {
        trials,
        successes,
        ye,
    };
    let mut t = TargetDensity::new("glm", Arc::new(model));
    t.log_concave = true;
    t.normalization = Normalization::DroppedConstants;
    t.log_normalizer_offset = None;
    Ok(t)
}
