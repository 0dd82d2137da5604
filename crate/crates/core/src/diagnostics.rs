//! Symmetry and accuracy diagnostics.
//!
//! The reflection statistic `ε(z) = |(log p(z) − log p(z′)) / log p(z)|`
//! with `z′ = 2μ − z` is evaluated with the target's own normalization
//! convention (see [`Normalization`]), so it changes when a constant is
//! added to `log p`. Error metrics compare moment summaries; the γ solver
//! gives the scale multiplier of the optimal Gaussian fit to an elliptical
//! target.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::elbo::kl_quadrature;
use crate::error::{Error, Result};
use crate::families::{mean_and_se, BaseKind, LocationScaleApprox};
use crate::linalg::{cholesky, inverse_from_factor, Matrix, PosDefMatrix};
use crate::par::{map_indexed, Exec};
use crate::quadrature::Quadrature;
use crate::special::ln_gamma;
use crate::targets::{Normalization, TargetDensity};

/// Denominators with `|log p(z)|` below this are skipped.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Minimum number of usable draws for a reflection report.
pub const MIN_EPSILON_SAMPLES: usize = 100;

/// Covariances with `|Cov_p|` below this make the relative error unstable.
pub const UNSTABLE_COVARIANCE: f64 = 1e-10;

pub fn symmetry_violation(target: &TargetDensity, z: &[f64], mu: &[f64]) -> Result<f64> {
    if z.len() != target.dim() || mu.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: if z.len() != target.dim() { z.len() } else { mu.len() },
        });
    }
    let lp = target.log_density(z);
    if lp.abs() < DEGENERATE_DENOMINATOR {
        return Err(Error::DegenerateDenominator(lp.abs()));
    }
    let reflected: Vec<f64> = z.iter().zip(mu).map(|(x, m)| 2.0 * m - x).collect();
    Ok(((lp - target.log_density(&reflected)) / lp).abs())
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub epsilon_values: Vec<f64>,
    pub epsilon_90: f64,
    pub mu_used: Vec<f64>,
    pub n_samples: usize,
    /// Draws skipped for a near-zero denominator.
    pub n_degenerate: usize,
    pub normalization: Normalization,
}

pub fn epsilon_90(target: &TargetDensity, draws: &Matrix, mu: &[f64]) -> Result<SymmetryReport> {
    epsilon_90_with(target, draws, mu, Exec::default())
}

pub fn epsilon_90_with(
    target: &TargetDensity,
    draws: &Matrix,
    mu: &[f64],
    exec: Exec,
) -> Result<SymmetryReport> {
    if draws.ncols() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: draws.ncols(),
        });
    }
    let per_draw = map_indexed(exec, draws.nrows(), |i| {
        symmetry_violation(target, draws.row(i), mu)
    });
    let mut values = Vec::with_capacity(per_draw.len());
    let mut n_degenerate = 0;
    for r in per_draw {
        match r {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) | Err(Error::DegenerateDenominator(_)) => n_degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if values.len() < MIN_EPSILON_SAMPLES {
        return Err(Error::TooFewValidSamples {
            valid: values.len(),
            required: MIN_EPSILON_SAMPLES,
        });
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(SymmetryReport {
        epsilon_90: quantile_sorted(&sorted, 0.9),
        n_samples: values.len(),
        epsilon_values: values,
        mu_used: mu.to_vec(),
        n_degenerate,
        normalization: target.normalization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub correlation: Matrix,
    /// Zero for moments computed in closed form.
    pub n_samples: usize,
    /// Standard errors of the mean.
    pub mc_std_errors: Vec<f64>,
}

fn correlation_of(cov: &Matrix) -> Matrix {
    let d = cov.nrows();
    let mut corr = Matrix::identity(d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let s = (cov[(i, i)] * cov[(j, j)]).sqrt();
                corr[(i, j)] = if s > 0.0 { (cov[(i, j)] / s).clamp(-1.0, 1.0) } else { 0.0 };
            }
        }
    }
    corr
}

impl MomentSummary {
    /// Moments of a location-scale approximation in closed form.
    pub fn from_approx(q: &LocationScaleApprox) -> Self {
        let var = match q.base().kind {
            BaseKind::Gaussian => 1.0,
            BaseKind::LaplaceIid => 2.0,
            BaseKind::StudentTIid { df } => df / (df - 2.0),
        };
        let covariance = q.scale_matrix().matrix().scale(var);
        Self::exact(q.nu().to_vec(), covariance)
    }

    pub fn exact(mean: Vec<f64>, covariance: Matrix) -> Self {
        let d = mean.len();
        Self {
            correlation: correlation_of(&covariance),
            covariance,
            mean,
            n_samples: 0,
            mc_std_errors: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.covariance[(i, i)].sqrt()
    }
}

/// Sample mean, unbiased covariance and correlation, with iid standard
/// errors of the mean.
pub fn estimate_moments(draws: &Matrix) -> Result<MomentSummary> {
    let n = draws.nrows();
    if n < 2 {
        return Err(Error::TooFewValidSamples { valid: n, required: 2 });
    }
    let d = draws.ncols();
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for row in draws.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in draws.rows() {
        for k in 0..d {
            centered[k] = row[k] - mean[k];
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (nf - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let mc_std_errors = (0..d).map(|i| (cov[(i, i)] / nf).sqrt()).collect();
    Ok(MomentSummary {
        correlation: correlation_of(&cov),
        covariance: cov,
        mean,
        n_samples: n,
        mc_std_errors,
    })
}

/// As [`estimate_moments`], with standard errors from per-coordinate
/// effective sample sizes.
pub fn estimate_moments_with_ess(draws: &Matrix, ess: &[f64]) -> Result<MomentSummary> {
    let mut m = estimate_moments(draws)?;
    if ess.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: ess.len(),
        });
    }
    for i in 0..m.dim() {
        m.mc_std_errors[i] = (m.covariance[(i, i)] / ess[i].max(1.0)).sqrt();
    }
    Ok(m)
}

fn check_same_dim(p: &MomentSummary, q: &MomentSummary) -> Result<()> {
    if p.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        })
    }
}

/// `|E_p − E_q| / max(sd_p, |E_p|)` per coordinate.
pub fn delta_mean(p: &MomentSummary, q: &MomentSummary) -> Result<Vec<f64>> {
    check_same_dim(p, q)?;
    (0..p.dim())
        .map(|i| {
            let scale = p.sd(i).max(p.mean[i].abs());
            if scale == 0.0 {
                Err(Error::ZeroScale { coord: i })
            } else {
                Ok((p.mean[i] - q.mean[i]).abs() / scale)
            }
        })
        .collect()
}

/// `|Corr_p − Corr_q|` elementwise; the diagonal is zero by construction.
pub fn delta_corr(p: &MomentSummary, q: &MomentSummary) -> Result<Matrix> {
    check_same_dim(p, q)?;
    let d = p.dim();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                out[(i, j)] = (p.correlation[(i, j)] - q.correlation[(i, j)]).abs();
            }
        }
    }
    Ok(out)
}

/// `|Cov_p − Cov_q| / |Cov_p|` elementwise. Entries with
/// `|Cov_p| < UNSTABLE_COVARIANCE` are reported but flagged by
/// [`ErrorTable`].
pub fn delta_cov(p: &MomentSummary, q: &MomentSummary) -> Result<Matrix> {
    check_same_dim(p, q)?;
    let d = p.dim();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let cp = p.covariance[(i, j)];
            let diff = (cp - q.covariance[(i, j)]).abs();
            out[(i, j)] = if diff == 0.0 { 0.0 } else { diff / cp.abs() };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    /// `None` on the diagonal.
    pub delta_corr: Option<f64>,
    pub delta_cov: f64,
    pub cov_unstable: bool,
}

/// Per-coordinate and per-pair errors (`i ≤ j`) with their averages.
/// `mean_delta_corr` averages off-diagonal pairs; `mean_delta_cov`
/// averages every stable pair including the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub delta_mean: Vec<f64>,
    pub pairs: Vec<PairError>,
    pub mean_delta_mean: f64,
    pub mean_delta_corr: f64,
    pub mean_delta_cov: f64,
    pub epsilon_90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    coord: Option<usize>,
    delta_mean: Option<f64>,
    pair_i: Option<usize>,
    pair_j: Option<usize>,
    delta_corr: Option<f64>,
    delta_cov: Option<f64>,
    epsilon_90: Option<f64>,
}

/// Column order of [`ErrorTable::write_csv`].
pub const ERROR_CSV_COLUMNS: [&str; 7] = [
    "coord",
    "delta_mean",
    "pair_i",
    "pair_j",
    "delta_corr",
    "delta_cov",
    "epsilon_90",
];

fn mean_or_nan(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ErrorTable {
    pub fn compute(p: &MomentSummary, q: &MomentSummary, epsilon_90: Option<f64>) -> Result<Self> {
        let dm = delta_mean(p, q)?;
        let dc = delta_corr(p, q)?;
        let dv = delta_cov(p, q)?;
        let d = p.dim();
        let mut pairs = Vec::new();
        for i in 0..d {
            for j in i..d {
                pairs.push(PairError {
                    i,
                    j,
                    delta_corr: (i != j).then(|| dc[(i, j)]),
                    delta_cov: dv[(i, j)],
                    cov_unstable: p.covariance[(i, j)].abs() < UNSTABLE_COVARIANCE,
                });
            }
        }
        Ok(Self::from_parts(dm, pairs, epsilon_90))
    }

    pub fn from_parts(delta_mean: Vec<f64>, pairs: Vec<PairError>, epsilon_90: Option<f64>) -> Self {
        let corr: Vec<f64> = pairs.iter().filter_map(|p| p.delta_corr).collect();
        let cov: Vec<f64> = pairs
            .iter()
            .filter(|p| !p.cov_unstable)
            .map(|p| p.delta_cov)
            .collect();
        Self {
            mean_delta_mean: mean_or_nan(&delta_mean),
            mean_delta_corr: mean_or_nan(&corr),
            mean_delta_cov: mean_or_nan(&cov),
            delta_mean,
            pairs,
            epsilon_90,
        }
    }

    pub fn empty() -> Self {
        Self::from_parts(Vec::new(), Vec::new(), None)
    }

    pub fn max_delta_corr(&self) -> f64 {
        self.pairs
            .iter()
            .filter_map(|p| p.delta_corr)
            .fold(0.0, f64::max)
    }

    pub fn max_delta_mean(&self) -> f64 {
        self.delta_mean.iter().copied().fold(0.0, f64::max)
    }

    /// One row per coordinate, then one per pair. Empty cells are blank;
    /// `epsilon_90` repeats on every row when present.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(ERROR_CSV_COLUMNS).map_err(csv_err)?;
        for (i, v) in self.delta_mean.iter().enumerate() {
            wr.serialize(CsvRow {
                coord: Some(i),
                delta_mean: Some(*v),
                pair_i: None,
                pair_j: None,
                delta_corr: None,
                delta_cov: None,
                epsilon_90: self.epsilon_90,
            })
            .map_err(csv_err)?;
        }
        for p in &self.pairs {
            wr.serialize(CsvRow {
                coord: None,
                delta_mean: None,
                pair_i: Some(p.i),
                pair_j: Some(p.j),
                delta_corr: p.delta_corr,
                delta_cov: Some(p.delta_cov),
                epsilon_90: self.epsilon_90,
            })
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Instability
    /// flags are not stored, so every covariance entry counts as stable.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut delta_mean = Vec::new();
        let mut pairs = Vec::new();
        let mut eps = None;
        for row in rd.deserialize::<CsvRow>() {
            let row = row.map_err(csv_err)?;
            eps = eps.or(row.epsilon_90);
            match (row.coord, row.delta_mean, row.pair_i, row.pair_j, row.delta_cov) {
                (Some(_), Some(v), None, None, _) => delta_mean.push(v),
                (None, None, Some(i), Some(j), Some(cov)) => pairs.push(PairError {
                    i,
                    j,
                    delta_corr: row.delta_corr,
                    delta_cov: cov,
                    cov_unstable: false,
                }),
                _ => return Err(Error::InvalidParameter("malformed error-table row".into())),
            }
        }
        Ok(Self::from_parts(delta_mean, pairs, eps))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}

// ---------------------------------------------------------------------------
// Scale multiplier of the optimal Gaussian fit to an elliptical target

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub gamma: f64,
    /// `|d − γ·RHS(γ)| / d` at the returned `γ`.
    pub residual: f64,
    /// Integrand evaluations spent across all quadratures.
    pub quadrature_points: usize,
    pub bracket: (f64, f64),
}

/// Radius beyond which the `d`-dimensional standard Gaussian has
/// negligible radial mass (below `1e-12`).
pub fn radial_cutoff(dim: usize) -> f64 {
    (dim as f64).sqrt() + 10.0
}

fn radial_constant(dim: usize) -> f64 {
    let d = dim as f64;
    ((1.0 - 0.5 * d) * std::f64::consts::LN_2 - ln_gamma(0.5 * d)).exp()
}

/// `RHS(γ) = −c_d ∫₀^R f′(γr) e^{−r²/2} r^d dr` with
/// `c_d = 2^{1−d/2}/Γ(d/2)`; the optimal `γ` solves `d/γ = RHS(γ)`.
pub fn gamma_rhs<F: Fn(f64) -> f64>(
    f_prime: &F,
    dim: usize,
    gamma: f64,
    quad: &Quadrature,
) -> Result<(f64, usize)> {
    let d = dim as i32;
    let r = quad.integrate(
        |r| f_prime(gamma * r) * (-0.5 * r * r).exp() * r.powi(d),
        0.0,
        radial_cutoff(dim),
    )?;
    if !r.converged {
        return Err(Error::QuadratureFailure(format!(
            "radial integral did not converge at gamma = {gamma}"
        )));
    }
    Ok((-radial_constant(dim) * r.value, r.evaluations))
}

/// Solves for `γ` by bisection on `h(γ) = d − γ·RHS(γ)`, which decreases
/// from `d` at `γ = 0`. The bracket doubles until `h` changes sign.
pub fn solve_gamma<F: Fn(f64) -> f64>(
    base: &crate::families::BaseDensity,
    f_prime: F,
    dim: usize,
    quad: &Quadrature,
) -> Result<GammaSolution> {
    if !matches!(base.kind, BaseKind::Gaussian) {
        return Err(Error::InvalidParameter(
            "the scale equation assumes a Gaussian base".into(),
        ));
    }
    if dim == 0 || base.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: base.dim });
    }
    let d = dim as f64;
    let mut evals = 0;
    let mut h = |g: f64| -> Result<f64> {
        let (rhs, n) = gamma_rhs(&f_prime, dim, g, quad)?;
        evals += n;
        Ok(d - g * rhs)
    };
    let (mut lo, mut hi) = (0.5, 2.0);
    let mut h_lo = h(lo)?;
    let mut h_hi = h(hi)?;
    let mut expansions = 0;
    while !(h_lo > 0.0 && h_hi < 0.0) {
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketFailure(format!(
                "no sign change of the scale equation on [{lo:e}, {hi:e}]"
            )));
        }
        if h_lo <= 0.0 {
            lo *= 0.5;
            h_lo = h(lo)?;
        }
        if h_hi >= 0.0 {
            hi *= 2.0;
            h_hi = h(hi)?;
        }
    }
    let bracket = (lo, hi);
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > 1e-10 * mid.max(1.0) {
        mid = 0.5 * (lo + hi);
        let hm = h(mid)?;
        if hm == 0.0 {
            lo = mid;
            hi = mid;
        } else if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let residual = (h(gamma)? / d).abs();
    Ok(GammaSolution {
        gamma,
        residual,
        quadrature_points: evals,
        bracket,
    })
}

/// Whether `RHS(γ)` is non-decreasing across `gammas` (sorted).
pub fn gamma_rhs_is_monotone<F: Fn(f64) -> f64>(
    f_prime: &F,
    dim: usize,
    gammas: &[f64],
    quad: &Quadrature,
) -> Result<(bool, Vec<f64>)> {
    let values = gammas
        .iter()
        .map(|g| gamma_rhs(f_prime, dim, *g, quad).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let tol = 1e-9 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - tol);
    Ok((monotone, values))
}

/// `γ̂² = tr(S M⁻¹)/d`, and the largest entry of `|S − γ̂² M|` relative to
/// `max |M|`.
pub fn scale_recovery_check(fitted: &PosDefMatrix, m: &PosDefMatrix) -> Result<(f64, f64)> {
    if fitted.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: fitted.dim(),
        });
    }
    cholesky(fitted)?;
    let inv = inverse_from_factor(&cholesky(m)?);
    let d = m.dim();
    let prod = fitted.matrix().matmul(&inv)?;
    let trace: f64 = (0..d).map(|i| prod[(i, i)]).sum();
    let g2 = trace / d as f64;
    let mut dev = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            dev = dev.max((fitted.get(i, j) - g2 * m.get(i, j)).abs());
        }
    }
    Ok((g2.sqrt(), dev / m.matrix().max_abs()))
}

// ---------------------------------------------------------------------------
// Convexity of the KL along a segment of locations

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ProbeMethod {
    /// Adaptive quadrature (d = 1) or nested adaptive quadrature (d = 2).
    Quadrature,
    /// Monte Carlo with the same base draws at every point.
    CommonRandomNumbers { n_draws: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    /// `(ν, KL(q_ν‖p))` along the segment, up to a constant for
    /// unnormalized targets.
    pub points: Vec<(Vec<f64>, f64)>,
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
    pub tolerance: f64,
    pub convex: bool,
}

/// Quadrature for `d ≤ 2`, common random numbers otherwise.
pub fn default_probe_method(dim: usize) -> ProbeMethod {
    if dim <= 2 {
        ProbeMethod::Quadrature
    } else {
        ProbeMethod::CommonRandomNumbers { n_draws: 4000, seed: 0 }
    }
}

fn kl_nested_2d(target: &TargetDensity, q: &LocationScaleApprox, quad: &Quadrature) -> Result<f64> {
    let base = *q.base();
    let half_log_det = 0.5 * q.log_det_scale();
    let one = crate::families::BaseDensity { dim: 1, ..base };
    let breaks = [f64::NEG_INFINITY, 0.0, f64::INFINITY];
    let outer = |a: f64| -> f64 {
        let la = one.log_density(&[a]);
        if la < -700.0 {
            return 0.0;
        }
        let inner = quad.integrate_with_breaks(
            |b| {
                let lb = one.log_density(&[b]);
                if lb < -700.0 {
                    return 0.0;
                }
                let zeta = [a, b];
                let mut z = [0.0; 2];
                q.transform(&zeta, &mut z);
                lb.exp() * (la + lb - half_log_det - target.log_density(&z))
            },
            &breaks,
        );
        match inner {
            Ok(r) if r.converged => la.exp() * r.value,
            _ => f64::NAN,
        }
    };
    let r = quad.integrate_with_breaks(outer, &breaks)?;
    if !r.converged {
        return Err(Error::QuadratureFailure("nested KL quadrature did not converge".into()));
    }
    Ok(r.value)
}

fn kl_crn(target: &TargetDensity, q: &LocationScaleApprox, n: usize, seed: u64) -> Result<f64> {
    let d = q.dim();
    let terms = map_indexed(Exec::default(), n, |i| {
        let mut zeta = vec![0.0; d];
        let mut z = vec![0.0; d];
        q.draw_base(seed, i, &mut zeta);
        q.transform(&zeta, &mut z);
        q.log_density_at_base(&zeta) - target.log_density(&z)
    });
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteDensity {
            count: terms.iter().filter(|t| !t.is_finite()).count(),
            n,
        });
    }
    Ok(mean_and_se(&terms).0)
}

/// Evaluates `KL(q_ν‖p)` at `n_points` evenly spaced locations from `a` to
/// `b` (scale fixed to `template`'s) and checks that every discrete second
/// difference is at least `−1e-8·max(1, max|KL|)`.
pub fn kl_convexity_probe(
    target: &TargetDensity,
    template: &LocationScaleApprox,
    segment: (&[f64], &[f64]),
    n_points: usize,
    method: ProbeMethod,
) -> Result<ConvexityVerdict> {
    let (a, b) = segment;
    let d = template.dim();
    if a.len() != d || b.len() != d || target.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.len() });
    }
    if n_points < 3 {
        return Err(Error::InvalidParameter("need at least 3 probe points".into()));
    }
    let quad = Quadrature::default();
    let locations: Vec<Vec<f64>> = (0..n_points)
        .map(|k| {
            let t = k as f64 / (n_points - 1) as f64;
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect();
    let values = map_indexed(Exec::default(), n_points, |k| {
        let q = template.with_nu(locations[k].clone())?;
        match method {
            ProbeMethod::Quadrature if d == 1 => kl_quadrature(target, &q, &quad),
            ProbeMethod::Quadrature if d == 2 => kl_nested_2d(target, &q, &quad),
            ProbeMethod::Quadrature => Err(Error::InvalidParameter(
                "quadrature probe supports d <= 2".into(),
            )),
            ProbeMethod::CommonRandomNumbers { n_draws, seed } => kl_crn(target, &q, n_draws, seed),
        }
    });
    let mut points = Vec::with_capacity(n_points);
    for (loc, v) in locations.into_iter().zip(values) {
        points.push((loc, v?));
    }
    let second_differences: Vec<f64> = points
        .windows(3)
        .map(|w| w[0].1 - 2.0 * w[1].1 + w[2].1)
        .collect();
    let min_second_difference = second_differences.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = points.iter().fold(1.0f64, |m, p| m.max(p.1.abs()));
    let tolerance = 1e-8 * scale;
    Ok(ConvexityVerdict {
        convex: min_second_difference >= -tolerance,
        points,
        second_differences,
        min_second_difference,
        tolerance,
    })
}
