//! Location-scale variational families `q(z) = q₀(L⁻¹(z − ν)) |S|^{-1/2}`
//! with `S = L Lᵀ`.
//!
//! The approximation stores its unconstrained coordinates (location, log of
//! the scale diagonal, strict lower triangle), so packing and unpacking are
//! exact inverses.

use std::f64::consts::{LN_2, PI};

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LowerTriangularFactor, Matrix, PosDefMatrix};
use crate::par::{map_indexed, Exec};
use crate::rng::{self, Rng};
use crate::special::{ln_gamma, LN_SQRT_2PI};

/// Degrees of freedom of the Student-t base when none is given.
pub const DEFAULT_BASE_DF: f64 = 10.0;

/// Draws used for Monte Carlo entropy estimates.
pub const ENTROPY_MC_DRAWS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKind {
    Gaussian,
    LaplaceIid,
    StudentTIid { df: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDensity {
    #[serde(flatten)]
    pub kind: BaseKind,
    pub dim: usize,
}

impl BaseDensity {
    pub fn gaussian(dim: usize) -> Self {
        Self {
            kind: BaseKind::Gaussian,
            dim,
        }
    }

    pub fn laplace_iid(dim: usize) -> Self {
        Self {
            kind: BaseKind::LaplaceIid,
            dim,
        }
    }

    pub fn student_t_iid(dim: usize, df: f64) -> Result<Self> {
        let base = Self {
            kind: BaseKind::StudentTIid { df },
            dim,
        };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("base dimension must be positive".into()));
        }
        if let BaseKind::StudentTIid { df } = self.kind {
            if !(df > 2.0 && df.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "student-t base needs df > 2, got {df}"
                )));
            }
        }
        Ok(())
    }

    /// Only the Gaussian base depends on `ζ` through `‖ζ‖` alone.
    pub fn is_spherical(&self) -> bool {
        matches!(self.kind, BaseKind::Gaussian)
    }

    pub fn log_density(&self, zeta: &[f64]) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            BaseKind::Gaussian => {
                -d * LN_SQRT_2PI - 0.5 * zeta.iter().map(|x| x * x).sum::<f64>()
            }
            BaseKind::LaplaceIid => -d * LN_2 - zeta.iter().map(|x| x.abs()).sum::<f64>(),
            BaseKind::StudentTIid { df } => {
                let c = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
                d * c
                    - 0.5
                        * (df + 1.0)
                        * zeta.iter().map(|x| (x * x / df).ln_1p()).sum::<f64>()
            }
        }
    }

    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        match self.kind {
            BaseKind::Gaussian => {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
            }
            BaseKind::LaplaceIid => {
                for o in out.iter_mut() {
                    let a: f64 = rng.sample(Exp1);
                    let b: f64 = rng.sample(Exp1);
                    *o = a - b;
                }
            }
            BaseKind::StudentTIid { df } => {
                let chi = Gamma::new(0.5 * df, 2.0).expect("validated df");
                for o in out.iter_mut() {
                    let x: f64 = rng.sample(StandardNormal);
                    let c: f64 = chi.sample(rng);
                    *o = x / (c / df).sqrt();
                }
            }
        }
    }

    /// Closed-form `H(q₀)`, when one is implemented.
    pub fn entropy(&self) -> Option<f64> {
        let d = self.dim as f64;
        match self.kind {
            BaseKind::Gaussian => Some(0.5 * d * (2.0 * PI * std::f64::consts::E).ln()),
            BaseKind::LaplaceIid => Some(d * (1.0 + LN_2)),
            BaseKind::StudentTIid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MeanField,
    FullRank,
    /// Scale frozen; only the location is optimized.
    LocationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entropy {
    pub value: f64,
    /// Zero for closed forms.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ApproxRepr", into = "ApproxRepr")]
pub struct LocationScaleApprox {
    base: BaseDensity,
    nu: Vec<f64>,
    log_diag: Vec<f64>,
    /// Strict lower triangle, row-major.
    lower: Vec<f64>,
    mode: Mode,
    factor: LowerTriangularFactor,
}

#[derive(Serialize, Deserialize)]
struct ScaleRepr {
    diag: Vec<f64>,
    lower: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ApproxRepr {
    base: BaseDensity,
    nu: Vec<f64>,
    scale_factor: ScaleRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_diag: Option<Vec<f64>>,
    mode: Mode,
}

impl From<LocationScaleApprox> for ApproxRepr {
    fn from(q: LocationScaleApprox) -> Self {
        ApproxRepr {
            base: q.base,
            scale_factor: ScaleRepr {
                diag: q.log_diag.iter().map(|x| x.exp()).collect(),
                lower: q.lower,
            },
            log_diag: Some(q.log_diag),
            nu: q.nu,
            mode: q.mode,
        }
    }
}

impl TryFrom<ApproxRepr> for LocationScaleApprox {
    type Error = Error;
    fn try_from(r: ApproxRepr) -> Result<Self> {
        let ScaleRepr { diag, lower } = r.scale_factor;
        if let Some(bad) = diag.iter().find(|x| !(**x > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "scale diagonal must be positive, got {bad}"
            )));
        }
        let log_diag = match r.log_diag {
            Some(ld) if ld.len() == diag.len() => ld,
            Some(ld) => {
                return Err(Error::InvalidParameter(format!(
                    "log_diag has length {}, scale diagonal has {}",
                    ld.len(),
                    diag.len()
                )))
            }
            None => diag.iter().map(|x| x.ln()).collect(),
        };
        Self::from_parts(r.base, r.nu, log_diag, lower, r.mode)
    }
}

fn n_lower(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

fn build_factor(log_diag: &[f64], lower: &[f64]) -> Result<LowerTriangularFactor> {
    let d = log_diag.len();
    let mut packed = Vec::with_capacity(d * (d + 1) / 2);
    let mut k = 0;
    for i in 0..d {
        for _ in 0..i {
            packed.push(if lower.is_empty() { 0.0 } else { lower[k] });
            k += 1;
        }
        packed.push(log_diag[i].exp());
    }
    LowerTriangularFactor::from_packed(d, packed)
}

impl LocationScaleApprox {
    fn from_parts(
        base: BaseDensity,
        nu: Vec<f64>,
        log_diag: Vec<f64>,
        lower: Vec<f64>,
        mode: Mode,
    ) -> Result<Self> {
        base.validate()?;
        let d = base.dim;
        if nu.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: nu.len(),
            });
        }
        if log_diag.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: log_diag.len(),
            });
        }
        if mode == Mode::MeanField && lower.iter().any(|x| *x != 0.0) {
            return Err(Error::InvalidParameter(
                "mean-field scale factor must be diagonal".into(),
            ));
        }
        let lower = if mode == Mode::MeanField {
            Vec::new()
        } else if lower.is_empty() {
            vec![0.0; n_lower(d)]
        } else if lower.len() == n_lower(d) {
            lower
        } else {
            return Err(Error::DimensionMismatch {
                expected: n_lower(d),
                got: lower.len(),
            });
        };
        let factor = build_factor(&log_diag, &lower)?;
        Ok(Self {
            base,
            nu,
            log_diag,
            lower,
            mode,
            factor,
        })
    }

    /// A general approximation from a lower-triangular scale factor. In
    /// mean-field mode the factor must be diagonal.
    pub fn new(
        base: BaseDensity,
        nu: Vec<f64>,
        scale: &LowerTriangularFactor,
        mode: Mode,
    ) -> Result<Self> {
        let d = scale.dim();
        let log_diag = scale.diag().iter().map(|x| x.ln()).collect();
        let lower = (0..d)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| scale.get(i, j))
            .collect();
        Self::from_parts(base, nu, log_diag, lower, mode)
    }

    pub fn mean_field(base: BaseDensity, nu: Vec<f64>, diag: &[f64]) -> Result<Self> {
        Self::new(base, nu, &LowerTriangularFactor::from_diag(diag)?, Mode::MeanField)
    }

    pub fn full_rank(base: BaseDensity, nu: Vec<f64>, scale: &LowerTriangularFactor) -> Result<Self> {
        Self::new(base, nu, scale, Mode::FullRank)
    }

    pub fn location_only(
        base: BaseDensity,
        nu: Vec<f64>,
        scale: &LowerTriangularFactor,
    ) -> Result<Self> {
        Self::new(base, nu, scale, Mode::LocationOnly)
    }

    /// Standard starting point: `ν = 0`, `L = I`.
    pub fn standard(base: BaseDensity, mode: Mode) -> Self {
        let d = base.dim;
        Self::new(base, vec![0.0; d], &LowerTriangularFactor::identity(d), mode)
            .expect("identity scale is valid")
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn base(&self) -> &BaseDensity {
        &self.base
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn scale_factor(&self) -> &LowerTriangularFactor {
        &self.factor
    }

    /// `S = L Lᵀ`.
    pub fn scale_matrix(&self) -> PosDefMatrix {
        self.factor.reconstruct()
    }

    /// `log|S|`.
    pub fn log_det_scale(&self) -> f64 {
        2.0 * self.log_diag.iter().sum::<f64>()
    }

    /// The same approximation moved to location `nu`.
    pub fn with_nu(&self, nu: Vec<f64>) -> Result<Self> {
        if nu.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: nu.len(),
            });
        }
        Ok(Self { nu, ..self.clone() })
    }

    /// Base draw `i` of a batch seeded with `seed`.
    pub fn draw_base(&self, seed: u64, i: usize, zeta: &mut [f64]) {
        self.base.sample_into(&mut rng::stream(seed, i as u64), zeta);
    }

    /// `z = ν + L ζ`.
    pub fn transform(&self, zeta: &[f64], z: &mut [f64]) {
        self.factor.mul_vec_into(zeta, z);
        for (zi, m) in z.iter_mut().zip(&self.nu) {
            *zi += m;
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Matrix {
        self.sample_with(n, seed, Exec::default())
    }

    /// `n` draws; row `i` depends only on `(seed, i)`.
    pub fn sample_with(&self, n: usize, seed: u64, exec: Exec) -> Matrix {
        let d = self.dim();
        let rows = map_indexed(exec, n, |i| {
            let mut zeta = vec![0.0; d];
            let mut z = vec![0.0; d];
            self.draw_base(seed, i, &mut zeta);
            self.transform(&zeta, &mut z);
            z
        });
        Matrix::from_row_major(n, d, rows.concat()).expect("consistent shape")
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let mut zeta: Vec<f64> = z.iter().zip(&self.nu).map(|(a, b)| a - b).collect();
        self.factor.solve_in_place(&mut zeta);
        Ok(self.log_density_at_base(&zeta))
    }

    /// `log q(ν + L ζ)` from `ζ` without a triangular solve.
    pub fn log_density_at_base(&self, zeta: &[f64]) -> f64 {
        self.base.log_density(zeta) - 0.5 * self.log_det_scale()
    }

    /// Closed form for Gaussian and Laplace bases, Monte Carlo otherwise.
    pub fn entropy(&self) -> Entropy {
        self.entropy_with(ENTROPY_MC_DRAWS, 0)
    }

    pub fn entropy_with(&self, n: usize, seed: u64) -> Entropy {
        match self.base.entropy() {
            Some(h) => Entropy {
                value: h + 0.5 * self.log_det_scale(),
                std_error: 0.0,
            },
            None => self.entropy_mc(n, seed),
        }
    }

    /// `−mean log q` at `n` fresh draws, with its standard error.
    pub fn entropy_mc(&self, n: usize, seed: u64) -> Entropy {
        let d = self.dim();
        let vals = map_indexed(Exec::default(), n, |i| {
            let mut zeta = vec![0.0; d];
            self.draw_base(seed, i, &mut zeta);
            -self.log_density_at_base(&zeta)
        });
        let (mean, se) = mean_and_se(&vals);
        Entropy {
            value: mean,
            std_error: se,
        }
    }

    /// Length of the unconstrained parameter vector.
    pub fn n_params(&self) -> usize {
        let d = self.dim();
        match self.mode {
            Mode::LocationOnly => d,
            Mode::MeanField => 2 * d,
            Mode::FullRank => 2 * d + n_lower(d),
        }
    }

    /// `[ν, log diag(L), strict lower(L)]`, truncated by mode.
    pub fn pack(&self) -> Vec<f64> {
        let mut p = self.nu.clone();
        if self.mode != Mode::LocationOnly {
            p.extend_from_slice(&self.log_diag);
        }
        if self.mode == Mode::FullRank {
            p.extend_from_slice(&self.lower);
        }
        p
    }

    /// Inverse of [`pack`](Self::pack), with `self` as template for the
    /// base, mode and any frozen scale.
    pub fn unpack(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let d = self.dim();
        let nu = p[..d].to_vec();
        match self.mode {
            Mode::LocationOnly => self.with_nu(nu),
            Mode::MeanField => {
                Self::from_parts(self.base, nu, p[d..2 * d].to_vec(), Vec::new(), self.mode)
            }
            Mode::FullRank => Self::from_parts(
                self.base,
                nu,
                p[d..2 * d].to_vec(),
                p[2 * d..].to_vec(),
                self.mode,
            ),
        }
    }

    /// Index of `L[i][j]` (`j < i`) within the packed vector.
    pub fn lower_param_index(&self, i: usize, j: usize) -> Option<usize> {
        (self.mode == Mode::FullRank && j < i).then(|| 2 * self.dim() + i * (i - 1) / 2 + j)
    }
}

pub(crate) fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
