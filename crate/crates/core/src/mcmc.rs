//! Reference samplers: adaptive random-walk Metropolis and HMC with
//! warmup-tuned step size and diagonal mass matrix. All tuning is frozen
//! once warmup ends.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::diagnostics::estimate_moments;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, LowerTriangularFactor, Matrix, PosDefMatrix};
use crate::par::{map_indexed, Exec};
use crate::rng::{self, Rng};
use crate::targets::TargetDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    /// Gaussian proposals whose covariance and global scale are adapted
    /// during warmup toward `target_accept`.
    RwmAdaptive {
        #[serde(default = "default_rwm_accept")]
        target_accept: f64,
    },
    /// Leapfrog HMC. With `adapt`, `step_size` is only the starting value
    /// and the mass matrix is estimated during warmup.
    Hmc {
        step_size: f64,
        n_leapfrog: usize,
        #[serde(default = "default_true")]
        adapt: bool,
        #[serde(default = "default_hmc_accept")]
        target_accept: f64,
    },
}

fn default_rwm_accept() -> f64 {
    0.3
}
fn default_hmc_accept() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}

impl Algorithm {
    pub fn rwm() -> Self {
        Algorithm::RwmAdaptive {
            target_accept: default_rwm_accept(),
        }
    }

    pub fn hmc(step_size: f64, n_leapfrog: usize) -> Self {
        Algorithm::Hmc {
            step_size,
            n_leapfrog,
            adapt: true,
            target_accept: default_hmc_accept(),
        }
    }

    /// Random-walk Metropolis up to three dimensions, HMC above.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim <= 3 {
            Self::rwm()
        } else {
            Self::hmc(0.05, 32)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_warmup: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub init: Vec<f64>,
}

impl ChainConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be positive".into()));
        }
        if self.init.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.init.len(),
            });
        }
        match self.algorithm {
            Algorithm::RwmAdaptive { target_accept } => check_accept(target_accept),
            Algorithm::Hmc {
                step_size,
                n_leapfrog,
                target_accept,
                ..
            } => {
                if !(step_size > 0.0 && step_size.is_finite()) || n_leapfrog == 0 {
                    return Err(Error::InvalidParameter(
                        "HMC needs step_size > 0 and n_leapfrog >= 1".into(),
                    ));
                }
                check_accept(target_accept)
            }
        }
    }
}

fn check_accept(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("target acceptance {a} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Matrix,
    pub acceptance_rate: f64,
    pub ess_per_coordinate: Vec<f64>,
    /// HMC trajectories abandoned for an energy error above 1000.
    pub divergences: usize,
    /// Final proposal scale (RWM) or step size (HMC).
    pub tuned_step: f64,
    pub warnings: Vec<String>,
}

/// Runs one chain. The chain consumes stream `(seed, 0)` only.
pub fn run_chain(target: &TargetDensity, cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate(target.dim())?;
    let lp0 = target.log_density(&cfg.init);
    if !lp0.is_finite() {
        return Err(Error::NonFiniteDensity { count: 1, n: 1 });
    }
    let mut rng = rng::stream(cfg.seed, 0);
    let (draws, accepted, divergences, tuned_step) = match cfg.algorithm {
        Algorithm::RwmAdaptive { target_accept } => {
            let (d, a, s) = rwm(target, cfg, target_accept, &mut rng);
            (d, a, 0, s)
        }
        Algorithm::Hmc {
            step_size,
            n_leapfrog,
            adapt,
            target_accept,
        } => hmc(target, cfg, step_size, n_leapfrog, adapt, target_accept, &mut rng),
    };
    let acceptance_rate = accepted as f64 / cfg.n_samples as f64;
    let mut warnings = Vec::new();
    if acceptance_rate < 0.01 {
        warnings.push(format!("acceptance rate {acceptance_rate:.4} below 0.01"));
    }
    if divergences > 0 {
        warnings.push(format!("{divergences} divergent transitions"));
    }
    let ess_per_coordinate = effective_sample_size(&draws);
    Ok(ChainOutput {
        draws,
        acceptance_rate,
        ess_per_coordinate,
        divergences,
        tuned_step,
        warnings,
    })
}

/// Independent chains, run concurrently under `exec`.
pub fn run_chains(
    target: &TargetDensity,
    cfgs: &[ChainConfig],
    exec: Exec,
) -> Result<Vec<ChainOutput>> {
    map_indexed(exec, cfgs.len(), |i| run_chain(target, &cfgs[i]))
        .into_iter()
        .collect()
}

/// Stacks the draws of several chains, in chain order.
pub fn pool_draws(chains: &[ChainOutput]) -> Matrix {
    let d = chains.first().map_or(0, |c| c.draws.ncols());
    let rows: usize = chains.iter().map(|c| c.draws.nrows()).sum();
    let data: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.draws.as_slice().iter().copied())
        .collect();
    Matrix::from_row_major(rows, d, data).expect("chains share a dimension")
}

/// Sum of per-chain ESS for each coordinate.
pub fn pooled_ess(chains: &[ChainOutput]) -> Vec<f64> {
    let d = chains.first().map_or(0, |c| c.ess_per_coordinate.len());
    (0..d)
        .map(|k| chains.iter().map(|c| c.ess_per_coordinate[k]).sum())
        .collect()
}

fn standard_normal_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn rwm(
    target: &TargetDensity,
    cfg: &ChainConfig,
    target_accept: f64,
    rng: &mut Rng,
) -> (Matrix, usize, f64) {
    let d = target.dim();
    let mut z = cfg.init.clone();
    let mut lp = target.log_density(&z);
    let mut chol = LowerTriangularFactor::identity(d);
    let mut log_scale = (2.38 / (d as f64).sqrt()).ln();
    let adapt_start = cfg.n_warmup / 4;
    let update_every = (cfg.n_warmup / 10).max(50);
    let mut history: Vec<f64> = Vec::new();
    let mut draws = Matrix::zeros(cfg.n_samples, d);
    let mut accepted = 0;
    let mut proposal = vec![0.0; d];
    let mut step = vec![0.0; d];

    for it in 0..cfg.n_warmup + cfg.n_samples {
        let eps = standard_normal_vec(rng, d);
        chol.mul_vec_into(&eps, &mut step);
        let s = log_scale.exp();
        for k in 0..d {
            proposal[k] = z[k] + s * step[k];
        }
        let lp_new = target.log_density(&proposal);
        let u: f64 = rng.random();
        let log_ratio = lp_new - lp;
        let accept = lp_new.is_finite() && u.ln() < log_ratio;
        if accept {
            z.copy_from_slice(&proposal);
            lp = lp_new;
        }
        if it < cfg.n_warmup {
            let alpha = if lp_new.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
            log_scale += (alpha - target_accept) / ((it + 1) as f64).powf(0.6);
            if it >= adapt_start {
                history.extend_from_slice(&z);
                let rows = history.len() / d;
                if (it + 1 - adapt_start) % update_every == 0 && rows > 2 * d {
                    if let Some(c) = proposal_factor(&history, rows, d) {
                        chol = c;
                    }
                }
            }
        } else {
            let row = it - cfg.n_warmup;
            draws.row_mut(row).copy_from_slice(&z);
            accepted += usize::from(accept);
        }
    }
    (draws, accepted, log_scale.exp())
}

fn proposal_factor(history: &[f64], rows: usize, d: usize) -> Option<LowerTriangularFactor> {
    let m = Matrix::from_row_major(rows, d, history.to_vec()).ok()?;
    let cov = estimate_moments(&m).ok()?.covariance;
    let mut jittered = cov.clone();
    let jitter = 1e-10 * (0..d).map(|i| cov[(i, i)]).fold(1e-300, f64::max);
    for i in 0..d {
        jittered[(i, i)] += jitter;
    }
    cholesky(&PosDefMatrix::new(jittered).ok()?).ok()
}

struct Leapfrog<'a> {
    target: &'a TargetDensity,
    inv_mass: Vec<f64>,
}

impl Leapfrog<'_> {
    /// Returns `(position, log p, gradient, kinetic energy)` after `n`
    /// steps, or `None` when the trajectory leaves the finite region.
    fn run(
        &self,
        z: &[f64],
        grad: &[f64],
        p: &mut [f64],
        eps: f64,
        n: usize,
    ) -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let d = z.len();
        let mut x = z.to_vec();
        let mut g = grad.to_vec();
        let mut lp = 0.0;
        for k in 0..d {
            p[k] += 0.5 * eps * g[k];
        }
        for step in 0..n {
            for k in 0..d {
                x[k] += eps * self.inv_mass[k] * p[k];
            }
            lp = self.target.log_density_and_grad(&x, &mut g);
            if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let scale = if step + 1 == n { 0.5 } else { 1.0 };
            for k in 0..d {
                p[k] += scale * eps * g[k];
            }
        }
        Some((x, lp, g))
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(a, m)| a * a * m).sum::<f64>()
    }
}

fn hmc(
    target: &TargetDensity,
    cfg: &ChainConfig,
    step_size: f64,
    n_leapfrog: usize,
    adapt: bool,
    target_accept: f64,
    rng: &mut Rng,
) -> (Matrix, usize, usize, f64) {
    let d = target.dim();
    let mut z = cfg.init.clone();
    let mut grad = vec![0.0; d];
    let mut lp = target.log_density_and_grad(&z, &mut grad);
    let mut lf = Leapfrog {
        target,
        inv_mass: vec![1.0; d],
    };
    let mut log_eps = step_size.ln();
    let mut log_eps_bar = log_eps;
    let mass_start = cfg.n_warmup / 4;
    let mass_end = cfg.n_warmup / 2;
    let mut window: Vec<f64> = Vec::new();
    let mut draws = Matrix::zeros(cfg.n_samples, d);
    let mut accepted = 0;
    let mut divergences = 0;
    let mut adapt_iter = 0usize;

    for it in 0..cfg.n_warmup + cfg.n_samples {
        let warm = it < cfg.n_warmup && adapt;
        let base_eps = if it < cfg.n_warmup && adapt { log_eps.exp() } else { log_eps_bar.exp() };
        let jitter: f64 = rng.random_range(0.9..1.1);
        let eps = base_eps * jitter;
        let mut p: Vec<f64> = (0..d)
            .map(|k| rng.sample::<f64, _>(StandardNormal) / lf.inv_mass[k].sqrt())
            .collect();
        let h0 = -lp + lf.kinetic(&p);
        let result = lf.run(&z, &grad, &mut p, eps, n_leapfrog);
        let u: f64 = rng.random();
        let (alpha, accept) = match result {
            Some((x, lp_new, g_new)) => {
                let h1 = -lp_new + lf.kinetic(&p);
                let dh = h0 - h1;
                if !dh.is_finite() || -dh > 1000.0 {
                    if it >= cfg.n_warmup {
                        divergences += 1;
                    }
                    (0.0, false)
                } else {
                    let accept = u.ln() < dh;
                    if accept {
                        z = x;
                        lp = lp_new;
                        grad = g_new;
                    }
                    (dh.min(0.0).exp(), accept)
                }
            }
            None => {
                if it >= cfg.n_warmup {
                    divergences += 1;
                }
                (0.0, false)
            }
        };
        if warm {
            adapt_iter += 1;
            let w = 1.0 / (adapt_iter as f64).powf(0.6);
            log_eps += 2.0 * (alpha - target_accept) * w;
            let avg_w = 1.0 / (adapt_iter as f64).powf(0.75);
            log_eps_bar = avg_w * log_eps + (1.0 - avg_w) * log_eps_bar;
            if it >= mass_start && it < mass_end {
                window.extend_from_slice(&z);
            }
            if it + 1 == mass_end && window.len() / d > 10 {
                let rows = window.len() / d;
                if let Ok(m) = Matrix::from_row_major(rows, d, std::mem::take(&mut window)) {
                    if let Ok(s) = estimate_moments(&m) {
                        let n = rows as f64;
                        // shrink toward unit mass, as in common HMC warmup
                        lf.inv_mass = (0..d)
                            .map(|k| (n / (n + 5.0)) * s.covariance[(k, k)] + 1e-3 * 5.0 / (n + 5.0))
                            .collect();
                        let mean_scale = lf.inv_mass.iter().sum::<f64>() / d as f64;
                        log_eps = (log_eps.exp() * mean_scale.sqrt().min(10.0)).ln();
                        log_eps_bar = log_eps;
                        adapt_iter = 0;
                    }
                }
            }
        }
        if it >= cfg.n_warmup {
            draws.row_mut(it - cfg.n_warmup).copy_from_slice(&z);
            accepted += usize::from(accept);
        }
    }
    let tuned = if adapt { log_eps_bar.exp() } else { step_size };
    (draws, accepted, divergences, tuned)
}

/// Per-coordinate effective sample size: FFT autocorrelations truncated by
/// Geyer's initial monotone sequence. A constant coordinate gets 1; values
/// are capped at the number of draws.
pub fn effective_sample_size(draws: &Matrix) -> Vec<f64> {
    let n = draws.nrows();
    (0..draws.ncols())
        .map(|k| ess_1d(&draws.column(k)).min(n as f64))
        .collect()
}

fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    buf[..n].iter().map(|c| c.re / c0).collect()
}

fn ess_1d(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if x.iter().all(|v| (v - mean).abs() <= 1e-300 + 1e-14 * mean.abs()) {
        return 1.0;
    }
    let rho = autocorrelation(x);
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho[t] + rho[t + 1];
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Standard multi-chain configuration: `n_chains` chains seeded from
/// `mix(seed, i)` and started from `inits[i % inits.len()]`.
pub fn chain_configs(
    n_chains: usize,
    base: &ChainConfig,
    inits: &[Vec<f64>],
) -> Vec<ChainConfig> {
    (0..n_chains)
        .map(|i| ChainConfig {
            seed: rng::mix(base.seed, i as u64),
            init: if inits.is_empty() {
                base.init.clone()
            } else {
                inits[i % inits.len()].clone()
            },
            ..base.clone()
        })
        .collect()
}

/// Convenience wrapper returning the pooled draws and pooled ESS.
pub fn reference_draws(
    target: &TargetDensity,
    cfgs: &[ChainConfig],
    exec: Exec,
) -> Result<(Matrix, Vec<f64>, Vec<ChainOutput>)> {
    let chains = run_chains(target, cfgs, exec)?;
    Ok((pool_draws(&chains), pooled_ess(&chains), chains))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::make_mvn;

    #[test]
    fn ess_of_iid_and_constant_chains() {
        let mut r = rng::stream(5, 0);
        let n = 4000;
        let iid: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let e = ess_1d(&iid);
        assert!((e / n as f64 - 1.0).abs() < 0.2, "{e}");
        let m = Matrix::from_row_major(200, 1, vec![3.0; 200]).unwrap();
        assert_eq!(effective_sample_size(&m), vec![1.0]);
    }

    #[test]
    fn ess_of_ar1_chain() {
        let mut r = rng::stream(6, 0);
        let n = 20_000;
        let rho: f64 = 0.5;
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = rho * x[t - 1] + (1.0 - rho * rho).sqrt() * r.sample::<f64, _>(StandardNormal);
        }
        let expect = n as f64 * (1.0 - rho) / (1.0 + rho);
        let e = ess_1d(&x);
        assert!((e / expect - 1.0).abs() < 0.25, "{e} vs {expect}");
    }

    #[test]
    fn rwm_on_standard_normal() {
        let t = make_mvn(&[0.0], &PosDefMatrix::identity(1)).unwrap();
        let cfg = ChainConfig {
            n_warmup: 1000,
            n_samples: 20_000,
            seed: 1,
            algorithm: Algorithm::rwm(),
            init: vec![0.5],
        };
        let out = run_chain(&t, &cfg).unwrap();
        let m = estimate_moments(&out.draws).unwrap();
        let se = (1.0 / out.ess_per_coordinate[0]).sqrt();
        assert!(m.mean[0].abs() < 4.0 * se);
        assert!((m.covariance[(0, 0)] - 1.0).abs() < 0.1);
        assert!(out.acceptance_rate > 0.2 && out.acceptance_rate < 0.5);
        assert_eq!(run_chain(&t, &cfg).unwrap(), out);
    }

    #[test]
    fn hmc_on_correlated_gaussian() {
        let t = make_mvn(
            &[1.0, -1.0, 0.0, 2.0],
            &PosDefMatrix::from_rows(&[
                vec![1.0, 0.5, 0.0, 0.0],
                vec![0.5, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 4.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.25],
            ])
            .unwrap(),
        )
        .unwrap();
        let cfg = ChainConfig {
            n_warmup: 1000,
            n_samples: 5000,
            seed: 2,
            algorithm: Algorithm::hmc(0.1, 16),
            init: vec![0.0; 4],
        };
        let out = run_chain(&t, &cfg).unwrap();
        let m = estimate_moments(&out.draws).unwrap();
        assert!((m.correlation[(0, 1)] - 0.5).abs() < 0.03);
        for (k, mu) in [1.0, -1.0, 0.0, 2.0].iter().enumerate() {
            let se = (m.covariance[(k, k)] / out.ess_per_coordinate[k]).sqrt();
            assert!((m.mean[k] - mu).abs() < 4.0 * se, "coord {k}");
        }
        assert_eq!(out.divergences, 0);
    }

    #[test]
    fn invalid_init_is_rejected() {
        let t = make_mvn(&[0.0], &PosDefMatrix::identity(1)).unwrap();
        let cfg = ChainConfig {
            n_warmup: 10,
            n_samples: 10,
            seed: 0,
            algorithm: Algorithm::rwm(),
            init: vec![f64::NAN],
        };
        assert!(matches!(run_chain(&t, &cfg), Err(Error::NonFiniteDensity { .. })));
    }
}
