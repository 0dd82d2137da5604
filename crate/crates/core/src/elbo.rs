//! Monte Carlo ELBO, pathwise gradients, Adam ascent and 1-D grid search.
//!
//! Draw `i` of an estimate seeded with `seed` is `z = ν + L ζᵢ` with `ζᵢ`
//! from stream `(seed, i)`. Per-draw terms are collected in index order and
//! summed sequentially.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{mean_and_se, BaseKind, LocationScaleApprox, Mode};
use crate::par::{map_indexed, Exec};
use crate::quadrature::Quadrature;
use crate::rng;
use crate::targets::TargetDensity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub value: f64,
    /// `log p̃(zᵢ) − log q(zᵢ)`, with the entropy term in closed form for a
    /// Gaussian base.
    pub per_draw: Vec<f64>,
    pub n_draws: usize,
    pub seed: u64,
    pub std_error: f64,
    /// Draws dropped because `log p̃` was not finite.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    /// Gradient with respect to the packed parameters.
    pub grad: Vec<f64>,
    pub std_error: Vec<f64>,
    pub elbo: ElboEstimate,
}

fn per_draw_term(q: &LocationScaleApprox, closed_entropy: Option<f64>, lp: f64, zeta: &[f64]) -> f64 {
    match closed_entropy {
        Some(h) => lp + h,
        None => lp - q.log_density_at_base(zeta),
    }
}

fn analytic_entropy(q: &LocationScaleApprox) -> Option<f64> {
    matches!(q.base().kind, BaseKind::Gaussian).then(|| q.entropy().value)
}

fn check_dims(target: &TargetDensity, q: &LocationScaleApprox) -> Result<()> {
    if target.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: q.dim(),
        })
    }
}

fn summarize(per_draw: Vec<f64>, seed: u64, rejected: usize) -> ElboEstimate {
    let (value, std_error) = mean_and_se(&per_draw);
    ElboEstimate {
        value,
        n_draws: per_draw.len(),
        per_draw,
        seed,
        std_error,
        rejected,
    }
}

pub fn estimate_elbo(
    target: &TargetDensity,
    q: &LocationScaleApprox,
    n: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    estimate_elbo_with(target, q, n, seed, Exec::default(), 0)
}

/// As [`estimate_elbo`], tolerating up to `max_rejected` draws with a
/// non-finite target log density.
pub fn estimate_elbo_with(
    target: &TargetDensity,
    q: &LocationScaleApprox,
    n: usize,
    seed: u64,
    exec: Exec,
    max_rejected: usize,
) -> Result<ElboEstimate> {
    check_dims(target, q)?;
    let d = q.dim();
    let h = analytic_entropy(q);
    let terms = map_indexed(exec, n, |i| {
        let mut zeta = vec![0.0; d];
        let mut z = vec![0.0; d];
        q.draw_base(seed, i, &mut zeta);
        q.transform(&zeta, &mut z);
        let lp = target.log_density(&z);
        lp.is_finite()
            .then(|| per_draw_term(q, h, lp, &zeta))
    });
    let rejected = terms.iter().filter(|t| t.is_none()).count();
    if rejected > max_rejected || rejected == n {
        return Err(Error::NonFiniteDensity { count: rejected, n });
    }
    Ok(summarize(terms.into_iter().flatten().collect(), seed, rejected))
}

pub fn grad_elbo(
    target: &TargetDensity,
    q: &LocationScaleApprox,
    n: usize,
    seed: u64,
) -> Result<ElboGradient> {
    grad_elbo_with(target, q, n, seed, Exec::default())
}

/// Pathwise gradient. With `gⱼ = ∂ log p / ∂zⱼ` at `z = ν + L ζ`:
/// `∂ν = E[g]`, `∂Lⱼₖ = E[gⱼ ζₖ]` (`j > k`), and for `ρⱼ = log Lⱼⱼ`,
/// `∂ρⱼ = E[gⱼ ζⱼ] Lⱼⱼ + 1`, the `+1` coming from `−log q`.
pub fn grad_elbo_with(
    target: &TargetDensity,
    q: &LocationScaleApprox,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<ElboGradient> {
    check_dims(target, q)?;
    let d = q.dim();
    let np = q.n_params();
    let mode = q.mode();
    let diag = q.scale_factor().diag();
    let h = analytic_entropy(q);
    let draws = map_indexed(exec, n, |i| {
        let mut zeta = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut g = vec![0.0; d];
        q.draw_base(seed, i, &mut zeta);
        q.transform(&zeta, &mut z);
        let lp = target.log_density_and_grad(&z, &mut g);
        let mut contrib = Vec::with_capacity(np);
        contrib.extend_from_slice(&g);
        if mode != Mode::LocationOnly {
            for j in 0..d {
                contrib.push(g[j] * zeta[j] * diag[j]);
            }
        }
        if mode == Mode::FullRank {
            for j in 0..d {
                for k in 0..j {
                    contrib.push(g[j] * zeta[k]);
                }
            }
        }
        (per_draw_term(q, h, lp, &zeta), contrib)
    });
    let mut per_draw = Vec::with_capacity(n);
    let mut sum = vec![0.0; np];
    let mut sum_sq = vec![0.0; np];
    let mut nonfinite = 0;
    for (i, (v, c)) in draws.iter().enumerate() {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { draw: i });
        }
        if !v.is_finite() {
            nonfinite += 1;
        }
        per_draw.push(*v);
        for k in 0..np {
            sum[k] += c[k];
            sum_sq[k] += c[k] * c[k];
        }
    }
    if nonfinite > 0 {
        return Err(Error::NonFiniteDensity { count: nonfinite, n });
    }
    let nf = n as f64;
    let mut grad: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_error = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, s2)| {
            let m = s / nf;
            ((s2 / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
        })
        .collect();
    if mode != Mode::LocationOnly {
        for g in &mut grad[d..2 * d] {
            *g += 1.0;
        }
    }
    Ok(ElboGradient {
        grad,
        std_error,
        elbo: summarize(per_draw, seed, 0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub n_draws_per_step: usize,
    pub max_steps: usize,
    pub step_size: f64,
    pub step_decay: f64,
    pub seed: u64,
    pub convergence_window: usize,
    /// Relative change of the windowed mean ELBO below which the run stops.
    pub convergence_tol: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Parameter snapshots are kept every this many steps.
    pub checkpoint_every: usize,
    pub exec: Exec,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_draws_per_step: 1000,
            max_steps: 5000,
            step_size: 0.05,
            step_decay: 0.999,
            seed: 0,
            convergence_window: 100,
            convergence_tol: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 100,
            exec: Exec::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("step_decay", self.step_decay),
            ("convergence_tol", self.convergence_tol),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.step_decay > 1.0 {
            return Err(Error::InvalidParameter("step_decay must be <= 1".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1)")));
            }
        }
        for (name, v) in [
            ("n_draws_per_step", self.n_draws_per_step),
            ("max_steps", self.max_steps),
            ("convergence_window", self.convergence_window),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.n_draws_per_step < 2 {
            return Err(Error::InvalidParameter("n_draws_per_step must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub elbo: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    /// `(step, packed parameters)`.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    pub converged: bool,
    pub steps_used: usize,
}

impl OptimizationTrace {
    /// One JSON object per step: `{"step", "elbo", "std_error"}`.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_json_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_json_lines(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_json_lines(s: &str) -> Result<Vec<TraceRecord>> {
        s.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

/// Adam ascent on the ELBO. Step `t` draws fresh variates seeded with
/// `mix(cfg.seed, t)`. The run stops once the mean ELBO over the last
/// `convergence_window` steps changes by less than `convergence_tol`
/// (relative) from the window before, or at `max_steps`. The returned
/// approximation averages the packed parameters over the final window.
pub fn optimize(
    target: &TargetDensity,
    q0: &LocationScaleApprox,
    cfg: &OptimizerConfig,
) -> Result<(LocationScaleApprox, OptimizationTrace)> {
    cfg.validate()?;
    check_dims(target, q0)?;
    let np = q0.n_params();
    let window = cfg.convergence_window;
    let mut params = q0.pack();
    let mut q = q0.clone();
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut trace = OptimizationTrace::default();
    let mut recent: VecDeque<Vec<f64>> = VecDeque::with_capacity(window);
    let mut lr = cfg.step_size;
    let mut b1t = 1.0;
    let mut b2t = 1.0;

    for step in 0..cfg.max_steps {
        let seed = rng::mix(cfg.seed, step as u64);
        let g = match grad_elbo_with(target, &q, cfg.n_draws_per_step, seed, cfg.exec) {
            Ok(g) => g,
            Err(_) => {
                trace.steps_used = step;
                return Err(Error::Diverged {
                    step,
                    trace: Box::new(trace),
                });
            }
        };
        trace.records.push(TraceRecord {
            step,
            elbo: g.elbo.value,
            std_error: g.elbo.std_error,
        });
        b1t *= cfg.adam_beta1;
        b2t *= cfg.adam_beta2;
        for k in 0..np {
            m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g.grad[k];
            v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g.grad[k] * g.grad[k];
            let mh = m[k] / (1.0 - b1t);
            let vh = v[k] / (1.0 - b2t);
            params[k] += lr * mh / (vh.sqrt() + cfg.adam_eps);
        }
        lr *= cfg.step_decay;
        let next = if params.iter().all(|p| p.is_finite()) {
            q.unpack(&params).ok()
        } else {
            None
        };
        let Some(next) = next else {
            trace.steps_used = step + 1;
            return Err(Error::Diverged {
                step,
                trace: Box::new(trace),
            });
        };
        q = next;
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(params.clone());
        if (step + 1) % cfg.checkpoint_every == 0 {
            trace.checkpoints.push((step + 1, params.clone()));
        }
        trace.steps_used = step + 1;
        if windowed_converged(&trace.records, window, cfg.convergence_tol) {
            trace.converged = true;
            break;
        }
    }

    let count = recent.len() as f64;
    let mut avg = vec![0.0; np];
    for p in &recent {
        for (a, x) in avg.iter_mut().zip(p) {
            *a += x;
        }
    }
    avg.iter_mut().for_each(|a| *a /= count);
    Ok((q0.unpack(&avg)?, trace))
}

fn windowed_converged(records: &[TraceRecord], window: usize, tol: f64) -> bool {
    let n = records.len();
    if n < 2 * window {
        return false;
    }
    let mean = |s: &[TraceRecord]| s.iter().map(|r| r.elbo).sum::<f64>() / s.len() as f64;
    let cur = mean(&records[n - window..]);
    let prev = mean(&records[n - 2 * window..n - window]);
    (cur - prev).abs() / prev.abs().max(1.0) < tol
}

/// `KL(q‖p)` for a 1-D target by adaptive quadrature. For a target with
/// dropped constants the value is offset by `log Z`.
pub fn kl_quadrature(
    target: &TargetDensity,
    q: &LocationScaleApprox,
    quad: &Quadrature,
) -> Result<f64> {
    check_dims(target, q)?;
    if q.dim() != 1 {
        return Err(Error::InvalidParameter("quadrature KL needs d = 1".into()));
    }
    let mut points = vec![f64::NEG_INFINITY, q.nu()[0], f64::INFINITY];
    points.extend(target.model().breakpoints_1d());
    points.sort_by(f64::total_cmp);
    points.dedup();
    let integrand = |x: f64| {
        let lq = q.log_density(&[x]).expect("d = 1");
        if lq < -700.0 {
            return 0.0;
        }
        lq.exp() * (lq - target.log_density(&[x]))
    };
    let r = quad.integrate_with_breaks(integrand, &points)?;
    if !r.converged {
        return Err(Error::QuadratureFailure(format!(
            "KL quadrature did not converge at nu = {} (error {:e})",
            q.nu()[0],
            r.error
        )));
    }
    Ok(r.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_nu: f64,
    pub best_kl: f64,
    /// `(ν, KL(q_ν‖p))` for every grid point.
    pub curve: Vec<(f64, f64)>,
}

/// Minimizes `KL(q_ν‖p)` over `nu_grid`, moving only the location of
/// `template`.
pub fn grid_search_1d(
    target: &TargetDensity,
    template: &LocationScaleApprox,
    nu_grid: &[f64],
    quad: &Quadrature,
    exec: Exec,
) -> Result<GridSearchResult> {
    if template.dim() != 1 {
        return Err(Error::InvalidParameter("grid search needs d = 1".into()));
    }
    if nu_grid.is_empty() || nu_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("grid must be non-empty and increasing".into()));
    }
    let values = map_indexed(exec, nu_grid.len(), |i| {
        let q = template.with_nu(vec![nu_grid[i]])?;
        kl_quadrature(target, &q, quad)
    });
    let mut curve = Vec::with_capacity(nu_grid.len());
    for (nu, kl) in nu_grid.iter().zip(values) {
        curve.push((*nu, kl?));
    }
    let &(best_nu, best_kl) = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    Ok(GridSearchResult {
        best_nu,
        best_kl,
        curve,
    })
}

/// `lo, lo + step, …` up to `hi` inclusive, each point computed as
/// `lo + i·step` rounded to the step's decimal resolution.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}
