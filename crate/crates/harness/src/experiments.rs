use std::time::Instant;

use symvi_core::datasets::{eight_schools_classic, glm_synthetic, logistic_synthetic};
use symvi_core::diagnostics::{
    default_probe_method, epsilon_90_with, estimate_moments, kl_convexity_probe,
    scale_recovery_check, solve_gamma, ErrorTable, MomentSummary,
};
use symvi_core::elbo::{grid_search_1d, optimize, uniform_grid, GridSearchResult};
use symvi_core::families::{BaseDensity, LocationScaleApprox, Mode};
use symvi_core::linalg::{LowerTriangularFactor, Matrix, PosDefMatrix};
use symvi_core::mcmc::{chain_configs, reference_draws, Algorithm, ChainConfig};
use symvi_core::quadrature::Quadrature;
use symvi_core::rng::{self, Rng};
use symvi_core::targets::{
    eight_schools_to_centered, make_binomial_glm, make_eight_schools, make_gaussian_mixture_1d,
    make_gaussian_mixture_2d, make_crescent, make_logistic_regression, make_multi_student_t,
    make_mvn, make_univariate, TargetDensity, UnivariateKind,
};
use rand::Rng as _;

use crate::config::{Experiment, ExperimentConfig, GridSpec, Table1Target, TailTarget};
use crate::error::{Context, HarnessError};
use crate::result::{
    Curve, ExperimentResult, Fit, GammaComparison, LabeledConvexity, LabeledErrorTable,
    SymmetrySummary,
};

/// Seed of the synthetic datasets used by the benchmark rows.
pub const DATA_SEED: u64 = 2024;
/// Years in the synthetic binomial GLM dataset.
pub const GLM_YEARS: usize = 40;
/// Degrees of freedom and correlation of the benchmark Student-t row.
pub const STUDENT_ROW_DF: f64 = 8.0;
pub const STUDENT_ROW_RHO: f64 = 0.5;

// Salts separating the random streams of one experiment.
const SALT_FIT: u64 = 1_000;
const SALT_CHAINS: u64 = 2_000;
const SALT_EXACT: u64 = 3_000;
const SALT_PROBE: u64 = 4_000;

/// Runs one experiment. Every random stream is derived from `config.seed`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    let mut out = ExperimentResult::new(config);
    match &config.experiment {
        Experiment::LogisticSymmetry {
            n_obs,
            prior_scale,
            data_seed,
        } => logistic_symmetry(config, n_obs, *prior_scale, *data_seed, &mut out)?,
        Experiment::TailRobust { targets, grid } => tail_robust(config, targets, grid, &mut out)?,
        Experiment::Mixture1d {
            m_values,
            grid,
            q_scale,
        } => mixture_1d(config, m_values, grid, *q_scale, &mut out)?,
        Experiment::Skew {
            alphas,
            grid,
            q_scale,
        } => skew(config, alphas, grid, *q_scale, &mut out)?,
        Experiment::MultiStudentGamma { dim, dfs, rho } => {
            student_gamma(config, *dim, dfs, *rho, &mut out)?
        }
        Experiment::ScaleRecovery { dim, df, rho } => {
            student_gamma(config, *dim, &[*df], *rho, &mut out)?
        }
        Experiment::Table1Row { target } => table1_row(config, *target, &mut out)?,
        Experiment::ConvexityProbe { segments, n_points } => {
            convexity_probe(config, *segments, *n_points, &mut out)?
        }
    }
    out.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn fit(
    config: &ExperimentConfig,
    target: &TargetDensity,
    label: &str,
    salt: u64,
) -> Result<Fit, HarnessError> {
    let family = config.family();
    let q0 = LocationScaleApprox::standard(family.base_density(target.dim())?, family.mode);
    let mut opt = config.optimizer.clone();
    opt.seed = rng::mix(config.seed, SALT_FIT + salt);
    opt.exec = config.exec;
    let (approx, trace) = optimize(target, &q0, &opt).context(format!("fitting {label}"))?;
    let tail = trace.records.len().min(opt.convergence_window).max(1);
    let final_elbo = trace.records[trace.records.len().saturating_sub(tail)..]
        .iter()
        .map(|r| r.elbo)
        .sum::<f64>()
        / tail as f64;
    Ok(Fit {
        label: label.to_string(),
        approx,
        optimizer_seed: opt.seed,
        converged: trace.converged,
        steps_used: trace.steps_used,
        final_elbo,
        trace,
    })
}

/// Pooled MCMC draws from `config.sampler`, all chains started at `init`.
fn chains(
    config: &ExperimentConfig,
    target: &TargetDensity,
    init: Vec<f64>,
    salt: u64,
    out: &mut ExperimentResult,
) -> Result<Matrix, HarnessError> {
    let s = &config.sampler;
    let base = ChainConfig {
        n_warmup: s.n_warmup,
        n_samples: s.n_samples,
        seed: rng::mix(config.seed, SALT_CHAINS + salt),
        algorithm: s.algorithm.unwrap_or_else(|| Algorithm::default_for_dim(target.dim())),
        init,
    };
    let cfgs = chain_configs(s.n_chains, &base, &[]);
    let (draws, ess, outputs) = reference_draws(target, &cfgs, config.exec)
        .context(format!("sampling {}", target.name()))?;
    let name = target.name().to_string();
    out.set(format!("mcmc/{name}/min_ess"), ess.iter().copied().fold(f64::INFINITY, f64::min));
    let acc = outputs.iter().map(|c| c.acceptance_rate).sum::<f64>() / outputs.len() as f64;
    out.set(format!("mcmc/{name}/acceptance"), acc);
    let div: usize = outputs.iter().map(|c| c.divergences).sum();
    out.set(format!("mcmc/{name}/divergences"), div as f64);
    for c in &outputs {
        for w in &c.warnings {
            out.warnings.push(format!("{name}: {w}"));
        }
    }
    Ok(draws)
}

fn n_reference(config: &ExperimentConfig) -> usize {
    config.sampler.n_chains * config.sampler.n_samples
}

/// Exact draws when the target has a sampler, MCMC otherwise.
fn reference_sample(
    config: &ExperimentConfig,
    target: &TargetDensity,
    init: Vec<f64>,
    salt: u64,
    out: &mut ExperimentResult,
) -> Result<Matrix, HarnessError> {
    match target.sample_exact(n_reference(config), rng::mix(config.seed, SALT_EXACT + salt)) {
        Some(d) => Ok(d),
        None => chains(config, target, init, salt, out),
    }
}

fn moments_of(target: &TargetDensity, draws: &Matrix) -> Result<MomentSummary, HarnessError> {
    let km = &target.known_moments;
    match (&km.mean, &km.covariance) {
        (Some(m), Some(c)) => Ok(MomentSummary::exact(m.clone(), c.clone())),
        _ => estimate_moments(draws).context(format!("moments of {}", target.name())),
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn logistic_symmetry(
    config: &ExperimentConfig,
    n_obs: &[usize],
    prior_scale: f64,
    data_seed: u64,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let mut per_coord: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 3];
    for (k, &n) in n_obs.iter().enumerate() {
        let data = logistic_synthetic(n, data_seed);
        let target = make_logistic_regression(&data, prior_scale).context("logistic target")?;
        let draws = reference_sample(config, &target, vec![0.0; 3], k as u64, out)?;
        let reference = estimate_moments(&draws).context("logistic reference")?;
        let label = format!("N={n}");
        let f = fit(config, &target, &label, k as u64)?;
        let mut worst = 0.0f64;
        for (j, series) in per_coord.iter_mut().enumerate() {
            let ratio = (f.approx.nu()[j] - reference.mean[j]).abs() / reference.sd(j);
            out.set(format!("ratio/{label}/coord={j}"), ratio);
            out.set(format!("reference_mean/{label}/coord={j}"), reference.mean[j]);
            out.set(format!("reference_sd/{label}/coord={j}"), reference.sd(j));
            series.push((n as f64, ratio));
            worst = worst.max(ratio);
        }
        out.set(format!("worst_ratio/{label}"), worst);
        out.fits.push(f);
    }
    for (j, points) in per_coord.into_iter().enumerate() {
        out.curves.push(Curve {
            series: format!("ratio/coord={j}"),
            points,
        });
    }
    Ok(())
}

fn location_template(
    config: &ExperimentConfig,
    scale: f64,
) -> Result<LocationScaleApprox, HarnessError> {
    let family = config.family();
    let base = family.base_density(1)?;
    let factor = LowerTriangularFactor::from_diag(&[scale]).context("template scale")?;
    LocationScaleApprox::new(base, vec![0.0], &factor, Mode::LocationOnly).context("template")
}

fn grid_search(
    config: &ExperimentConfig,
    target: &TargetDensity,
    template: &LocationScaleApprox,
    grid: &GridSpec,
) -> Result<GridSearchResult, HarnessError> {
    let nus = uniform_grid(grid.lo, grid.hi, grid.step);
    grid_search_1d(target, template, &nus, &Quadrature::default(), config.exec)
        .context(format!("grid search on {}", target.name()))
}

fn tail_robust(
    config: &ExperimentConfig,
    targets: &[TailTarget],
    grid: &GridSpec,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let template = location_template(config, 1.0)?;
    for t in targets {
        let (kind, label) = match *t {
            TailTarget::Laplace => (UnivariateKind::Laplace, "laplace".to_string()),
            TailTarget::StudentT { df } => {
                (UnivariateKind::StudentT { df }, format!("student_t_{}", fmt_num(df)))
            }
            TailTarget::Cauchy => (UnivariateKind::Cauchy, "cauchy".to_string()),
        };
        let target = make_univariate(kind, 0.0, 1.0).context("tail target")?;
        let r = grid_search(config, &target, &template, grid)?;
        out.set(format!("argmin/{label}"), r.best_nu);
        out.set(format!("min_kl/{label}"), r.best_kl);
        out.curves.push(Curve {
            series: format!("kl/{label}"),
            points: r.curve,
        });
    }
    Ok(())
}

/// Interior grid points strictly below both neighbours.
pub fn local_minima(curve: &[(f64, f64)]) -> Vec<f64> {
    curve
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
        .map(|w| w[1].0)
        .collect()
}

/// `KL(x₋) − 2 KL(x₀) + KL(x₊)` at the grid point closest to `x`.
pub fn second_difference_at(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let i = (0..curve.len()).min_by(|&a, &b| {
        (curve[a].0 - x).abs().total_cmp(&(curve[b].0 - x).abs())
    })?;
    if i == 0 || i + 1 >= curve.len() {
        return None;
    }
    Some(curve[i - 1].1 - 2.0 * curve[i].1 + curve[i + 1].1)
}

fn mixture_1d(
    config: &ExperimentConfig,
    m_values: &[f64],
    grid: &GridSpec,
    q_scale: f64,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let template = location_template(config, q_scale)?;
    for &m in m_values {
        let target = make_gaussian_mixture_1d(m).context("mixture target")?;
        let r = grid_search(config, &target, &template, grid)?;
        let label = format!("m={}", fmt_num(m));
        out.set(format!("argmin/{label}"), r.best_nu);
        out.set(format!("n_local_minima/{label}"), local_minima(&r.curve).len() as f64);
        if let Some(sd) = second_difference_at(&r.curve, 0.0) {
            out.set(format!("second_difference_at_0/{label}"), sd);
        }
        out.curves.push(Curve {
            series: format!("kl/{label}"),
            points: r.curve,
        });
    }
    Ok(())
}

fn skew(
    config: &ExperimentConfig,
    alphas: &[f64],
    grid: &GridSpec,
    q_scale: f64,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let template = location_template(config, q_scale)?;
    for &alpha in alphas {
        let target =
            make_univariate(UnivariateKind::SkewNormal { alpha }, 0.0, 1.0).context("skew target")?;
        let mean = target.known_moments.mean.as_ref().map(|m| m[0]).unwrap_or(0.0);
        let r = grid_search(config, &target, &template, grid)?;
        let label = format!("alpha={}", fmt_num(alpha));
        out.set(format!("nu_hat/{label}"), r.best_nu);
        out.set(format!("mean/{label}"), mean);
        out.set(format!("location_error/{label}"), (r.best_nu - mean).abs());
        out.curves.push(Curve {
            series: format!("kl/{label}"),
            points: r.curve,
        });
    }
    let errors: Vec<(f64, f64)> = alphas
        .iter()
        .map(|a| (*a, out.scalar(&format!("location_error/alpha={}", fmt_num(*a))).unwrap_or(f64::NAN)))
        .collect();
    out.curves.push(Curve {
        series: "location_error".into(),
        points: errors,
    });
    Ok(())
}

fn student_gamma(
    config: &ExperimentConfig,
    dim: usize,
    dfs: &[f64],
    rho: f64,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let m = PosDefMatrix::equicorrelated(dim, rho);
    let mut fit_curve = Vec::new();
    let mut oracle_curve = Vec::new();
    for (k, &df) in dfs.iter().enumerate() {
        let target = make_multi_student_t(df, &vec![0.0; dim], &m).context("student target")?;
        let label = format!("df={}", fmt_num(df));
        let f = fit(config, &target, &label, k as u64)?;
        let s = f.approx.scale_matrix();
        let (gamma_fit, deviation) = scale_recovery_check(&s, &m).context("scale recovery")?;
        let profile = target
            .elliptical
            .as_ref()
            .map(|e| e.profile)
            .ok_or_else(|| HarnessError::InvalidConfig("target is not elliptical".into()))?;
        let oracle = solve_gamma(
            &BaseDensity::gaussian(dim),
            |r| profile.log_derivative(r, dim),
            dim,
            &Quadrature::default(),
        )
        .context("scale equation")?;
        let corr = s.correlation();
        let mut max_corr_err = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    max_corr_err = max_corr_err.max((corr[(i, j)] - rho).abs());
                }
            }
        }
        let gap = (gamma_fit - oracle.gamma).abs() / oracle.gamma;
        out.set(format!("gamma_fit/{label}"), gamma_fit);
        out.set(format!("gamma_oracle/{label}"), oracle.gamma);
        out.set(format!("gamma_gap/{label}"), gap);
        out.set(format!("scale_deviation/{label}"), deviation);
        out.set(format!("max_corr_error/{label}"), max_corr_err);
        out.set(format!("max_location_error/{label}"), f.approx.nu().iter().fold(0.0f64, |a, v| a.max(v.abs())));
        fit_curve.push((df, gamma_fit));
        oracle_curve.push((df, oracle.gamma));
        out.gamma.push(GammaComparison {
            df,
            gamma_fit,
            oracle,
            relative_gap: gap,
            scale_deviation: deviation,
            max_correlation_error: max_corr_err,
        });
        out.fits.push(f);
    }
    out.curves.push(Curve {
        series: "gamma_fit".into(),
        points: fit_curve,
    });
    out.curves.push(Curve {
        series: "gamma_oracle".into(),
        points: oracle_curve,
    });
    Ok(())
}

/// Target, initial point for the chains and whether the reference draws
/// come from the non-centered 8-schools posterior.
fn table1_target(which: Table1Target) -> Result<TargetDensity, HarnessError> {
    Ok(match which {
        Table1Target::Student => make_multi_student_t(
            STUDENT_ROW_DF,
            &[0.0, 0.0],
            &PosDefMatrix::equicorrelated(2, STUDENT_ROW_RHO),
        )
        .context("student target")?,
        Table1Target::Glm => {
            make_binomial_glm(&glm_synthetic(GLM_YEARS, DATA_SEED)).context("glm target")?
        }
        Table1Target::EightSchoolsNc => {
            make_eight_schools(&eight_schools_classic(), false).context("eight schools")?
        }
        Table1Target::EightSchools => {
            make_eight_schools(&eight_schools_classic(), true).context("eight schools")?
        }
        Table1Target::Mixture => make_gaussian_mixture_2d(),
        Table1Target::Crescent => make_crescent(),
    })
}

fn table1_row(
    config: &ExperimentConfig,
    which: Table1Target,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let target = table1_target(which)?;
    let d = target.dim();
    let draws = if which == Table1Target::EightSchools {
        let nc = table1_target(Table1Target::EightSchoolsNc)?;
        let raw = chains(config, &nc, vec![0.0; d], 0, out)?;
        let rows: Vec<Vec<f64>> = raw.rows().map(eight_schools_to_centered).collect();
        Matrix::from_rows(&rows).context("centered draws")?
    } else {
        reference_sample(config, &target, vec![0.0; d], 0, out)?
    };
    let reference = moments_of(&target, &draws)?;
    let mu = target
        .known_moments
        .mean
        .clone()
        .or_else(|| target.symmetry_point.clone())
        .unwrap_or_else(|| reference.mean.clone());
    let report = epsilon_90_with(&target, &draws, &mu, config.exec).context("symmetry statistic")?;
    let f = fit(config, &target, which.name(), 0)?;
    let q_moments = MomentSummary::from_approx(&f.approx);
    let table = ErrorTable::compute(&reference, &q_moments, Some(report.epsilon_90)).context("error table")?;
    out.set("epsilon_90", report.epsilon_90);
    out.set("mean_delta_mean", table.mean_delta_mean);
    out.set("mean_delta_corr", table.mean_delta_corr);
    out.set("mean_delta_cov", table.mean_delta_cov);
    out.set("max_delta_mean", table.max_delta_mean());
    out.set("max_delta_corr", table.max_delta_corr());
    for (i, v) in table.delta_mean.iter().enumerate() {
        out.set(format!("delta_mean/coord={i}"), *v);
    }
    out.symmetry.push(SymmetrySummary::new(which.name(), &report));
    out.error_tables.push(LabeledErrorTable {
        label: which.name().to_string(),
        table,
    });
    out.fits.push(f);
    Ok(())
}

struct ProbeCase {
    label: &'static str,
    target: TargetDensity,
    center: Vec<f64>,
    radius: f64,
}

fn probe_cases() -> Result<Vec<ProbeCase>, HarnessError> {
    let case = |label, target: TargetDensity, radius| {
        let center = target
            .symmetry_point
            .clone()
            .unwrap_or_else(|| vec![0.0; target.dim()]);
        ProbeCase {
            label,
            target,
            center,
            radius,
        }
    };
    let cov = PosDefMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 2.0]]).context("mvn scale")?;
    Ok(vec![
        case("mvn_2d", make_mvn(&[1.0, -1.0], &cov).context("mvn")?, 2.0),
        case("laplace", make_univariate(UnivariateKind::Laplace, 0.0, 1.0).context("laplace")?, 2.0),
        case(
            "skew_normal_3",
            make_univariate(UnivariateKind::SkewNormal { alpha: 3.0 }, 0.0, 1.0).context("skew")?,
            2.0,
        ),
        case("mixture_m1", make_gaussian_mixture_1d(1.0).context("mixture")?, 3.0),
        case("mixture_m10", make_gaussian_mixture_1d(10.0).context("mixture")?, 3.0),
        case(
            "logistic_n4",
            make_logistic_regression(&logistic_synthetic(4, DATA_SEED), 0.5).context("logistic")?,
            1.5,
        ),
        case(
            "glm",
            make_binomial_glm(&glm_synthetic(GLM_YEARS, DATA_SEED)).context("glm")?,
            0.5,
        ),
    ])
}

fn convexity_probe(
    config: &ExperimentConfig,
    segments: usize,
    n_points: usize,
    out: &mut ExperimentResult,
) -> Result<(), HarnessError> {
    let family = config.family();
    for (c, case) in probe_cases()?.into_iter().enumerate() {
        let d = case.target.dim();
        let template = LocationScaleApprox::standard(family.base_density(d)?, Mode::LocationOnly);
        let mut r: Rng = rng::stream(rng::mix(config.seed, SALT_PROBE), c as u64);
        let mut all_convex = true;
        for s in 0..segments {
            let mut u: Vec<f64> = (0..d).map(|_| r.random::<f64>() - 0.5).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            u.iter_mut().for_each(|x| *x /= norm);
            let radius = case.radius * (0.5 + r.random::<f64>());
            let a: Vec<f64> = case.center.iter().zip(&u).map(|(c, u)| c - radius * u).collect();
            let b: Vec<f64> = case.center.iter().zip(&u).map(|(c, u)| c + radius * u).collect();
            let verdict = kl_convexity_probe(
                &case.target,
                &template,
                (&a, &b),
                n_points,
                default_probe_method(d),
            )
            .context(format!("convexity probe on {}", case.label))?;
            all_convex &= verdict.convex;
            out.set(format!("min_second_difference/{}/{s}", case.label), verdict.min_second_difference);
            out.convexity.push(LabeledConvexity {
                label: format!("{}/{s}", case.label),
                log_concave: case.target.log_concave,
                verdict,
            });
        }
        out.set(format!("convex/{}", case.label), if all_convex { 1.0 } else { 0.0 });
        out.set(format!("log_concave/{}", case.label), if case.target.log_concave { 1.0 } else { 0.0 });
    }
    Ok(())
}
