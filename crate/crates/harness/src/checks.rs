//! Numerical-contract suite run by `symvi check`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use symvi_core::datasets::{eight_schools_classic, glm_synthetic, logistic_synthetic};
use symvi_core::diagnostics::{default_probe_method, kl_convexity_probe};
use symvi_core::elbo::{estimate_elbo, grad_elbo};
use symvi_core::families::{BaseDensity, LocationScaleApprox, Mode};
use symvi_core::linalg::{cholesky, log_det, LowerTriangularFactor, Matrix, PosDefMatrix};
use symvi_core::rng;
use symvi_core::targets::{
    make_binomial_glm, make_crescent, make_crescent_shifted, make_eight_schools,
    make_gaussian_mixture_1d, make_gaussian_mixture_2d, make_logistic_regression,
    make_multi_student_t, make_mvn, make_univariate, TargetDensity, UnivariateKind,
};

use crate::experiments::{DATA_SEED, GLM_YEARS};

pub const GRADIENT_TOL: f64 = 1e-5;
pub const REPARAM_TOL: f64 = 1e-3;
pub const KL_SE_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Every in-scope target, each with a typical location for test points.
pub fn all_targets() -> Vec<(TargetDensity, Vec<f64>)> {
    let scale = PosDefMatrix::from_rows(&[vec![2.0, 0.8, 0.1], vec![0.8, 1.0, -0.3], vec![0.1, -0.3, 0.5]])
        .expect("positive definite");
    let uni = |k| make_univariate(k, 0.5, 1.5).expect("valid");
    let mut v = vec![
        (make_mvn(&[1.0, -1.0, 0.5], &scale).expect("valid"), vec![1.0, -1.0, 0.5]),
        (make_multi_student_t(5.0, &[0.0, 1.0, 2.0], &scale).expect("valid"), vec![0.0, 1.0, 2.0]),
        (uni(UnivariateKind::Laplace), vec![0.5]),
        (uni(UnivariateKind::StudentT { df: 4.0 }), vec![0.5]),
        (uni(UnivariateKind::Cauchy), vec![0.5]),
        (uni(UnivariateKind::SkewNormal { alpha: 4.0 }), vec![0.5]),
        (make_gaussian_mixture_1d(2.0).expect("valid"), vec![0.0]),
        (make_gaussian_mixture_2d(), vec![1.0, 1.0]),
        (make_crescent(), vec![0.0, 0.0]),
        (make_crescent_shifted(), vec![100.0, 0.0]),
        (
            make_logistic_regression(&logistic_synthetic(16, DATA_SEED), 0.5).expect("valid"),
            vec![0.0; 3],
        ),
        (make_binomial_glm(&glm_synthetic(GLM_YEARS, DATA_SEED)).expect("valid"), vec![0.8, 0.3, -0.2]),
    ];
    for centered in [false, true] {
        let t = make_eight_schools(&eight_schools_classic(), centered).expect("valid");
        let mut loc = vec![0.0; 10];
        loc[0] = 5.0;
        loc[1] = 1.0;
        if centered {
            loc[2..].iter_mut().for_each(|x| *x = 5.0);
        }
        v.push((t, loc));
    }
    v
}

/// Largest `|g − fd|` relative to `max(1, ‖g‖∞)` over `n_points` points
/// near `loc`, by central differences.
pub fn gradient_fd_error(target: &TargetDensity, loc: &[f64], n_points: usize, seed: u64) -> f64 {
    let d = target.dim();
    let mut worst = 0.0f64;
    let mut r = rng::stream(seed, 0);
    let mut tried = 0;
    while tried < n_points {
        let z: Vec<f64> = loc
            .iter()
            .map(|c| c + 0.7 * r.sample::<f64, _>(StandardNormal))
            .collect();
        if target.near_kink(&z, 1e-3) {
            continue;
        }
        tried += 1;
        let g = target.grad_log_density(&z);
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for k in 0..d {
            let h = 1e-5 * z[k].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (target.log_density(&zp) - target.log_density(&zm)) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / scale);
        }
    }
    worst
}

/// Pathwise ELBO gradient against central differences of the ELBO
/// estimate with the same seed.
pub fn reparam_fd_error(target: &TargetDensity, q: &LocationScaleApprox, n: usize, seed: u64) -> f64 {
    let g = grad_elbo(target, q, n, seed).expect("finite gradient").grad;
    let p = q.pack();
    let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for k in 0..p.len() {
        let h = 1e-5;
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[k] += h;
        pm[k] -= h;
        let ep = estimate_elbo(target, &q.unpack(&pp).expect("valid"), n, seed).expect("finite").value;
        let em = estimate_elbo(target, &q.unpack(&pm).expect("valid"), n, seed).expect("finite").value;
        worst = worst.max((g[k] - (ep - em) / (2.0 * h)).abs() / scale);
    }
    worst
}

/// `KL(N(ν, Σq) ‖ N(μ, Σp))` in closed form.
pub fn gaussian_kl(nu: &[f64], sq: &PosDefMatrix, mu: &[f64], sp: &PosDefMatrix) -> f64 {
    let d = nu.len();
    let lp = cholesky(sp).expect("pd");
    let mut tr = 0.0;
    for j in 0..d {
        let mut col: Vec<f64> = (0..d).map(|i| sq.get(i, j)).collect();
        lp.solve_in_place(&mut col);
        lp.solve_transpose_in_place(&mut col);
        tr += col[j];
    }
    let mut diff: Vec<f64> = nu.iter().zip(mu).map(|(a, b)| b - a).collect();
    lp.solve_in_place(&mut diff);
    let maha: f64 = diff.iter().map(|x| x * x).sum();
    0.5 * (tr + maha - d as f64 + log_det(&lp) - log_det(&cholesky(sq).expect("pd")))
}

pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (t, loc) in all_targets() {
        let err = gradient_fd_error(&t, &loc, 8, 11);
        out.push(CheckOutcome::new(
            format!("gradient/{}", t.name()),
            err <= GRADIENT_TOL,
            format!("max rel err {err:.2e}"),
        ));
    }

    for (t, loc) in all_targets() {
        let d = t.dim();
        let mut l = Matrix::identity(d).scale(0.5);
        for i in 1..d {
            l[(i, i - 1)] = 0.1;
        }
        let factor = LowerTriangularFactor::from_lower(&l).expect("valid");
        let q = LocationScaleApprox::full_rank(BaseDensity::gaussian(d), loc.clone(), &factor)
            .expect("valid");
        let err = reparam_fd_error(&t, &q, 2000, 5);
        out.push(CheckOutcome::new(
            format!("reparam_gradient/{}", t.name()),
            err <= REPARAM_TOL,
            format!("max rel err {err:.2e}"),
        ));
    }

    let sp = PosDefMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).expect("pd");
    let p = make_mvn(&[1.0, -1.0], &sp).expect("valid");
    let lq = LowerTriangularFactor::from_lower(
        &Matrix::from_rows(&[vec![0.9, 0.0], vec![0.2, 0.6]]).expect("shape"),
    )
    .expect("valid");
    let q = LocationScaleApprox::full_rank(BaseDensity::gaussian(2), vec![0.3, -0.2], &lq).expect("valid");
    let est = estimate_elbo(&p, &q, 20_000, 3).expect("finite");
    let exact = gaussian_kl(q.nu(), &q.scale_matrix(), &[1.0, -1.0], &sp);
    let gap = (-est.value - exact).abs();
    out.push(CheckOutcome::new(
        "gaussian_kl_closed_form",
        gap <= KL_SE_MULTIPLE * est.std_error,
        format!("mc {:.5} exact {exact:.5} se {:.1e}", -est.value, est.std_error),
    ));

    let mut probes: Vec<(TargetDensity, Vec<f64>)> =
        all_targets().into_iter().filter(|(t, _)| t.log_concave).collect();
    probes.push((make_gaussian_mixture_1d(10.0).expect("valid"), vec![0.0]));
    for (t, loc) in probes {
        let d = t.dim();
        let q = LocationScaleApprox::standard(BaseDensity::gaussian(d), Mode::LocationOnly);
        let u: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let a: Vec<f64> = loc.iter().zip(&u).map(|(c, u)| c - 2.0 * u).collect();
        let b: Vec<f64> = loc.iter().zip(&u).map(|(c, u)| c + 2.0 * u).collect();
        let (passed, detail) = match kl_convexity_probe(&t, &q, (&a, &b), 21, default_probe_method(d)) {
            Ok(v) => (
                v.convex == t.log_concave,
                format!("convex = {}, min second difference {:.2e}", v.convex, v.min_second_difference),
            ),
            Err(e) => (false, e.to_string()),
        };
        out.push(CheckOutcome::new(format!("convexity/{}", t.name()), passed, detail));
    }
    out
}
