use symvi_core::elbo::{
    estimate_elbo, estimate_elbo_with, grad_elbo, grid_search_1d, kl_quadrature, optimize,
    uniform_grid, OptimizerConfig,
};
use symvi_core::families::{BaseDensity, LocationScaleApprox, Mode};
use symvi_core::linalg::{LowerTriangularFactor, Matrix, PosDefMatrix};
use symvi_core::par::Exec;
use symvi_core::quadrature::Quadrature;
use symvi_core::targets::{
    make_gaussian_mixture_1d, make_multi_student_t, make_mvn, make_univariate, UnivariateKind,
};

/// Closed-form `KL(N(a, A) ‖ N(b, B))` for 2-D Gaussians, written out with
/// explicit 2×2 inverses and determinants.
fn kl_2d(a: [f64; 2], sa: [[f64; 2]; 2], b: [f64; 2], sb: [[f64; 2]; 2]) -> f64 {
    let det = |m: [[f64; 2]; 2]| m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let db = det(sb);
    let inv = [[sb[1][1] / db, -sb[0][1] / db], [-sb[1][0] / db, sb[0][0] / db]];
    let mut tr = 0.0;
    for i in 0..2 {
        for k in 0..2 {
            tr += inv[i][k] * sa[k][i];
        }
    }
    let diff = [b[0] - a[0], b[1] - a[1]];
    let mut maha = 0.0;
    for i in 0..2 {
        for k in 0..2 {
            maha += diff[i] * inv[i][k] * diff[k];
        }
    }
    0.5 * (tr + maha - 2.0 + (db / det(sa)).ln())
}

fn factor(rows: &[Vec<f64>]) -> LowerTriangularFactor {
    LowerTriangularFactor::from_lower(&Matrix::from_rows(rows).unwrap()).unwrap()
}

#[test]
fn elbo_is_negative_gaussian_kl() {
    let cases = [
        ([0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
        ([1.0, -1.0], vec![vec![0.5, 0.0], vec![0.3, 0.8]], [0.0, 2.0], [[2.0, 0.7], [0.7, 1.0]]),
        ([3.0, 0.5], vec![vec![2.0, 0.0], vec![-1.0, 0.4]], [-1.0, 0.0], [[0.6, -0.2], [-0.2, 3.0]]),
    ];
    for (nu, l, mu, sp) in cases {
        let lf = factor(&l);
        let sq = lf.reconstruct();
        let sq = [[sq.get(0, 0), sq.get(0, 1)], [sq.get(1, 0), sq.get(1, 1)]];
        let p = make_mvn(&mu, &PosDefMatrix::from_rows(&[sp[0].to_vec(), sp[1].to_vec()]).unwrap()).unwrap();
        let q = LocationScaleApprox::full_rank(BaseDensity::gaussian(2), nu.to_vec(), &lf).unwrap();
        let exact = kl_2d(nu, sq, mu, sp);
        let est = estimate_elbo(&p, &q, 50_000, 7).unwrap();
        let offset = p.log_normalizer_offset.unwrap_or(0.0);
        let kl = -(est.value + offset);
        assert!(
            (kl - exact).abs() <= 4.0 * est.std_error + 1e-12,
            "mc {kl} exact {exact} se {}",
            est.std_error
        );
    }
}

#[test]
fn kl_is_translation_equivariant() {
    let quad = Quadrature::default();
    let kinds = [
        UnivariateKind::Laplace,
        UnivariateKind::StudentT { df: 3.0 },
        UnivariateKind::Cauchy,
        UnivariateKind::SkewNormal { alpha: 3.0 },
    ];
    for kind in kinds {
        for base in [BaseDensity::gaussian(1), BaseDensity::laplace_iid(1)] {
            let l = LowerTriangularFactor::from_diag(&[1.3]).unwrap();
            for c in [-2.5, 0.7, 4.0] {
                let p = make_univariate(kind, 0.2, 1.1).unwrap();
                let pc = make_univariate(kind, 0.2 + c, 1.1).unwrap();
                let q = LocationScaleApprox::location_only(base, vec![0.9], &l).unwrap();
                let qc = q.with_nu(vec![0.9 + c]).unwrap();
                let a = kl_quadrature(&p, &q, &quad).unwrap();
                let b = kl_quadrature(&pc, &qc, &quad).unwrap();
                assert!((a - b).abs() < 1e-8, "{kind:?} c = {c}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn reparameterization_gradient_matches_finite_differences() {
    let scale = PosDefMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 2.0]]).unwrap();
    let p = make_multi_student_t(5.0, &[0.5, -0.5], &scale).unwrap();
    let q = LocationScaleApprox::full_rank(
        BaseDensity::gaussian(2),
        vec![0.2, 0.1],
        &factor(&[vec![0.8, 0.0], vec![0.3, 1.1]]),
    )
    .unwrap();
    let n = 10_000;
    let g = grad_elbo(&p, &q, n, 3).unwrap();
    let base = q.pack();
    for k in 0..base.len() {
        let h = 1e-6;
        let mut up = base.clone();
        let mut dn = base.clone();
        up[k] += h;
        dn[k] -= h;
        let fp = estimate_elbo(&p, &q.unpack(&up).unwrap(), n, 3).unwrap().value;
        let fm = estimate_elbo(&p, &q.unpack(&dn).unwrap(), n, 3).unwrap().value;
        let fd = (fp - fm) / (2.0 * h);
        assert!((g.grad[k] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: {} vs {fd}", g.grad[k]);
    }
}

#[test]
fn optimizer_recovers_shifted_normal() {
    let p = make_mvn(&[3.0], &PosDefMatrix::identity(1)).unwrap();
    let q0 = LocationScaleApprox::standard(BaseDensity::gaussian(1), Mode::FullRank);
    let cfg = OptimizerConfig {
        seed: 1,
        ..OptimizerConfig::default()
    };
    let (q, _) = optimize(&p, &q0, &cfg).unwrap();
    assert!((q.nu()[0] - 3.0).abs() < 0.02, "{}", q.nu()[0]);
    assert!((q.scale_factor().diag()[0] - 1.0).abs() < 0.02);
}

#[test]
fn independent_seeds_agree_on_student_target() {
    let scale = PosDefMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let p = make_multi_student_t(5.0, &[1.0, -1.0], &scale).unwrap();
    let q0 = LocationScaleApprox::standard(BaseDensity::gaussian(2), Mode::FullRank);
    let fits: Vec<Vec<f64>> = [11u64, 12]
        .iter()
        .map(|&seed| {
            let cfg = OptimizerConfig {
                seed,
                ..OptimizerConfig::default()
            };
            optimize(&p, &q0, &cfg).unwrap().0.pack()
        })
        .collect();
    for (a, b) in fits[0].iter().zip(&fits[1]) {
        assert!((a - b).abs() < 0.05, "{:?} vs {:?}", fits[0], fits[1]);
    }
}

#[test]
fn optimizer_stays_in_local_basin_of_bimodal_target() {
    let p = make_gaussian_mixture_1d(10.0).unwrap();
    let l = LowerTriangularFactor::identity(1);
    let q0 = LocationScaleApprox::full_rank(BaseDensity::gaussian(1), vec![9.0], &l).unwrap();
    let cfg = OptimizerConfig {
        seed: 2,
        ..OptimizerConfig::default()
    };
    let (q, _) = optimize(&p, &q0, &cfg).unwrap();
    assert!((q.nu()[0] - 10.0).abs() < 0.1, "{}", q.nu()[0]);
}

/// `d/dν KL(q_ν‖p) = −E_q[(log p)′]`, evaluated by quadrature with a
/// central difference of `log p`.
fn location_stationarity(kind: UnivariateKind, base: BaseDensity, nu: f64) -> f64 {
    let p = make_univariate(kind, 0.0, 1.0).unwrap();
    let q = LocationScaleApprox::location_only(base, vec![nu], &LowerTriangularFactor::identity(1)).unwrap();
    let h = 1e-6;
    Quadrature::default()
        .integrate_with_breaks(
            |x| {
                let dlp = (p.log_density(&[x + h]) - p.log_density(&[x - h])) / (2.0 * h);
                q.log_density(&[x]).unwrap().exp() * dlp
            },
            &[f64::NEG_INFINITY, 0.0, nu, f64::INFINITY],
        )
        .unwrap()
        .value
}

#[test]
fn grid_search_finds_cauchy_centre() {
    let p = make_univariate(UnivariateKind::Cauchy, 0.0, 1.0).unwrap();
    let t = LocationScaleApprox::standard(BaseDensity::gaussian(1), Mode::LocationOnly);
    let r = grid_search_1d(&p, &t, &uniform_grid(-2.0, 2.0, 0.01), &Quadrature::default(), Exec::default())
        .unwrap();
    assert!(r.best_nu.abs() < 1e-9, "{}", r.best_nu);
    assert_eq!(r.curve.len(), 401);
}

#[test]
fn grid_search_on_skewed_target_matches_stationary_point() {
    let kind = UnivariateKind::SkewNormal { alpha: 3.0 };
    let base = BaseDensity::laplace_iid(1);
    let p = make_univariate(kind, 0.0, 1.0).unwrap();
    let t = LocationScaleApprox::standard(base, Mode::LocationOnly);
    let r = grid_search_1d(&p, &t, &uniform_grid(-5.0, 5.0, 0.01), &Quadrature::default(), Exec::default())
        .unwrap();
    let (mut lo, mut hi) = (r.best_nu - 0.02, r.best_nu + 0.02);
    assert!(location_stationarity(kind, base, lo) * location_stationarity(kind, base, hi) < 0.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if location_stationarity(kind, base, lo) * location_stationarity(kind, base, mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((r.best_nu - 0.5 * (lo + hi)).abs() <= 0.005 + 1e-9, "{} vs {lo}", r.best_nu);
    assert!(r.best_nu > 0.0);
}

#[test]
fn replay_is_bit_identical_across_execution_policies() {
    let scale = PosDefMatrix::equicorrelated(3, 0.5);
    let p = make_multi_student_t(4.0, &[0.0, 1.0, -1.0], &scale).unwrap();
    let q0 = LocationScaleApprox::standard(BaseDensity::gaussian(3), Mode::FullRank);
    let run = |exec| {
        let cfg = OptimizerConfig {
            seed: 5,
            max_steps: 300,
            n_draws_per_step: 200,
            exec,
            ..OptimizerConfig::default()
        };
        optimize(&p, &q0, &cfg).unwrap()
    };
    let (a, ta) = run(Exec::Parallel);
    let (b, tb) = run(Exec::Sequential);
    let (c, _) = run(Exec::Parallel);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(ta, tb);

    let e1 = estimate_elbo_with(&p, &a, 1000, 8, Exec::Sequential, 0).unwrap();
    let e2 = estimate_elbo_with(&p, &a, 1000, 8, Exec::Parallel, 0).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let p = make_mvn(&[0.0, 0.0], &PosDefMatrix::identity(2)).unwrap();
    let q = LocationScaleApprox::standard(BaseDensity::gaussian(3), Mode::FullRank);
    assert!(estimate_elbo(&p, &q, 10, 0).is_err());
    assert!(grad_elbo(&p, &q, 10, 0).is_err());
}
