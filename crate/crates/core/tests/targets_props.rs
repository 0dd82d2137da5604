use proptest::prelude::*;

use symvi_core::diagnostics::estimate_moments;
use symvi_core::linalg::PosDefMatrix;
use symvi_core::quadrature::Quadrature;
use symvi_core::targets::{
    make_crescent, make_gaussian_mixture_1d, make_gaussian_mixture_2d, make_multi_student_t,
    make_mvn, make_univariate, Normalization, TargetDensity, UnivariateKind,
};

const KINDS: [UnivariateKind; 4] = [
    UnivariateKind::Laplace,
    UnivariateKind::StudentT { df: 3.0 },
    UnivariateKind::Cauchy,
    UnivariateKind::SkewNormal { alpha: 4.0 },
];

fn smooth_targets() -> Vec<TargetDensity> {
    let scale = PosDefMatrix::from_rows(&[vec![1.5, -0.4], vec![-0.4, 0.7]]).unwrap();
    vec![
        make_mvn(&[0.3, -1.0], &scale).unwrap(),
        make_multi_student_t(4.0, &[0.3, -1.0], &scale).unwrap(),
        make_gaussian_mixture_2d(),
        make_crescent(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_central_differences(z in proptest::collection::vec(-3.0f64..3.0, 2)) {
        for t in smooth_targets() {
            let g = t.grad_log_density(&z);
            for k in 0..2 {
                let h = 1e-6;
                let mut up = z.clone();
                let mut dn = z.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (t.log_density(&up) - t.log_density(&dn)) / (2.0 * h);
                prop_assert!((g[k] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{} {}: {} vs {}", t.name(), k, g[k], fd);
            }
        }
    }

    #[test]
    fn shift_adds_a_constant(z in proptest::collection::vec(-3.0f64..3.0, 2), c in -10.0f64..10.0) {
        for t in smooth_targets() {
            let s = t.shifted(c);
            prop_assert!((s.log_density(&z) - t.log_density(&z) - c).abs() < 1e-9);
        }
    }
}

#[test]
fn univariate_targets_integrate_to_one() {
    let quad = Quadrature::default();
    for kind in KINDS {
        let t = make_univariate(kind, 0.5, 1.5).unwrap();
        assert_eq!(t.normalization, Normalization::Normalized);
        let r = quad
            .integrate_with_breaks(|x| t.log_density(&[x]).exp(), &[f64::NEG_INFINITY, 0.5, f64::INFINITY])
            .unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{kind:?}: {}", r.value);
    }
    for m in [0.0, 1.0, 10.0] {
        let t = make_gaussian_mixture_1d(m).unwrap();
        let off = t.log_normalizer_offset.unwrap_or(0.0);
        let r = quad
            .integrate_with_breaks(|x| (t.log_density(&[x]) + off).exp(), &[f64::NEG_INFINITY, -m, 0.0, m, f64::INFINITY])
            .unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "m = {m}: {}", r.value);
    }
}

#[test]
fn exact_samplers_match_closed_form_moments() {
    let n = 400_000;
    let alpha: f64 = 4.0;
    let delta = alpha / (1.0 + alpha * alpha).sqrt();
    let two_over_pi = 2.0 / std::f64::consts::PI;
    let cases = [
        (UnivariateKind::Laplace, 0.5, 2.0 * 1.5 * 1.5),
        (UnivariateKind::StudentT { df: 5.0 }, 0.5, 1.5 * 1.5 * 5.0 / 3.0),
        (
            UnivariateKind::SkewNormal { alpha },
            0.5 + 1.5 * delta * two_over_pi.sqrt(),
            1.5 * 1.5 * (1.0 - two_over_pi * delta * delta),
        ),
    ];
    for (kind, mean, var) in cases {
        let t = make_univariate(kind, 0.5, 1.5).unwrap();
        let m = estimate_moments(&t.sample_exact(n, 12).unwrap()).unwrap();
        assert!((m.mean[0] - mean).abs() < 5.0 * m.mc_std_errors[0], "{kind:?}: {} vs {mean}", m.mean[0]);
        assert!((m.covariance[(0, 0)] / var - 1.0).abs() < 0.03, "{kind:?}: {} vs {var}", m.covariance[(0, 0)]);
    }
}

#[test]
fn mixture_1d_has_known_variance() {
    let t = make_gaussian_mixture_1d(3.0).unwrap();
    let m = estimate_moments(&t.sample_exact(200_000, 2).unwrap()).unwrap();
    assert!((m.covariance[(0, 0)] / 10.0 - 1.0).abs() < 0.02, "{}", m.covariance[(0, 0)]);
    assert_eq!(t.symmetry_point, Some(vec![0.0]));
    assert!(!t.log_concave);
    assert!(make_gaussian_mixture_1d(1.0).unwrap().log_concave);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(make_univariate(UnivariateKind::Laplace, 0.0, -1.0).is_err());
    assert!(make_univariate(UnivariateKind::StudentT { df: 0.0 }, 0.0, 1.0).is_err());
    assert!(make_gaussian_mixture_1d(-1.0).is_err());
    assert!(make_multi_student_t(0.0, &[0.0], &PosDefMatrix::identity(1)).is_err());
    assert!(make_mvn(&[0.0, 0.0], &PosDefMatrix::identity(3)).is_err());
}
