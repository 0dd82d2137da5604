use proptest::prelude::*;

use symvi_core::families::{BaseDensity, LocationScaleApprox, Mode};
use symvi_core::linalg::{LowerTriangularFactor, Matrix};
use symvi_core::quadrature::Quadrature;

fn bases(d: usize) -> Vec<BaseDensity> {
    vec![
        BaseDensity::gaussian(d),
        BaseDensity::laplace_iid(d),
        BaseDensity::student_t_iid(d, 4.0).unwrap(),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-4.0f64..4.0, d)
}

/// Full-rank approximation with a well-conditioned factor.
fn approx(d: usize) -> impl Strategy<Value = LocationScaleApprox> {
    (
        point(d),
        proptest::collection::vec(-1.0f64..1.0, d),
        proptest::collection::vec(-0.8f64..0.8, d * (d - 1) / 2),
        0usize..3,
    )
        .prop_map(move |(nu, log_diag, lower, b)| {
            let mut l = Matrix::zeros(d, d);
            let mut k = 0;
            for i in 0..d {
                l[(i, i)] = log_diag[i].exp();
                for j in 0..i {
                    l[(i, j)] = lower[k];
                    k += 1;
                }
            }
            let factor = LowerTriangularFactor::from_lower(&l).unwrap();
            LocationScaleApprox::full_rank(bases(d)[b], nu, &factor).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bases_are_even(zeta in (1usize..=5).prop_flat_map(point)) {
        let neg: Vec<f64> = zeta.iter().map(|x| -x).collect();
        for b in bases(zeta.len()) {
            prop_assert_eq!(b.log_density(&zeta), b.log_density(&neg));
        }
    }

    #[test]
    fn gaussian_base_is_rotation_invariant(zeta in point(2), angle in 0.0f64..6.283) {
        let (s, c) = angle.sin_cos();
        let rotated = [c * zeta[0] - s * zeta[1], s * zeta[0] + c * zeta[1]];
        let b = BaseDensity::gaussian(2);
        prop_assert!((b.log_density(&zeta) - b.log_density(&rotated)).abs() < 1e-12);
        prop_assert!(b.is_spherical());
    }

    #[test]
    fn pack_unpack_round_trip(q in (1usize..=5).prop_flat_map(approx)) {
        let p = q.pack();
        prop_assert_eq!(p.len(), q.n_params());
        let back = q.unpack(&p).unwrap();
        prop_assert_eq!(back.pack(), p);
        prop_assert_eq!(back.nu(), q.nu());
    }

    #[test]
    fn density_is_affine_pushforward(q in (1usize..=4).prop_flat_map(approx), zeta in point(4)) {
        let d = q.dim();
        let zeta = &zeta[..d];
        let l = q.scale_factor().to_matrix();
        let z: Vec<f64> = (0..d)
            .map(|i| q.nu()[i] + (0..d).map(|j| l[(i, j)] * zeta[j]).sum::<f64>())
            .collect();
        let mut via = vec![0.0; d];
        q.transform(zeta, &mut via);
        for (a, b) in via.iter().zip(&z) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
        let want = q.base().log_density(zeta) - log_det;
        prop_assert!((q.log_density(&z).unwrap() - want).abs() < 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn location_only_updates_leave_scale_fixed(
        q in approx(3),
        nu in point(3),
    ) {
        let frozen = LocationScaleApprox::new(*q.base(), q.nu().to_vec(), q.scale_factor(), Mode::LocationOnly).unwrap();
        prop_assert_eq!(frozen.n_params(), 3);
        let moved = frozen.unpack(&nu).unwrap();
        prop_assert_eq!(moved.nu(), nu.as_slice());
        prop_assert_eq!(moved.scale_factor(), q.scale_factor());
        prop_assert_eq!(moved.pack(), nu);
    }
}

#[test]
fn one_dimensional_densities_integrate_to_one() {
    let quad = Quadrature::default();
    for b in bases(1) {
        let l = LowerTriangularFactor::from_diag(&[1.7]).unwrap();
        let q = LocationScaleApprox::full_rank(b, vec![0.4], &l).unwrap();
        let r = quad
            .integrate_with_breaks(
                |x| q.log_density(&[x]).unwrap().exp(),
                &[f64::NEG_INFINITY, 0.4, f64::INFINITY],
            )
            .unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{:?}: {}", b.kind, r.value);
    }
}

#[test]
fn product_base_integrates_to_one_in_two_dimensions() {
    let quad = Quadrature::default();
    for b in bases(2) {
        let breaks = [f64::NEG_INFINITY, 0.0, f64::INFINITY];
        let outer = quad
            .integrate_with_breaks(
                |a| {
                    quad.integrate_with_breaks(|c| b.log_density(&[a, c]).exp(), &breaks)
                        .unwrap()
                        .value
                },
                &breaks,
            )
            .unwrap();
        assert!((outer.value - 1.0).abs() < 1e-7, "{:?}: {}", b.kind, outer.value);
    }
}

#[test]
fn gaussian_entropy_closed_form() {
    let l = LowerTriangularFactor::from_lower(
        &Matrix::from_rows(&[vec![2.0, 0.0, 0.0], vec![0.3, 0.5, 0.0], vec![-1.0, 0.2, 1.5]]).unwrap(),
    )
    .unwrap();
    let q = LocationScaleApprox::full_rank(BaseDensity::gaussian(3), vec![0.0; 3], &l).unwrap();
    let want = 1.5 * (1.0 + (2.0 * std::f64::consts::PI).ln()) + (2.0f64 * 0.5 * 1.5).ln();
    assert!((q.entropy().value - want).abs() < 1e-12);
    let mc = q.entropy_mc(200_000, 9);
    assert!((mc.value - want).abs() < 4.0 * mc.std_error, "{} vs {want}", mc.value);
}

#[test]
fn sample_moments_match_scale_matrix() {
    let l = LowerTriangularFactor::from_lower(
        &Matrix::from_rows(&[vec![1.0, 0.0], vec![0.8, 0.6]]).unwrap(),
    )
    .unwrap();
    let q = LocationScaleApprox::full_rank(BaseDensity::gaussian(2), vec![1.0, -2.0], &l).unwrap();
    let n = 100_000;
    let draws = q.sample(n, 4);
    let mean: Vec<f64> = (0..2).map(|j| draws.column(j).iter().sum::<f64>() / n as f64).collect();
    assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 2.0).abs() < 0.02, "{mean:?}");
    let cov01 = draws
        .rows()
        .map(|r| (r[0] - mean[0]) * (r[1] - mean[1]))
        .sum::<f64>()
        / (n - 1) as f64;
    assert!((cov01 - 0.8).abs() < 0.02, "{cov01}");
}

#[test]
fn rejects_mismatched_parameters() {
    let q = LocationScaleApprox::standard(BaseDensity::gaussian(2), Mode::FullRank);
    assert!(q.unpack(&[0.0; 4]).is_err());
    assert!(LocationScaleApprox::mean_field(BaseDensity::gaussian(2), vec![0.0; 2], &[1.0, -1.0]).is_err());
    assert!(BaseDensity::student_t_iid(2, -1.0).is_err());
}
