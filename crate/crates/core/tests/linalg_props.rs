use proptest::prelude::*;

use symvi_core::linalg::{cholesky, inverse_from_factor, log_det, LowerTriangularFactor, Matrix, PosDefMatrix};

fn entry() -> impl Strategy<Value = f64> {
    (-100i32..=100).prop_map(|x| x as f64 / 50.0)
}

/// `A = B·Bᵀ + δI` is positive definite for any `B`.
fn pd_matrix(n: usize) -> impl Strategy<Value = PosDefMatrix> {
    proptest::collection::vec(entry(), n * n).prop_map(move |b| {
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
                rows[i][j] = s + if i == j { 0.5 } else { 0.0 };
            }
        }
        PosDefMatrix::from_rows(&rows).expect("positive definite by construction")
    })
}

fn cofactor_det(m: &Matrix) -> f64 {
    match m.nrows() {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cholesky_reconstructs(m in (1usize..=6).prop_flat_map(pd_matrix)) {
        let l = cholesky(&m).unwrap();
        let back = l.reconstruct();
        let rel = back.matrix().frobenius_distance(m.matrix()) / m.matrix().frobenius_norm();
        prop_assert!(rel <= 1e-10, "relative error {rel}");
        prop_assert!(l.determinant() > 0.0);
    }

    #[test]
    fn log_det_matches_cofactor_expansion(m in (2usize..=3).prop_flat_map(pd_matrix)) {
        let det = cofactor_det(m.matrix());
        let ld = log_det(&cholesky(&m).unwrap());
        prop_assert!((ld - det.ln()).abs() <= 1e-10 * (1.0 + det.ln().abs()), "{ld} vs {}", det.ln());
    }

    #[test]
    fn triangular_solve_residual(
        m in pd_matrix(4),
        v in proptest::collection::vec(entry(), 4),
    ) {
        let l = cholesky(&m).unwrap();
        let mut x = v.clone();
        l.solve_in_place(&mut x);
        let lx = l.mul_vec(&x).unwrap();
        let res: f64 = lx.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-12 * norm.max(1e-300) + 1e-14);
    }

    #[test]
    fn inverse_times_matrix_is_identity(m in (1usize..=5).prop_flat_map(pd_matrix)) {
        let inv = inverse_from_factor(&cholesky(&m).unwrap());
        let prod = m.matrix().matmul(&inv).unwrap();
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[(i, j)] - want).abs() < 1e-8, "({i},{j}) = {}", prod[(i, j)]);
            }
        }
    }

    #[test]
    fn packed_factor_keeps_positive_diagonal(log_diag in proptest::collection::vec(-20.0f64..20.0, 1..6)) {
        let diag: Vec<f64> = log_diag.iter().map(|x| x.exp()).collect();
        let l = LowerTriangularFactor::from_diag(&diag).unwrap();
        prop_assert!(l.diag().iter().all(|d| *d > 0.0));
        prop_assert!(l.determinant() > 0.0);
    }
}

#[test]
fn fixed_examples() {
    let l = cholesky(&PosDefMatrix::from_diag(&[4.0, 9.0])).unwrap();
    assert_eq!(l.diag(), vec![2.0, 3.0]);
    assert!((log_det(&l) - 36f64.ln()).abs() < 1e-14);

    let m = PosDefMatrix::equicorrelated(2, 0.9);
    assert!((log_det(&cholesky(&m).unwrap()) - 0.19f64.ln()).abs() < 1e-12);
    assert_eq!(log_det(&cholesky(&PosDefMatrix::identity(4)).unwrap()), 0.0);

    let mut x = vec![2.0, 8.0];
    LowerTriangularFactor::from_diag(&[2.0, 4.0]).unwrap().solve_in_place(&mut x);
    assert_eq!(x, vec![1.0, 2.0]);
}

#[test]
fn rejects_indefinite_and_asymmetric() {
    let indefinite = PosDefMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    assert!(cholesky(&indefinite).is_err());
    assert!(PosDefMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
}
