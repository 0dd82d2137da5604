//! Dense linear algebra for positive-definite scale matrices.
//!
//! The Cholesky factor `L` (lower triangular, positive diagonal) is used as
//! the square root `S^{1/2}` everywhere: any square root with positive
//! determinant parameterizes the same location-scale family, and `L` is the
//! cheapest one to form and invert.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Asymmetry tolerated (relative to the largest entry) before an input is
/// rejected; anything below is averaged away.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols.max(1)).take(self.nrows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut out = Matrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// Symmetric matrix intended as a scale parameter. Positive-definiteness is
/// established by [`cholesky`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PosDefMatrix(Matrix);

impl PosDefMatrix {
    /// Symmetrizes `(A + Aᵀ)/2` after checking the asymmetry guard.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        let n = m.nrows();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let mut sym = m.clone();
        for i in 0..n {
            for j in 0..i {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        Ok(Self(sym))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    /// Unit diagonal, constant `rho` off the diagonal.
    pub fn equicorrelated(n: usize, rho: f64) -> Self {
        let mut m = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m[(i, j)] = rho;
                }
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `Mᵢⱼ / √(Mᵢᵢ Mⱼⱼ)`.
    pub fn correlation(&self) -> Matrix {
        let n = self.dim();
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = if i == j {
                    1.0
                } else {
                    self.get(i, j) / (self.get(i, i) * self.get(j, j)).sqrt()
                };
            }
        }
        c
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }
}

impl TryFrom<Vec<Vec<f64>>> for PosDefMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<PosDefMatrix> for Vec<Vec<f64>> {
    fn from(m: PosDefMatrix) -> Self {
        m.0.to_rows()
    }
}

/// Lower-triangular matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularFactor {
    dim: usize,
    /// Packed rows: row `i` holds entries `0..=i`.
    data: Vec<f64>,
}

fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl LowerTriangularFactor {
    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim]).expect("unit diagonal is positive")
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut data = vec![0.0; dim * (dim + 1) / 2];
        for (i, &d) in diag.iter().enumerate() {
            data[packed_index(i, i)] = d;
        }
        Self::from_packed(dim, data)
    }

    /// Builds a factor from a dense matrix, ignoring the strict upper triangle.
    pub fn from_lower(m: &Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let dim = m.nrows();
        let mut data = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                data.push(m[(i, j)]);
            }
        }
        Self::from_packed(dim, data)
    }

    /// Builds a factor from packed rows (row `i` holds entries `0..=i`).
    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(dim * (dim + 1) / 2, data.len())?;
        if dim == 0 {
            return Err(Error::InvalidParameter("empty factor".into()));
        }
        for i in 0..dim {
            let d = data[packed_index(i, i)];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    /// Entry `(i, j)`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed_index(i, j)]
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// `out = L·v`.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let row = &self.data[packed_index(i, 0)..=packed_index(i, i)];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        Ok(out)
    }

    /// `out = Lᵀ·v`.
    pub fn mul_transpose_vec_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..self.dim {
            for j in 0..=i {
                out[j] += self.get(i, j) * v[i];
            }
        }
    }

    /// Solves `L·x = v` in place by forward substitution.
    pub fn solve_in_place(&self, v: &mut [f64]) {
        for i in 0..self.dim {
            let row = &self.data[packed_index(i, 0)..=packed_index(i, i)];
            let s: f64 = row[..i].iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
            v[i] = (v[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ·x = v` in place by back substitution.
    pub fn solve_transpose_in_place(&self, v: &mut [f64]) {
        for i in (0..self.dim).rev() {
            let mut s = v[i];
            for k in i + 1..self.dim {
                s -= self.get(k, i) * v[k];
            }
            v[i] = s / self.get(i, i);
        }
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> PosDefMatrix {
        let n = self.dim;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        PosDefMatrix(m)
    }

    pub fn determinant(&self) -> f64 {
        self.diag().iter().product()
    }

    /// Returns `self` with every entry multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_packed(self.dim, self.data.iter().map(|x| x * factor).collect())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn cholesky(m: &PosDefMatrix) -> Result<LowerTriangularFactor> {
    let n = m.dim();
    let mut data = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= data[packed_index(i, k)] * data[packed_index(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                data[packed_index(i, i)] = s.sqrt();
            } else {
                data[packed_index(i, j)] = s / data[packed_index(j, j)];
            }
        }
    }
    LowerTriangularFactor::from_packed(n, data)
}

/// `log|L·Lᵀ| = 2 Σ log Lᵢᵢ`.
pub fn log_det(l: &LowerTriangularFactor) -> f64 {
    2.0 * (0..l.dim()).map(|i| l.get(i, i).ln()).sum::<f64>()
}

pub fn tri_solve(l: &LowerTriangularFactor, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.dim(), v.len())?;
    let mut x = v.to_vec();
    l.solve_in_place(&mut x);
    Ok(x)
}

/// `M⁻¹` from its Cholesky factor.
pub fn inverse_from_factor(l: &LowerTriangularFactor) -> Matrix {
    let n = l.dim();
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        l.solve_in_place(&mut col);
        l.solve_transpose_in_place(&mut col);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_cofactor(m: &Matrix) -> f64 {
        match m.nrows() {
            1 => m[(0, 0)],
            2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
            3 => {
                m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                    - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                    + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let l = cholesky(&PosDefMatrix::identity(3)).unwrap();
        assert_eq!(l, LowerTriangularFactor::identity(3));
    }

    #[test]
    fn cholesky_of_diagonal_takes_square_roots() {
        let m = PosDefMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert_eq!(l.to_matrix().to_rows(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn cholesky_reconstructs_correlated_input() {
        let m = PosDefMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        let back = l.reconstruct();
        assert!(back.matrix().frobenius_distance(m.matrix()) <= 1e-12);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let m = PosDefMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&m),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(
            PosDefMatrix::new(asym),
            Err(Error::NotSymmetric { .. })
        ));
        // drift below the guard is averaged away
        let drift = Matrix::from_rows(&[vec![1.0, 0.5 + 1e-14], vec![0.5, 1.0]]).unwrap();
        let sym = PosDefMatrix::new(drift).unwrap();
        assert_eq!(sym.get(0, 1), sym.get(1, 0));
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det(&LowerTriangularFactor::identity(4)), 0.0);
        let l = LowerTriangularFactor::from_diag(&[2.0, 3.0]).unwrap();
        assert!((log_det(&l) - 36f64.ln()).abs() < 1e-14);
        let m = PosDefMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert!((log_det(&l) - 0.19f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tri_solve_examples() {
        let l = LowerTriangularFactor::identity(2);
        assert_eq!(tri_solve(&l, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let l = LowerTriangularFactor::from_diag(&[2.0, 4.0]).unwrap();
        assert_eq!(tri_solve(&l, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            tri_solve(&l, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tri_solve_residual_on_dense_factor() {
        let m = Matrix::from_rows(&[
            vec![1.5, 0.0, 0.0],
            vec![-0.7, 0.8, 0.0],
            vec![2.2, 0.3, 0.4],
        ])
        .unwrap();
        let l = LowerTriangularFactor::from_lower(&m).unwrap();
        let v = [0.3, -1.7, 2.9];
        let x = tri_solve(&l, &v).unwrap();
        let back = l.mul_vec(&x).unwrap();
        let res: f64 = back.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = v.iter().map(|a| a * a).sum();
        assert!(res.sqrt() <= 1e-12 * norm.sqrt());
    }

    #[test]
    fn inverse_from_factor_is_inverse() {
        let m = PosDefMatrix::equicorrelated(4, 0.9);
        let inv = inverse_from_factor(&cholesky(&m).unwrap());
        let prod = m.matrix().matmul(&inv).unwrap();
        assert!(prod.frobenius_distance(&Matrix::identity(4)) < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spd(n: usize) -> impl Strategy<Value = PosDefMatrix> {
            proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |a| {
                // A·Aᵀ + n·I is comfortably positive definite.
                let a = Matrix::from_row_major(n, n, a).unwrap();
                let mut m = a.matmul(&a.transpose()).unwrap();
                for i in 0..n {
                    m[(i, i)] += n as f64 * 0.1 + 0.05;
                }
                PosDefMatrix::new(m).unwrap()
            })
        }

        proptest! {
            #[test]
            fn reconstruction_within_tolerance(m in (1usize..7).prop_flat_map(spd)) {
                let l = cholesky(&m).unwrap();
                let back = l.reconstruct();
                let rel = back.matrix().frobenius_distance(m.matrix()) / m.matrix().frobenius_norm();
                prop_assert!(rel <= 1e-10);
                prop_assert!(l.determinant() > 0.0);
            }

            #[test]
            fn log_det_matches_cofactor(m in (1usize..4).prop_flat_map(spd)) {
                let l = cholesky(&m).unwrap();
                let det = det_cofactor(m.matrix());
                prop_assert!((log_det(&l) - det.ln()).abs() <= 1e-10 * (1.0 + det.ln().abs()));
            }
        }
    }
}
