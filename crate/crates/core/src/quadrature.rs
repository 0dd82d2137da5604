//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite and
//! infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut finite = fc.is_finite();
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(center - dx) + f(center + dx);
        finite &= s.is_finite();
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    if !finite {
        return Err(Error::QuadratureFailure(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

impl Quadrature {
    pub fn with_tolerance(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates over `[a, b]`; either end may be infinite.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadResult> {
        self.integrate_with_breaks(f, &[a, b])
    }

    /// Integrates over `[points[0], points[last]]`, splitting at every
    /// interior point (kinks, modes). Points must be sorted.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        points: &[f64],
    ) -> Result<QuadResult> {
        if points.len() < 2 || points.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::QuadratureFailure(
                "breakpoints must be sorted, at least two".into(),
            ));
        }
        let mut points = points.to_vec();
        if points[0] == f64::NEG_INFINITY
            && points[points.len() - 1] == f64::INFINITY
            && points.len() == 2
        {
            points.insert(1, 0.0);
        }
        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        // Each piece is mapped to a finite interval in a transformed variable.
        let pieces: Vec<(f64, f64)> = points.windows(2).map(|w| (w[0], w[1])).collect();
        let eval = |piece: (f64, f64), t: f64| -> f64 {
            let (lo, hi) = piece;
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => f(t),
                (true, false) => {
                    let s = 1.0 - t;
                    f(lo + t / s) / (s * s)
                }
                (false, true) => {
                    let s = 1.0 - t;
                    f(hi - t / s) / (s * s)
                }
                (false, false) => unreachable!("split at zero above"),
            }
        };
        for (idx, &piece) in pieces.iter().enumerate() {
            let (ta, tb) = if piece.0.is_finite() && piece.1.is_finite() {
                piece
            } else {
                (0.0, 1.0)
            };
            if ta == tb {
                continue;
            }
            let g = |t: f64| eval(piece, t);
            let (value, error) = gk15(&g, ta, tb)?;
            evaluations += 15;
            heap.push((
                Segment {
                    a: ta,
                    b: tb,
                    value,
                    error,
                },
                idx,
            ));
        }
        let mut subdivisions = heap.len();
        loop {
            let total: f64 = heap.iter().map(|(s, _)| s.value).sum();
            let err: f64 = heap.iter().map(|(s, _)| s.error).sum();
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target || subdivisions >= self.max_subdivisions {
                return Ok(QuadResult {
                    value: total,
                    error: err,
                    evaluations,
                    converged: err <= target,
                });
            }
            let Some((worst, idx)) = heap.pop() else {
                return Ok(QuadResult {
                    value: 0.0,
                    error: 0.0,
                    evaluations,
                    converged: true,
                });
            };
            let piece = pieces[idx];
            let g = |t: f64| eval(piece, t);
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval cannot be split further in floating point
                heap.push((Segment { error: 0.0, ..worst }, idx));
                continue;
            }
            let (v1, e1) = gk15(&g, worst.a, mid)?;
            let (v2, e2) = gk15(&g, mid, worst.b)?;
            evaluations += 30;
            subdivisions += 1;
            heap.push((
                Segment {
                    a: worst.a,
                    b: mid,
                    value: v1,
                    error: e1,
                },
                idx,
            ));
            heap.push((
                Segment {
                    a: mid,
                    b: worst.b,
                    value: v2,
                    error: e2,
                },
                idx,
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 16.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_over_real_line() {
        let q = Quadrature::default();
        let r = q
            .integrate(|x| (-0.5 * x * x).exp(), f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        assert!((r.value - (2.0 * PI).sqrt()).abs() < 1e-10);
        assert!(r.converged);
    }

    #[test]
    fn heavy_tail_and_kink() {
        let q = Quadrature::default();
        let cauchy = q
            .integrate(|x| 1.0 / (PI * (1.0 + x * x)), f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        assert!((cauchy.value - 1.0).abs() < 1e-9);
        let laplace = q
            .integrate_with_breaks(
                |x| 0.5 * (-(x - 0.3f64).abs()).exp(),
                &[f64::NEG_INFINITY, 0.3, f64::INFINITY],
            )
            .unwrap();
        assert!((laplace.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn half_lines() {
        let q = Quadrature::default();
        let r = q.integrate(|x| (-x).exp(), 1.0, f64::INFINITY).unwrap();
        assert!((r.value - (-1.0f64).exp()).abs() < 1e-12);
        let r = q.integrate(|x| x.exp(), f64::NEG_INFINITY, 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_integrand_fails() {
        let q = Quadrature::default();
        assert!(matches!(
            q.integrate(|_| f64::NAN, 0.0, 1.0),
            Err(Error::QuadratureFailure(_))
        ));
    }
}
