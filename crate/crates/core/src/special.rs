use std::f64::consts::{LN_2, PI, SQRT_2};

/// `log Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `½ log(2π)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    -0.5 * u * u - LN_SQRT_2PI - sd.ln()
}

/// `log Φ(x)`, accurate far into the lower tail.
pub fn log_ndtr(x: f64) -> f64 {
    if x > 6.0 {
        // Φ(x) = 1 - Φ(-x), Φ(-x) tiny
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * libm::erfc(-x / SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let x2 = x * x;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / x2;
            series += term;
        }
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `φ(x) / Φ(x)`, the derivative of [`log_ndtr`].
pub fn inv_mills(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI - log_ndtr(x)).exp()
}

/// `log(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log` of the surface area of the unit sphere in `d` dimensions.
pub fn ln_unit_sphere_area(d: usize) -> f64 {
    LN_2 + 0.5 * d as f64 * PI.ln() - ln_gamma(0.5 * d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_ndtr_matches_direct_evaluation_and_tail() {
        assert!((log_ndtr(0.0) - 0.5f64.ln()).abs() < 1e-15);
        let err = log_ndtr(1.0) - 0.841_344_746_068_542_9f64.ln();
        assert!(err.abs() < 1e-14, "{err:e}");
        // Continuity across the branch points.
        for &x in &[-20.0f64, 6.0] {
            let below = log_ndtr(x - 1e-9);
            let above = log_ndtr(x + 1e-9);
            assert!((below - above).abs() < 1e-6 * below.abs().max(1e-12), "x={x}");
        }
        // log Φ(-40) ≈ -804.608 (tabulated)
        assert!((log_ndtr(-40.0) - (-804.608_442_013_754)).abs() < 1e-6);
        assert!(log_ndtr(-1e3).is_finite());
    }

    #[test]
    fn inv_mills_is_derivative_of_log_ndtr() {
        for &x in &[-30.0, -5.0, -1.0, 0.0, 2.0, 8.0] {
            let h = 1e-5 * (1.0 + f64::abs(x));
            let fd = (log_ndtr(x + h) - log_ndtr(x - h)) / (2.0 * h);
            assert!((fd - inv_mills(x)).abs() <= 1e-6 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn sphere_area_small_dimensions() {
        assert!((ln_unit_sphere_area(2) - (2.0 * PI).ln()).abs() < 1e-14);
        assert!((ln_unit_sphere_area(3) - (4.0 * PI).ln()).abs() < 1e-14);
    }
}
