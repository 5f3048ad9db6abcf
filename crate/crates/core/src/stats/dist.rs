//! Normal and χ² tail probabilities.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;

pub const Z_975: f64 = 1.959_963_984_540_054;

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// `2(1 - Φ(|t|))`.
pub fn normal_two_sided_p(t: f64) -> f64 {
    libm::erfc(t.abs() / core::f64::consts::SQRT_2)
}

/// Survival function of χ²(1).
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((0.5 * x).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_two_sided_p(Z_975), 0.05, epsilon = 1e-12);
        assert_relative_eq!(normal_two_sided_p(-Z_975), 0.05, epsilon = 1e-12);
        // χ²(1) at 3.841458820694124 is the 95% quantile.
        assert_relative_eq!(chi2_1_sf(3.841_458_820_694_124), 0.05, epsilon = 1e-12);
        assert_eq!(chi2_1_sf(0.0), 1.0);
        assert_relative_eq!(chi2_1_sf(Z_975 * Z_975), normal_two_sided_p(Z_975), epsilon = 1e-14);
    }
}
