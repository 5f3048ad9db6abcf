//! Inference toolkit: HAC regressions, stationarity tests, news-impact and
//! leverage curves.

pub mod adf;
pub mod dist;
pub mod kpss;
pub mod nic;
pub mod ols;
pub mod stationarity;

use alloc::string::String;

pub use adf::{adf, AdfConfig, Deterministic};
pub use kpss::{kpss_multivariate, kpss_univariate, KpssNullCache, KpssTrend};
pub use nic::{binned_nic, functional_leverage_curves, ControlSpec, LeverageCurves, NicCurve};
pub use ols::{newey_west_cov, ols_classical, ols_hac, ps_uncertainty_regression, residualize, wald_equality, RegressionReport, WaldResult};

/// How a reported p-value relates to the true one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PBound {
    Exact,
    /// True p-value is below the reported number (table edge).
    Below,
    /// True p-value is above the reported number (table edge).
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub p_bound: PBound,
    pub critical_5: f64,
    pub reject_5: bool,
    pub method: String,
    /// Bandwidth or lag order used.
    pub lags: usize,
}

impl TestResult {
    /// `"p < 0.0001"`-style rendering.
    pub fn p_display(&self) -> String {
        match self.p_bound {
            PBound::Exact => alloc::format!("{:.4}", self.p_value),
            PBound::Below => alloc::format!("p < {}", self.p_value),
            PBound::Above => alloc::format!("p > {}", self.p_value),
        }
    }
}

/// Bartlett weight `1 - ℓ/(L+1)`.
pub fn bartlett(l: usize, lags: usize) -> f64 {
    1.0 - l as f64 / (lags as f64 + 1.0)
}
