//! Per-hour and joint stationarity tests on a price panel.

use alloc::vec::Vec;

use super::adf::{adf_with_table, AdfConfig, QuantileTable};
use super::kpss::{kpss_multivariate, kpss_univariate, KpssNullCache, KpssTrend};
use super::TestResult;
use crate::linalg::{self, Mat};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub multivariate: TestResult,
    pub kpss: Vec<TestResult>,
    pub adf: Vec<TestResult>,
}

impl StationarityReport {
    pub fn kpss_rejections(&self) -> usize {
        self.kpss.iter().filter(|r| r.reject_5).count()
    }

    pub fn adf_rejections(&self) -> usize {
        self.adf.iter().filter(|r| r.reject_5).count()
    }

    pub fn median_kpss(&self) -> f64 {
        linalg::median(&self.kpss.iter().map(|r| r.statistic).collect::<Vec<_>>())
    }

    pub fn median_adf(&self) -> f64 {
        linalg::median(&self.adf.iter().map(|r| r.statistic).collect::<Vec<_>>())
    }

    pub fn median_adf_p(&self) -> f64 {
        linalg::median(&self.adf.iter().map(|r| r.p_value).collect::<Vec<_>>())
    }
}

pub fn first_differences(panel: &Mat) -> Mat {
    let n = panel.nrows();
    if n < 2 {
        return Mat::zeros(0, panel.ncols());
    }
    Mat::from_fn(n - 1, panel.ncols(), |t, j| panel[(t + 1, j)] - panel[(t, j)])
}

/// Multivariate KPSS on the panel plus univariate KPSS and ADF per column.
pub fn stationarity_tests(panel: &Mat, trend: KpssTrend, adf_cfg: &AdfConfig, cache: &mut KpssNullCache) -> Result<StationarityReport> {
    let table = QuantileTable::shipped();
    let multivariate = kpss_multivariate(panel, None, cache)?;
    let mut kpss = Vec::with_capacity(panel.ncols());
    let mut adf = Vec::with_capacity(panel.ncols());
    for j in 0..panel.ncols() {
        let col = linalg::column(panel, j);
        kpss.push(kpss_univariate(&col, trend, None)?);
        adf.push(adf_with_table(&col, adf_cfg, &table)?);
    }
    Ok(StationarityReport { multivariate, kpss, adf })
}
