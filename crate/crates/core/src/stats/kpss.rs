//! KPSS stationarity tests, univariate and the multivariate Nyblom–Harvey form.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{bartlett, PBound, TestResult};
use crate::linalg::{self, Mat};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpssTrend {
    /// Level-stationarity null.
    Level,
    /// Trend-stationarity null.
    Trend,
}

const ALPHAS: [f64; 4] = [0.10, 0.05, 0.025, 0.01];
const CRIT_LEVEL: [f64; 4] = [0.347, 0.463, 0.574, 0.739];
const CRIT_TREND: [f64; 4] = [0.119, 0.146, 0.176, 0.216];

/// Default univariate bandwidth `floor(4 (N/100)^{1/4})`.
pub fn default_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Default multivariate bandwidth `floor(4 (N/100)^{2/9})`.
pub fn default_bandwidth_multivariate(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

fn long_run_variance(e: &[f64], lags: usize) -> f64 {
    let n = e.len();
    let gamma = |l: usize| e[l..].iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut s2 = gamma(0);
    for l in 1..=lags.min(n - 1) {
        s2 += 2.0 * bartlett(l, lags) * gamma(l);
    }
    s2
}

fn detrend_residuals(x: &[f64], trend: KpssTrend) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = linalg::mean(x);
    match trend {
        KpssTrend::Level => x.iter().map(|v| v - mean).collect(),
        KpssTrend::Trend => {
            let tbar = (n - 1.0) / 2.0;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let dt = t as f64 - tbar;
                sxy += dt * (v - mean);
                sxx += dt * dt;
            }
            let b = sxy / sxx;
            x.iter().enumerate().map(|(t, v)| v - mean - b * (t as f64 - tbar)).collect()
        }
    }
}

/// Upper-tail p-value by linear interpolation in a critical-value table.
fn table_p(stat: f64, crit: &[f64; 4]) -> (f64, PBound) {
    if stat < crit[0] {
        return (ALPHAS[0], PBound::Above);
    }
    if stat > crit[3] {
        return (ALPHAS[3], PBound::Below);
    }
    for i in 0..3 {
        if stat <= crit[i + 1] {
            let f = (stat - crit[i]) / (crit[i + 1] - crit[i]);
            return (ALPHAS[i] + f * (ALPHAS[i + 1] - ALPHAS[i]), PBound::Exact);
        }
    }
    (ALPHAS[3], PBound::Exact)
}

/// Univariate KPSS. `bandwidth = None` uses [`default_bandwidth`].
pub fn kpss_univariate(x: &[f64], trend: KpssTrend, bandwidth: Option<usize>) -> Result<TestResult> {
    let n = x.len();
    if n <= 10 {
        return Err(Error::TooShort { needed: 11, have: n });
    }
    let lags = bandwidth.unwrap_or_else(|| default_bandwidth(n));
    let e = detrend_residuals(x, trend);
    let s2 = long_run_variance(&e, lags);
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    if !(s2 > 1e-24 * scale * scale) {
        return Err(Error::Degenerate("constant series has zero long-run variance".to_string()));
    }
    let mut partial = 0.0;
    let mut ss = 0.0;
    for v in &e {
        partial += v;
        ss += partial * partial;
    }
    let statistic = ss / ((n * n) as f64 * s2);
    let crit = match trend {
        KpssTrend::Level => &CRIT_LEVEL,
        KpssTrend::Trend => &CRIT_TREND,
    };
    let (p_value, p_bound) = table_p(statistic, crit);
    Ok(TestResult {
        statistic,
        p_value,
        p_bound,
        critical_5: crit[1],
        reject_5: statistic > crit[1],
        method: format!("KPSS ({})", if trend == KpssTrend::Level { "level" } else { "trend" }),
        lags,
    })
}

/// Number of series terms kept exactly in the null simulation.
pub const NULL_TERMS: usize = 50;
pub const DEFAULT_NULL_DRAWS: usize = 100_000;
const NULL_SEED: u64 = 0x6b70_7373;

/// Simulated null distributions of the multivariate statistic, keyed by dimension.
///
/// The limit is `Σ_k χ²_d,k / (k²π²)`: the first [`NULL_TERMS`] terms are
/// drawn, the remainder replaced by its mean.
#[derive(Debug, Clone)]
pub struct KpssNullCache {
    draws: usize,
    sorted: BTreeMap<usize, Vec<f64>>,
}

impl Default for KpssNullCache {
    fn default() -> Self {
        Self::new(DEFAULT_NULL_DRAWS)
    }
}

impl KpssNullCache {
    pub fn new(draws: usize) -> Self {
        Self { draws: draws.max(1), sorted: BTreeMap::new() }
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn distribution(&mut self, d: usize) -> &[f64] {
        let draws = self.draws;
        self.sorted.entry(d).or_insert_with(|| simulate_null(d, draws))
    }

    /// `P(stat ≥ x)` under the null for dimension `d`.
    pub fn p_value(&mut self, d: usize, x: f64) -> f64 {
        let dist = self.distribution(d);
        let below = dist.partition_point(|v| *v < x);
        (dist.len() - below) as f64 / dist.len() as f64
    }

    /// Upper `alpha` quantile.
    pub fn critical(&mut self, d: usize, alpha: f64) -> f64 {
        let dist = self.distribution(d);
        let idx = (((1.0 - alpha) * dist.len() as f64).ceil() as usize).min(dist.len()) - 1;
        dist[idx]
    }
}

fn simulate_null(d: usize, draws: usize) -> Vec<f64> {
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    let head: f64 = (1..=NULL_TERMS).map(|k| 1.0 / ((k * k) as f64 * pi2)).sum();
    let tail = d as f64 * (1.0 / 6.0 - head);
    let mut rng = rng::substream(NULL_SEED, d as u64);
    let mut out: Vec<f64> = (0..draws)
        .map(|_| {
            let mut s = tail;
            for k in 1..=NULL_TERMS {
                let mut chi = 0.0;
                for _ in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    chi += z * z;
                }
                s += chi / ((k * k) as f64 * pi2);
            }
            s
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Multivariate KPSS on a `N × d` panel: `(1/N²) Σ_t S_tᵀ Ω̂⁻¹ S_t` with Bartlett
/// long-run covariance `Ω̂`.
pub fn kpss_multivariate(panel: &Mat, bandwidth: Option<usize>, cache: &mut KpssNullCache) -> Result<TestResult> {
    let n = panel.nrows();
    let d = panel.ncols();
    if n <= d || d == 0 {
        return Err(Error::TooShort { needed: d + 1, have: n });
    }
    let lags = bandwidth.unwrap_or_else(|| default_bandwidth_multivariate(n));
    let means = panel.row_mean();
    let e = Mat::from_fn(n, d, |t, j| panel[(t, j)] - means[j]);
    let mut omega = (e.transpose() * &e) / n as f64;
    for l in 1..=lags.min(n - 1) {
        let g = (e.rows(l, n - l).transpose() * e.rows(0, n - l)) / n as f64;
        omega += (&g + g.transpose()) * bartlett(l, lags);
    }
    linalg::symmetrize(&mut omega);
    if linalg::sym_condition(&omega) > 1e12 {
        return Err(Error::SingularLongRun);
    }
    let chol = omega.cholesky().ok_or(Error::SingularLongRun)?;
    let mut partial = Mat::zeros(d, 1);
    let mut stat = 0.0;
    for t in 0..n {
        for j in 0..d {
            partial[(j, 0)] += e[(t, j)];
        }
        let sol = chol.solve(&partial);
        stat += partial.dot(&sol);
    }
    let statistic = stat / (n * n) as f64;
    let p_value = cache.p_value(d, statistic);
    let resolution = 1.0 / cache.draws() as f64;
    let (p_value, p_bound) = if p_value == 0.0 { (resolution, PBound::Below) } else { (p_value, PBound::Exact) };
    Ok(TestResult {
        statistic,
        p_value,
        p_bound,
        critical_5: cache.critical(d, 0.05),
        reject_5: p_value < 0.05,
        method: format!("multivariate KPSS (d = {d})"),
        lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = seeded(seed);
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn bandwidths() {
        assert_eq!(default_bandwidth(100), 4);
        assert_eq!(default_bandwidth(2000), 8);
        assert_eq!(default_bandwidth_multivariate(100), 4);
    }

    #[test]
    fn interpolated_p_values() {
        assert_eq!(table_p(0.463, &CRIT_LEVEL), (0.05, PBound::Exact));
        assert_eq!(table_p(0.1, &CRIT_LEVEL).1, PBound::Above);
        assert_eq!(table_p(2.0, &CRIT_LEVEL).1, PBound::Below);
        let (p, _) = table_p(0.405, &CRIT_LEVEL);
        assert!(p > 0.05 && p < 0.10);
    }

    #[test]
    fn constant_series_errors() {
        assert!(matches!(kpss_univariate(&[3.0; 50], KpssTrend::Level, None), Err(Error::Degenerate(_))));
        assert!(kpss_univariate(&[1.0; 5], KpssTrend::Level, None).is_err());
    }

    #[test]
    fn hand_statistic_zero_lags() {
        let x = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        // Partial sums alternate 1,0,...: Σ S² = 6, s² = 1, N² = 144.
        let r = kpss_univariate(&x, KpssTrend::Level, Some(0)).unwrap();
        assert_relative_eq!(r.statistic, 6.0 / 144.0, epsilon = 1e-15);
        assert!(!r.reject_5);
    }

    #[test]
    fn random_walk_rejects() {
        let mut acc = 0.0;
        let rw: Vec<f64> = normals(2000, 5).into_iter().map(|z| { acc += z; acc }).collect();
        assert!(kpss_univariate(&rw, KpssTrend::Level, None).unwrap().reject_5);
        assert!(kpss_univariate(&rw, KpssTrend::Trend, None).unwrap().reject_5);
    }

    #[test]
    fn null_distribution_moments() {
        // E = d/6 and the 5% critical value for d = 1 is about 0.461.
        let mut cache = KpssNullCache::new(100_000);
        let dist = cache.distribution(2).to_vec();
        assert_relative_eq!(linalg::mean(&dist), 2.0 / 6.0, max_relative = 0.01);
        assert_relative_eq!(cache.critical(1, 0.05), 0.461, max_relative = 0.02);
        assert!(cache.p_value(1, 10.0) == 0.0);
        assert_eq!(cache.p_value(1, -1.0), 1.0);
    }

    #[test]
    fn multivariate_cases() {
        let mut cache = KpssNullCache::new(20_000);
        let z = normals(1500, 9);
        let iid = Mat::from_fn(500, 3, |t, j| z[t * 3 + j]);
        let r = kpss_multivariate(&iid, None, &mut cache).unwrap();
        assert!(r.statistic > 0.0);
        let mut rw = iid.clone();
        for t in 1..500 {
            for j in 0..3 {
                rw[(t, j)] += rw[(t - 1, j)];
            }
        }
        assert!(kpss_multivariate(&rw, None, &mut cache).unwrap().reject_5);
        let mut dup = iid.clone();
        let c0 = dup.column(0).clone_owned();
        dup.column_mut(2).copy_from(&c0);
        assert_eq!(kpss_multivariate(&dup, None, &mut cache), Err(Error::SingularLongRun));
    }
}
