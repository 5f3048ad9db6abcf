//! Augmented Dickey–Fuller unit-root test.
//!
//! p-values come from a table of simulated quantiles of the Dickey–Fuller
//! t-statistic (`data/adf_quantiles.csv`, regenerated by the
//! `adf_table` example).

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ols::ols_classical;
use super::{PBound, TestResult};
use crate::linalg::Mat;
use crate::{Error, Result};

const TABLE: &str = include_str!("../../data/adf_quantiles.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deterministic {
    None,
    Constant,
    ConstantTrend,
}

impl Deterministic {
    pub const ALL: [Deterministic; 3] = [Deterministic::None, Deterministic::Constant, Deterministic::ConstantTrend];

    pub fn code(self) -> &'static str {
        match self {
            Deterministic::None => "nc",
            Deterministic::Constant => "c",
            Deterministic::ConstantTrend => "ct",
        }
    }

    fn columns(self) -> usize {
        match self {
            Deterministic::None => 0,
            Deterministic::Constant => 1,
            Deterministic::ConstantTrend => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfConfig {
    /// `None` uses `floor(12 (N/100)^{1/4})`.
    pub max_lags: Option<usize>,
    pub deterministic: Deterministic,
    /// Fix the lag order instead of selecting it by AIC.
    pub fixed_lags: Option<usize>,
}

impl Default for AdfConfig {
    fn default() -> Self {
        Self { max_lags: None, deterministic: Deterministic::Constant, fixed_lags: None }
    }
}

pub fn default_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Quantile table: ascending probabilities and one quantile column per spec.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub probs: Vec<f64>,
    pub columns: [Vec<f64>; 3],
}

impl QuantileTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut probs = Vec::new();
        let mut columns: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "prob,nc,c,ct" {
                    return Err(Error::Table(format!("unexpected header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Table(format!("line {}: expected 4 fields", lineno + 1)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Table(format!("line {}: bad number '{s}'", lineno + 1)));
            probs.push(parse(fields[0])?);
            for c in 0..3 {
                columns[c].push(parse(fields[c + 1])?);
            }
        }
        if probs.len() < 2 {
            return Err(Error::Table("quantile table has fewer than two rows".to_string()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&probs) || !columns.iter().all(|c| increasing(c)) {
            return Err(Error::Table("quantile table is not strictly increasing".to_string()));
        }
        Ok(Self { probs, columns })
    }

    pub fn shipped() -> Self {
        Self::parse(TABLE).expect("shipped ADF quantile table is well-formed")
    }

    fn column(&self, det: Deterministic) -> &[f64] {
        &self.columns[det.columns()]
    }

    /// Lower-tail probability `P(τ ≤ stat)` by linear interpolation.
    pub fn p_value(&self, det: Deterministic, stat: f64) -> (f64, PBound) {
        let q = self.column(det);
        let last = q.len() - 1;
        if stat < q[0] {
            return (self.probs[0], PBound::Below);
        }
        if stat > q[last] {
            return (self.probs[last], PBound::Above);
        }
        let i = q.partition_point(|v| *v <= stat).clamp(1, last);
        let f = (stat - q[i - 1]) / (q[i] - q[i - 1]);
        (self.probs[i - 1] + f * (self.probs[i] - self.probs[i - 1]), PBound::Exact)
    }

    pub fn quantile(&self, det: Deterministic, prob: f64) -> f64 {
        let q = self.column(det);
        let p = &self.probs;
        let i = p.partition_point(|v| *v <= prob).clamp(1, p.len() - 1);
        let f = (prob - p[i - 1]) / (p[i] - p[i - 1]);
        q[i - 1] + f * (q[i] - q[i - 1])
    }
}

/// Fit of the ADF regression with `p` lagged differences over rows `t ≥ start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfFit {
    pub t_stat: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub n_params: usize,
}

/// `Δy_t` on deterministics, `y_{t-1}` and `Δy_{t-1..t-p}` for `t = start..n-1`
/// (`start ≥ p + 1`).
pub fn adf_regression(y: &[f64], p: usize, det: Deterministic, start: usize) -> Result<AdfFit> {
    let n = y.len();
    let start = start.max(p + 1);
    if n <= start + 1 {
        return Err(Error::TooShort { needed: start + 2, have: n });
    }
    let rows = n - start;
    let dc = det.columns();
    let k = dc + 1 + p;
    let mut names: Vec<String> = Vec::with_capacity(k);
    if dc >= 1 {
        names.push("const".into());
    }
    if dc == 2 {
        names.push("trend".into());
    }
    names.push("y_lag".into());
    names.extend((1..=p).map(|i| format!("dy_lag{i}")));
    let dy = |t: usize| y[t] - y[t - 1];
    let x = Mat::from_fn(rows, k, |r, c| {
        let t = start + r;
        if c < dc {
            if c == 0 {
                1.0
            } else {
                t as f64
            }
        } else if c == dc {
            y[t - 1]
        } else {
            dy(t - (c - dc))
        }
    });
    let resp: Vec<f64> = (start..n).map(dy).collect();
    let rep = ols_classical(&resp, &x, Some(&names))?;
    let rss = rep.residuals.iter().map(|r| r * r).sum();
    Ok(AdfFit { t_stat: rep.t_stats[dc], rss, n_obs: rows, n_params: k })
}

pub fn adf(y: &[f64], cfg: &AdfConfig) -> Result<TestResult> {
    adf_with_table(y, cfg, &QuantileTable::shipped())
}

pub fn adf_with_table(y: &[f64], cfg: &AdfConfig, table: &QuantileTable) -> Result<TestResult> {
    let n = y.len();
    let max_lags = cfg.fixed_lags.unwrap_or_else(|| cfg.max_lags.unwrap_or_else(|| default_max_lags(n)));
    if n <= max_lags + 10 {
        return Err(Error::TooShort { needed: max_lags + 11, have: n });
    }
    let det = cfg.deterministic;
    let p = match cfg.fixed_lags {
        Some(p) => p,
        None => {
            // AIC on the common sample t ≥ max_lags + 1.
            let mut best = (f64::INFINITY, 0);
            for p in 0..=max_lags {
                let f = adf_regression(y, p, det, max_lags + 1)?;
                let m = f.n_obs as f64;
                let aic = m * (f.rss / m).ln() + 2.0 * f.n_params as f64;
                if aic < best.0 {
                    best = (aic, p);
                }
            }
            best.1
        }
    };
    let fit = adf_regression(y, p, det, p + 1)?;
    let (p_value, p_bound) = table.p_value(det, fit.t_stat);
    let critical_5 = table.quantile(det, 0.05);
    Ok(TestResult {
        statistic: fit.t_stat,
        p_value,
        p_bound,
        critical_5,
        reject_5: fit.t_stat < critical_5,
        method: format!("ADF ({}, AIC lags ≤ {max_lags})", det.code()),
        lags: p,
    })
}
