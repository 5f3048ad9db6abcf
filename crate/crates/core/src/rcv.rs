//! Realized covariation over windows of daily increments.
//!
//! A window of `w` increments ending on date `j` gives
//! `Σ̂_j = (1/(δ w)) Σ_ℓ v_ℓ v_ℓᵀ` where `v_ℓ` are either raw increments
//! `Δ_n X̃` (naive) or plug-in residuals `ε̂_n` (propagation-adjusted).

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;
use chrono::NaiveDate;

use crate::linalg::{self, Mat};
use crate::semigroup::ResidualPanel;
use crate::{Error, Result, DAY};

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_DELTA: f64 = DAY;

#[derive(Debug, Clone, PartialEq)]
pub struct RcvSeries {
    /// Window-end dates.
    pub dates: Vec<NaiveDate>,
    pub mats: Vec<Mat>,
    pub window: usize,
    pub delta: f64,
    pub adjusted: bool,
    pub rolling: bool,
}

impl RcvSeries {
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    /// `windows × d` matrix of the diagonals (hourly integrated variances).
    pub fn diagonals(&self) -> Mat {
        let d = self.dim();
        Mat::from_fn(self.len(), d, |t, h| self.mats[t][(h, h)])
    }

    /// Natural log of the diagonals; non-positive entries map to NaN.
    pub fn log_diagonals(&self) -> Mat {
        self.diagonals().map(|v| if v > 0.0 { v.ln() } else { f64::NAN })
    }
}

/// Number of windows produced from `rows` increments.
pub fn window_count(rows: usize, w: usize, rolling: bool) -> usize {
    if w == 0 || rows < w {
        return 0;
    }
    if rolling {
        rows - w + 1
    } else {
        rows / w
    }
}

fn rcv_rows(rows: &Mat, dates: &[NaiveDate], w: usize, delta: f64, rolling: bool, adjusted: bool) -> Result<RcvSeries> {
    if w < 1 {
        return Err(Error::InvalidParameter("window length must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    if dates.len() != rows.nrows() {
        return Err(Error::Dimension(format!("{} dates for {} increments", dates.len(), rows.nrows())));
    }
    let n = rows.nrows();
    if n < w {
        return Err(Error::TooShort { needed: w, have: n });
    }
    let d = rows.ncols();
    let step = if rolling { 1 } else { w };
    let count = window_count(n, w, rolling);
    let mut mats = Vec::with_capacity(count);
    let mut ends = Vec::with_capacity(count);
    let mut v = alloc::vec![0.0; d];
    for j in 0..count {
        let start = j * step;
        let mut acc = Mat::zeros(d, d);
        for r in start..start + w {
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = rows[(r, c)];
            }
            linalg::add_outer(&mut acc, &v, 1.0);
        }
        linalg::symmetrize(&mut acc);
        acc /= delta * w as f64;
        mats.push(acc);
        ends.push(dates[start + w - 1]);
    }
    Ok(RcvSeries { dates: ends, mats, window: w, delta, adjusted, rolling })
}

/// Naive RCV from increment rows `Δ_n X̃` dated by their end day.
pub fn rcv_naive(diffs: &Mat, dates: &[NaiveDate], w: usize, delta: f64, rolling: bool) -> Result<RcvSeries> {
    rcv_rows(diffs, dates, w, delta, rolling, false)
}

/// Propagation-adjusted RCV from plug-in residuals.
pub fn rcv_adjusted(residuals: &ResidualPanel, w: usize, delta: f64, rolling: bool) -> Result<RcvSeries> {
    rcv_rows(&residuals.eps, &residuals.dates, w, delta, rolling, true)
}

/// First differences of consecutive rows, dated by the later row.
pub fn differences(rows: &Mat, dates: &[NaiveDate]) -> (Vec<NaiveDate>, Mat) {
    let n = rows.nrows();
    if n < 2 {
        return (Vec::new(), Mat::zeros(0, rows.ncols()));
    }
    let diffs = Mat::from_fn(n - 1, rows.ncols(), |r, c| rows[(r + 1, c)] - rows[(r, c)]);
    (dates[1..].to_vec(), diffs)
}

pub fn long_span_average(series: &RcvSeries) -> Result<Mat> {
    let first = series.mats.first().ok_or(Error::TooShort { needed: 1, have: 0 })?;
    let mut acc = Mat::zeros(first.nrows(), first.ncols());
    for m in &series.mats {
        acc += m;
    }
    acc /= series.mats.len() as f64;
    Ok(acc)
}

/// `Q⁻¹ M Q⁻¹` with `Q = diag(M)^{1/2}`.
pub fn realized_correlation(m: &Mat) -> Result<Mat> {
    let d = m.nrows();
    let mut q = alloc::vec![0.0; d];
    for (i, qi) in q.iter_mut().enumerate() {
        let v = m[(i, i)];
        if !(v > 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
        *qi = v.sqrt();
    }
    let mut rho = Mat::from_fn(d, d, |i, j| m[(i, j)] / (q[i] * q[j]));
    linalg::symmetrize(&mut rho);
    for i in 0..d {
        rho[(i, i)] = 1.0;
    }
    Ok(rho)
}

/// Realized variance of the weighted average price, `wᵀ Σ̂_j w`, per window.
pub fn rv_average_price(series: &RcvSeries, weights: &[f64]) -> Result<Vec<f64>> {
    let d = series.dim();
    if weights.len() != d {
        return Err(Error::Dimension(format!("{} weights for dimension {d}", weights.len())));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    Ok(series
        .mats
        .iter()
        .map(|m| {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += weights[i] * m[(i, j)] * weights[j];
                }
            }
            acc
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub ps_total: f64,
    pub ps_per_hour: Vec<f64>,
    /// Annualized propagation level `(1/(δN)) Σ (B̂_n^{(h)})²` per period.
    pub propagation_level: Vec<f64>,
    /// Annualized innovation level `(1/(δN)) Σ (ε̂_n^{(h)})²` per period.
    pub innovation_level: Vec<f64>,
}

pub fn propagation_share(residuals: &ResidualPanel, delta: f64) -> Result<PropagationReport> {
    let n = residuals.len();
    let d = residuals.eps.ncols();
    if n == 0 {
        return Err(Error::ZeroVariation);
    }
    let inc = residuals.increments();
    let mut prop = alloc::vec![0.0; d];
    let mut innov = alloc::vec![0.0; d];
    let mut total = alloc::vec![0.0; d];
    for r in 0..n {
        for h in 0..d {
            prop[h] += residuals.bhat[(r, h)] * residuals.bhat[(r, h)];
            innov[h] += residuals.eps[(r, h)] * residuals.eps[(r, h)];
            total[h] += inc[(r, h)] * inc[(r, h)];
        }
    }
    let grand: f64 = total.iter().sum();
    if !(grand > 0.0) {
        return Err(Error::ZeroVariation);
    }
    let ps_total = prop.iter().sum::<f64>() / grand;
    let ps_per_hour = prop.iter().zip(&total).map(|(p, t)| if *t > 0.0 { p / t } else { 0.0 }).collect();
    let scale = 1.0 / (delta * n as f64);
    Ok(PropagationReport {
        ps_total,
        ps_per_hour,
        propagation_level: prop.iter().map(|v| v * scale).collect(),
        innovation_level: innov.iter().map(|v| v * scale).collect(),
    })
}

/// Long-span propagation covariance `(1/(δN)) Σ B̂ B̂ᵀ` and the symmetric cross
/// term `(1/(δN)) Σ (B̂ ε̂ᵀ + ε̂ B̂ᵀ)`.
pub fn propagation_moments(residuals: &ResidualPanel, delta: f64) -> (Mat, Mat) {
    let n = residuals.len();
    let d = residuals.eps.ncols();
    let mut bb = Mat::zeros(d, d);
    let mut cross = Mat::zeros(d, d);
    for r in 0..n {
        for i in 0..d {
            for j in 0..d {
                let b_i = residuals.bhat[(r, i)];
                let e_i = residuals.eps[(r, i)];
                bb[(i, j)] += b_i * residuals.bhat[(r, j)];
                cross[(i, j)] += b_i * residuals.eps[(r, j)] + e_i * residuals.bhat[(r, j)];
            }
        }
    }
    let scale = 1.0 / (delta * n.max(1) as f64);
    (bb * scale, cross * scale)
}
