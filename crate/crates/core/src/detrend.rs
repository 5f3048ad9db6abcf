//! Causal de-trending by kernel-weighted local-linear regression.
//!
//! For each date `n` the trailing window `k < n` is fitted by weighted least
//! squares on an intercept, the time offset `k - n` and (optionally) six
//! day-of-week dummies with Monday as reference. The fitted mean at `n` is
//! the intercept plus date `n`'s own dummy; the slope term vanishes at `k = n`.
//! The squared-norm objective separates across delivery periods, so a single
//! factorization per date serves every column.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;
use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::linalg::Mat;
use crate::panel::PricePanel;
use crate::{Error, Result, DAY};

pub const DEFAULT_BANDWIDTH_DAYS: f64 = 90.0;

/// Epanechnikov kernel `(3/4)(1 - u²)` on `[-1, 1]`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetrendConfig {
    pub bandwidth_days: f64,
    pub dow_dummies: bool,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self { bandwidth_days: DEFAULT_BANDWIDTH_DAYS, dow_dummies: true }
    }
}

impl DetrendConfig {
    /// Bandwidth in year units (90 days ≈ 0.246).
    pub fn bandwidth_years(&self) -> f64 {
        self.bandwidth_days * DAY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemeanedPanel {
    pub dates: Vec<NaiveDate>,
    /// Residuals `X̃_n - m̂_n`; zero on invalid rows.
    pub values: Mat,
    /// Fitted mean path; zero on invalid rows.
    pub mhat: Mat,
    pub valid: Vec<bool>,
    pub valid_from: usize,
    pub config: DetrendConfig,
}

impl DemeanedPanel {
    /// Start of the trailing block of consecutive valid rows.
    pub fn span_start(&self) -> usize {
        let mut start = self.valid.len();
        while start > 0 && self.valid[start - 1] {
            start -= 1;
        }
        start
    }

    /// Residual rows of the trailing valid block together with their dates.
    pub fn valid_rows(&self) -> (Vec<NaiveDate>, Mat) {
        let s = self.span_start();
        let n = self.values.nrows() - s;
        (self.dates[s..].to_vec(), self.values.rows(s, n).into_owned())
    }
}

fn regressor_count(cfg: &DetrendConfig) -> usize {
    if cfg.dow_dummies {
        8
    } else {
        2
    }
}

fn design_row(offset: f64, weekday: u8, cfg: &DetrendConfig, out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = offset;
    if cfg.dow_dummies {
        for (j, slot) in out[2..8].iter_mut().enumerate() {
            *slot = if weekday as usize == j + 1 { 1.0 } else { 0.0 };
        }
    }
}

/// De-trend a raw value matrix whose rows carry the given weekdays (Monday = 0).
pub fn local_linear_demean_values(values: &Mat, weekdays: &[u8], cfg: &DetrendConfig) -> Result<(Mat, Mat, Vec<bool>, usize)> {
    if !(cfg.bandwidth_days > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    let n_rows = values.nrows();
    let d = values.ncols();
    if weekdays.len() != n_rows {
        return Err(Error::Dimension("weekday vector length differs from panel length".into()));
    }
    let valid_from = cfg.bandwidth_days.ceil() as usize;
    if n_rows <= valid_from {
        return Err(Error::TooShort { needed: valid_from + 1, have: n_rows });
    }
    let p = regressor_count(cfg);
    let mut resid = Mat::zeros(n_rows, d);
    let mut mhat = Mat::zeros(n_rows, d);
    let mut valid = vec![false; n_rows];
    let mut zrow = vec![0.0; p];

    for n in valid_from..n_rows {
        let window: Vec<(usize, f64)> = (0..n)
            .rev()
            .map(|k| (k, epanechnikov((n - k) as f64 / cfg.bandwidth_days)))
            .take_while(|&(_, w)| w > 0.0)
            .collect();
        if window.len() < p {
            continue;
        }
        let m = window.len();
        let mut z = DMatrix::<f64>::zeros(m, p);
        let mut y = DMatrix::<f64>::zeros(m, d);
        for (r, &(k, w)) in window.iter().enumerate() {
            let sw = w.sqrt();
            design_row(k as f64 - n as f64, weekdays[k], cfg, &mut zrow);
            for c in 0..p {
                z[(r, c)] = sw * zrow[c];
            }
            for c in 0..d {
                y[(r, c)] = sw * values[(k, c)];
            }
        }
        let qr = z.qr();
        let rmat = qr.r();
        let scale = (0..p).map(|i| rmat[(i, i)].abs()).fold(0.0, f64::max);
        if (0..p).any(|i| rmat[(i, i)].abs() <= 1e-10 * scale) {
            continue;
        }
        let qty = qr.q().transpose() * y;
        let beta = match rmat.solve_upper_triangular(&qty) {
            Some(b) => b,
            None => continue,
        };
        design_row(0.0, weekdays[n], cfg, &mut zrow);
        for c in 0..d {
            let fit: f64 = (0..p).map(|j| zrow[j] * beta[(j, c)]).sum();
            mhat[(n, c)] = fit;
            resid[(n, c)] = values[(n, c)] - fit;
        }
        valid[n] = true;
    }
    Ok((resid, mhat, valid, valid_from))
}

pub fn local_linear_demean(panel: &PricePanel, cfg: &DetrendConfig) -> Result<DemeanedPanel> {
    let (values, mhat, valid, valid_from) = local_linear_demean_values(panel.values(), &panel.weekdays(), cfg)?;
    Ok(DemeanedPanel { dates: panel.dates().to_vec(), values, mhat, valid, valid_from, config: *cfg })
}
