//! Delivery partitions, the observed price panel and the local-average
//! observation functionals.
//!
//! The day is mapped onto the circle `[0, 2π)`. A partition
//! `0 = h₀ < h₁ < … < h_d = 2π` defines `d` delivery periods, and the observed
//! price of period `i` is the average of the latent curve over `[h_{i-1}, h_i)`.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use chrono::{Datelike, NaiveDate, NaiveDateTime};
use core::f64::consts::TAU;

use crate::linalg::Mat;
use crate::{Error, Result};

const BREAKPOINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryPartition {
    breakpoints: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl DeliveryPartition {
    pub fn new(breakpoints: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Partition("need at least one bin".into()));
        }
        if breakpoints[0].abs() > BREAKPOINT_TOL {
            return Err(Error::Partition(format!("first breakpoint is {} (expected 0)", breakpoints[0])));
        }
        let last = *breakpoints.last().unwrap();
        if (last - TAU).abs() > BREAKPOINT_TOL {
            return Err(Error::Partition(format!("last breakpoint is {last} (expected 2π)")));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Partition(format!("breakpoints not strictly increasing at {}", w[1])));
        }
        if let Some(l) = &labels {
            if l.len() != breakpoints.len() - 1 {
                return Err(Error::Partition(format!(
                    "{} labels for {} bins",
                    l.len(),
                    breakpoints.len() - 1
                )));
            }
        }
        let mut breakpoints = breakpoints;
        breakpoints[0] = 0.0;
        *breakpoints.last_mut().unwrap() = TAU;
        Ok(Self { breakpoints, labels })
    }

    /// `d` equally wide delivery periods.
    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Partition("need at least one bin".into()));
        }
        let bp = (0..=d).map(|i| TAU * i as f64 / d as f64).collect();
        Self::new(bp, None)
    }

    pub fn bins(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Column name of bin `i` (`h01`, `h02`, … unless labels were supplied).
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("h{:02}", i + 1),
        }
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn widths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_uniform(&self) -> bool {
        let w = TAU / self.bins() as f64;
        self.widths().iter().all(|x| (x - w).abs() < BREAKPOINT_TOL)
    }

    /// Bin containing the angle `theta` (taken modulo 2π).
    pub fn bin_of(&self, theta: f64) -> usize {
        let r = theta % TAU;
        let t = if r < 0.0 { r + TAU } else { r };
        match self.breakpoints[1..].iter().position(|&b| t < b - BREAKPOINT_TOL) {
            Some(i) => i,
            None => self.bins() - 1,
        }
    }

    /// Weights of the daily average price: bin widths over 2π.
    pub fn average_weights(&self) -> Vec<f64> {
        self.widths().into_iter().map(|w| w / TAU).collect()
    }
}

/// Angle on the circle of a local time of day.
pub fn time_to_angle(hours: u32, minutes: u32) -> f64 {
    TAU * (hours * 60 + minutes) as f64 / 1440.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditAction {
    /// Missing period on a short (23-hour) day filled with the mean of its neighbours.
    Imputed { bin: usize, value: f64 },
    /// Two overlapping periods on a long (25-hour) day merged into their average.
    Merged { bin: usize, first: f64, second: f64 },
    /// A (zone, timestamp) pair appeared more than once; the last value was kept.
    Duplicate { timestamp: NaiveDateTime, dropped: f64, kept: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub date: NaiveDate,
    pub action: AuditAction,
}

/// Daily × delivery-period grid of observed prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    values: Mat,
    partition: DeliveryPartition,
    zone: String,
    dst_log: Vec<AuditRecord>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        values: Mat,
        partition: DeliveryPartition,
        zone: impl Into<String>,
        dst_log: Vec<AuditRecord>,
    ) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::Dimension(format!(
                "{} dates for {} rows",
                dates.len(),
                values.nrows()
            )));
        }
        if values.ncols() != partition.bins() {
            return Err(Error::Dimension(format!(
                "{} columns for a {}-bin partition",
                values.ncols(),
                partition.bins()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0].succ_opt() != Some(w[1])) {
            return Err(Error::InvalidParameter(format!("dates not consecutive: {} -> {}", w[0], w[1])));
        }
        if let Some((i, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let r = i % values.nrows();
            return Err(Error::InvalidParameter(format!("non-finite price on {}", dates[r])));
        }
        Ok(Self { dates, values, partition, zone: zone.into(), dst_log })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn partition(&self) -> &DeliveryPartition {
        &self.partition
    }

    pub fn zone(&self) -> &str {
        &self.zone
    }

    pub fn dst_log(&self) -> &[AuditRecord] {
        &self.dst_log
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.partition.bins()
    }

    /// Day of week per row, Monday = 0.
    pub fn weekdays(&self) -> Vec<u8> {
        self.dates.iter().map(|d| d.weekday().num_days_from_monday() as u8).collect()
    }

    /// Width-weighted average price per day.
    pub fn daily_average(&self) -> Vec<f64> {
        let w = self.partition.average_weights();
        (0..self.len())
            .map(|r| (0..self.bins()).map(|j| w[j] * self.values[(r, j)]).sum())
            .collect()
    }

    /// Keep rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::InvalidParameter(format!("row range {start}..{end} out of bounds")));
        }
        let values = self.values.rows(start, end - start).into_owned();
        let dates = self.dates[start..end].to_vec();
        let log = self
            .dst_log
            .iter()
            .filter(|r| dates.first().is_some_and(|d| r.date >= *d) && dates.last().is_some_and(|d| r.date <= *d))
            .cloned()
            .collect();
        Self::new(dates, values, self.partition.clone(), self.zone.clone(), log)
    }

    pub fn with_zone(mut self, zone: &str) -> Self {
        self.zone = zone.to_string();
        self
    }
}

/// The observation operator discretized on a uniform fine grid of the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights {
    /// `d × grid` local-average weights; each row sums to one.
    pub matrix: Mat,
    /// Weights of the daily average functional; proportional to bin widths.
    pub avg_weights: Vec<f64>,
}

/// Fine-grid default: quarter-hourly cells.
pub const DEFAULT_FINE_GRID: usize = 96;

fn grid_index(b: f64, grid: usize) -> Result<usize> {
    let x = b / TAU * grid as f64;
    let k = x.round();
    if (x - k).abs() > 1e-6 {
        return Err(Error::GridMismatch { value: b, grid });
    }
    Ok(k as usize)
}

pub fn observation_weights(partition: &DeliveryPartition, fine_grid_size: usize) -> Result<ObservationWeights> {
    let d = partition.bins();
    if fine_grid_size < d {
        return Err(Error::InvalidParameter(format!(
            "fine grid of {fine_grid_size} cells is coarser than {d} bins"
        )));
    }
    let nodes = partition
        .breakpoints()
        .iter()
        .map(|&b| grid_index(b, fine_grid_size))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = Mat::zeros(d, fine_grid_size);
    for i in 0..d {
        let (lo, hi) = (nodes[i], nodes[i + 1]);
        let cells = (hi - lo) as f64;
        for c in lo..hi {
            matrix[(i, c)] = 1.0 / cells;
        }
    }
    Ok(ObservationWeights { matrix, avg_weights: partition.average_weights() })
}

/// Width-weighted averaging of a panel onto a coarser nested partition.
pub fn aggregate_to_partition(panel: &PricePanel, coarse: &DeliveryPartition) -> Result<PricePanel> {
    let fine = panel.partition();
    let fine_bp = fine.breakpoints();
    let mut index = Vec::with_capacity(coarse.bins() + 1);
    for &b in coarse.breakpoints() {
        match fine_bp.iter().position(|&f| (f - b).abs() < BREAKPOINT_TOL) {
            Some(i) => index.push(i),
            None => return Err(Error::NotNested(b)),
        }
    }
    let widths = fine.widths();
    let n = panel.len();
    let values = Mat::from_fn(n, coarse.bins(), |r, c| {
        let (lo, hi) = (index[c], index[c + 1]);
        let total: f64 = widths[lo..hi].iter().sum();
        (lo..hi).map(|f| widths[f] * panel.values()[(r, f)]).sum::<f64>() / total
    });
    PricePanel::new(
        panel.dates().to_vec(),
        values,
        coarse.clone(),
        panel.zone().to_string(),
        panel.dst_log().to_vec(),
    )
}
