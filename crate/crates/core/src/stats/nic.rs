//! Binned news-impact curves and per-hour leverage curves.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use chrono::NaiveDate;

use super::dist::Z_975;
use super::ols::{ols_hac, residualize, wald_equality, RegressionReport, WaldResult};
use crate::linalg::{self, Mat};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_NIC_LAGS: usize = 14;
pub const DEFAULT_WEEK: usize = 7;

/// Control sets applied to both response and driver before binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ControlSpec {
    /// No controls.
    Unconditional = 1,
    /// `asinh(P̄_{t-7})`.
    PriceLevel = 2,
    /// `ln S₁(t-7)`.
    MeanReversion = 3,
    /// Both.
    Joint = 4,
}

impl ControlSpec {
    pub const ALL: [ControlSpec; 4] = [ControlSpec::Unconditional, ControlSpec::PriceLevel, ControlSpec::MeanReversion, ControlSpec::Joint];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.id() == id)
            .ok_or_else(|| Error::InvalidParameter(format!("control spec {id} not in 1..=4")))
    }

    pub fn description(self) -> &'static str {
        match self {
            ControlSpec::Unconditional => "no controls",
            ControlSpec::PriceLevel => "price/level-scaling control",
            ControlSpec::MeanReversion => "mean-reversion control",
            ControlSpec::Joint => "joint price/level-scaling and mean-reversion control",
        }
    }
}

/// Means of each trailing block of `w` values; entry `i` covers `xs[i..i+w]`.
pub fn trailing_mean(xs: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || xs.len() < w {
        return Vec::new();
    }
    xs.windows(w).map(|b| b.iter().sum::<f64>() / w as f64).collect()
}

/// Equal-frequency bin index per observation: ranks by (value, position), bin
/// `floor(rank · nb / n)`.
pub fn equal_frequency_bins(x: &[f64], nb: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut bins = alloc::vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * nb / n;
    }
    bins
}

/// Aligned series for the level-factor news-impact regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NicInputs {
    pub dates: Vec<NaiveDate>,
    /// `ln S₁(t) - ln S₁(t-7)`.
    pub response: Vec<f64>,
    /// `ΔP̄_{t-7} = P̄_{t-7} - P̄_{t-14}`.
    pub driver: Vec<f64>,
    /// `asinh(P̄_{t-7})`.
    pub price_control: Vec<f64>,
    /// `ln S₁(t-7)`.
    pub reversion_control: Vec<f64>,
}

impl NicInputs {
    /// `pbar` (rolling weekly average price) and `s1` (level-factor score) share
    /// the daily index `dates`.
    pub fn build(dates: &[NaiveDate], pbar: &[f64], s1: &[f64], lag: usize) -> Result<Self> {
        let n = dates.len();
        if pbar.len() != n || s1.len() != n {
            return Err(Error::Dimension(format!("{n} dates, {} prices, {} scores", pbar.len(), s1.len())));
        }
        if lag == 0 || n <= 2 * lag {
            return Err(Error::TooShort { needed: 2 * lag + 1, have: n });
        }
        if let Some(i) = s1.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::Degenerate(format!("level-factor score {} on {} is not positive", s1[i], dates[i])));
        }
        let mut out = NicInputs { dates: Vec::new(), response: Vec::new(), driver: Vec::new(), price_control: Vec::new(), reversion_control: Vec::new() };
        for t in 2 * lag..n {
            out.dates.push(dates[t]);
            out.response.push(s1[t].ln() - s1[t - lag].ln());
            out.driver.push(pbar[t - lag] - pbar[t - 2 * lag]);
            out.price_control.push(libm::asinh(pbar[t - lag]));
            out.reversion_control.push(s1[t - lag].ln());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    fn controls(&self, spec: ControlSpec) -> Option<Mat> {
        let n = self.len();
        match spec {
            ControlSpec::Unconditional => None,
            ControlSpec::PriceLevel => Some(Mat::from_column_slice(n, 1, &self.price_control)),
            ControlSpec::MeanReversion => Some(Mat::from_column_slice(n, 1, &self.reversion_control)),
            ControlSpec::Joint => Some(Mat::from_fn(n, 2, |t, j| if j == 0 { self.price_control[t] } else { self.reversion_control[t] })),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicCurve {
    pub spec: ControlSpec,
    pub counts: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Mean driver value inside each bin.
    pub centers: Vec<f64>,
    pub mu: Vec<f64>,
    pub se: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Regression on `[1, max(x,0), min(x,0)]`.
    pub piecewise: RegressionReport,
    /// Test of `β₊ = β₋`.
    pub wald: WaldResult,
    pub hac_lags: usize,
}

impl NicCurve {
    pub fn beta_plus(&self) -> f64 {
        self.piecewise.coef[1]
    }

    pub fn beta_minus(&self) -> f64 {
        self.piecewise.coef[2]
    }
}

fn piecewise_design(x: &[f64]) -> Mat {
    Mat::from_fn(x.len(), 3, |t, j| match j {
        0 => 1.0,
        1 => x[t].max(0.0),
        _ => x[t].min(0.0),
    })
}

fn piecewise_names() -> Vec<String> {
    ["beta0", "beta_plus", "beta_minus"].iter().map(|s| s.to_string()).collect()
}

fn check_variation(x: &[f64], what: &str) -> Result<()> {
    if x.len() < 2 || !(linalg::variance(x) > 0.0) {
        return Err(Error::Degenerate(format!("{what} has zero variance")));
    }
    Ok(())
}

/// News-impact curve of `response` on binned `driver` with optional controls.
pub fn binned_nic(inputs: &NicInputs, spec: ControlSpec, n_bins: usize, hac_lags: usize) -> Result<NicCurve> {
    let n = inputs.len();
    if n_bins < 2 {
        return Err(Error::InvalidParameter("need at least two bins".into()));
    }
    if n < 20 * n_bins {
        return Err(Error::TooShort { needed: 20 * n_bins, have: n });
    }
    let (y, x) = match inputs.controls(spec) {
        None => (inputs.response.clone(), inputs.driver.clone()),
        Some(c) => (residualize(&inputs.response, &c)?, residualize(&inputs.driver, &c)?),
    };
    check_variation(&x, "driver")?;
    let bins = equal_frequency_bins(&x, n_bins);
    let mut counts = alloc::vec![0usize; n_bins];
    let mut lower = alloc::vec![f64::INFINITY; n_bins];
    let mut upper = alloc::vec![f64::NEG_INFINITY; n_bins];
    let mut sums = alloc::vec![0.0; n_bins];
    for (t, &b) in bins.iter().enumerate() {
        counts[b] += 1;
        lower[b] = lower[b].min(x[t]);
        upper[b] = upper[b].max(x[t]);
        sums[b] += x[t];
    }
    let centers = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let dummies = Mat::from_fn(n, n_bins, |t, b| if bins[t] == b { 1.0 } else { 0.0 });
    let names: Vec<String> = (1..=n_bins).map(|b| format!("bin{b:02}")).collect();
    let binned = ols_hac(&y, &dummies, Some(&names), hac_lags)?;
    let lo = binned.coef.iter().zip(&binned.se).map(|(m, s)| m - Z_975 * s).collect();
    let hi = binned.coef.iter().zip(&binned.se).map(|(m, s)| m + Z_975 * s).collect();
    let piecewise = ols_hac(&y, &piecewise_design(&x), Some(&piecewise_names()), hac_lags)?;
    let wald = wald_or_flat(&piecewise)?;
    Ok(NicCurve { spec, counts, lower, upper, centers, mu: binned.coef, se: binned.se, lo, hi, piecewise, wald, hac_lags })
}

/// A response with no variation gives zero coefficients and zero covariance;
/// report that as "no evidence of asymmetry" rather than an error.
fn wald_or_flat(rep: &RegressionReport) -> Result<WaldResult> {
    match wald_equality(rep, 1, 2) {
        Err(Error::Degenerate(_)) if rep.coef[1] == rep.coef[2] => Ok(WaldResult { statistic: 0.0, p_value: 1.0 }),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeverageCurves {
    pub conditional: bool,
    pub beta_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub se_plus: Vec<f64>,
    pub se_minus: Vec<f64>,
    pub wald_p: Vec<f64>,
    /// `β₊ ≠ β₋` at 5%.
    pub asymmetric: Vec<bool>,
    pub hac_lags: usize,
}

impl LeverageCurves {
    pub fn len(&self) -> usize {
        self.beta_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_plus.is_empty()
    }

    /// `(lo, hi)` 95% band for `β₊^(h)`.
    pub fn plus_band(&self, h: usize) -> (f64, f64) {
        (self.beta_plus[h] - Z_975 * self.se_plus[h], self.beta_plus[h] + Z_975 * self.se_plus[h])
    }

    pub fn minus_band(&self, h: usize) -> (f64, f64) {
        (self.beta_minus[h] - Z_975 * self.se_minus[h], self.beta_minus[h] + Z_975 * self.se_minus[h])
    }
}

/// Aligned series for per-hour leverage regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageInputs {
    pub dates: Vec<NaiveDate>,
    /// `IV_j^(h)`, `T × d`.
    pub iv: Mat,
    /// `ΔP̄_{j-w}`.
    pub driver: Vec<f64>,
    /// Per-hour controls `[asinh(P̄^(h)_{j-w}), IV^(h)_{j-w}]`.
    pub controls: Vec<Mat>,
}

impl LeverageInputs {
    /// `iv`, `pbar` (weekly average over all hours) and `pbar_hourly` (weekly
    /// average per hour) share the index `dates`.
    pub fn build(dates: &[NaiveDate], iv: &Mat, pbar: &[f64], pbar_hourly: &Mat, w: usize) -> Result<Self> {
        let n = dates.len();
        let d = iv.ncols();
        if iv.nrows() != n || pbar.len() != n || pbar_hourly.nrows() != n || pbar_hourly.ncols() != d {
            return Err(Error::Dimension("leverage inputs are not aligned".into()));
        }
        if w == 0 || n <= 2 * w {
            return Err(Error::TooShort { needed: 2 * w + 1, have: n });
        }
        let rows = n - 2 * w;
        let idx = |r: usize| r + 2 * w;
        let controls = (0..d)
            .map(|h| {
                Mat::from_fn(rows, 2, |r, c| {
                    let j = idx(r) - w;
                    if c == 0 {
                        libm::asinh(pbar_hourly[(j, h)])
                    } else {
                        iv[(j, h)]
                    }
                })
            })
            .collect();
        Ok(LeverageInputs {
            dates: dates[2 * w..].to_vec(),
            iv: iv.rows(2 * w, rows).into_owned(),
            driver: (0..rows).map(|r| pbar[idx(r) - w] - pbar[idx(r) - 2 * w]).collect(),
            controls,
        })
    }
}

/// Per-hour regressions `IV^(h) = β₀ + β₊ max(x,0) + β₋ min(x,0) + ε`; with
/// `controls`, response and driver are first residualized on `[1, controls[h]]`.
pub fn functional_leverage_curves(iv: &Mat, driver: &[f64], controls: Option<&[Mat]>, hac_lags: usize) -> Result<LeverageCurves> {
    let n = iv.nrows();
    let d = iv.ncols();
    if driver.len() != n {
        return Err(Error::Dimension(format!("{} driver values for {n} rows", driver.len())));
    }
    check_variation(driver, "driver")?;
    if let Some(c) = controls {
        if c.len() != d {
            return Err(Error::Dimension(format!("{} control blocks for {d} hours", c.len())));
        }
    }
    let mut out = LeverageCurves {
        conditional: controls.is_some(),
        beta_plus: Vec::with_capacity(d),
        beta_minus: Vec::with_capacity(d),
        se_plus: Vec::with_capacity(d),
        se_minus: Vec::with_capacity(d),
        wald_p: Vec::with_capacity(d),
        asymmetric: Vec::with_capacity(d),
        hac_lags,
    };
    let names = piecewise_names();
    for h in 0..d {
        let y: Vec<f64> = iv.column(h).iter().copied().collect();
        let (y, x) = match controls {
            None => (y, driver.to_vec()),
            Some(c) => (residualize(&y, &c[h])?, residualize(driver, &c[h])?),
        };
        check_variation(&x, "residualized driver")?;
        let rep = ols_hac(&y, &piecewise_design(&x), Some(&names), hac_lags)?;
        let wald = wald_or_flat(&rep)?;
        out.beta_plus.push(rep.coef[1]);
        out.beta_minus.push(rep.coef[2]);
        out.se_plus.push(rep.se[1]);
        out.se_minus.push(rep.se[2]);
        out.wald_p.push(wald.p_value);
        out.asymmetric.push(wald.p_value < 0.05);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let s = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        (0..n).map(|i| s + chrono::Days::new(i as u64)).collect()
    }

    fn raw_inputs(response: Vec<f64>, driver: Vec<f64>) -> NicInputs {
        let n = response.len();
        NicInputs { dates: dates(n), response, driver, price_control: alloc::vec![0.0; n], reversion_control: alloc::vec![0.0; n] }
    }

    #[test]
    fn spec_ids_roundtrip() {
        for s in ControlSpec::ALL {
            assert_eq!(ControlSpec::from_id(s.id()).unwrap(), s);
        }
        assert!(ControlSpec::from_id(5).is_err());
    }

    #[test]
    fn trailing_mean_cases() {
        assert_eq!(trailing_mean(&[1.0, 2.0, 3.0, 4.0], 2), [1.5, 2.5, 3.5]);
        assert!(trailing_mean(&[1.0], 2).is_empty());
    }

    #[test]
    fn inputs_alignment() {
        let pbar: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let s1: Vec<f64> = (0..30).map(|i| (i as f64 * 0.1).exp()).collect();
        let inp = NicInputs::build(&dates(30), &pbar, &s1, 7).unwrap();
        assert_eq!(inp.len(), 16);
        assert_eq!(inp.dates[0], dates(30)[14]);
        assert_relative_eq!(inp.response[0], 0.7, epsilon = 1e-12);
        assert_relative_eq!(inp.driver[0], 7.0);
        assert_relative_eq!(inp.reversion_control[0], 0.7, epsilon = 1e-12);
        let mut bad = s1.clone();
        bad[3] = 0.0;
        assert!(NicInputs::build(&dates(30), &pbar, &bad, 7).is_err());
    }

    #[test]
    fn zero_response_gives_flat_curve() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
        let c = binned_nic(&raw_inputs(alloc::vec![0.0; 400], x), ControlSpec::Unconditional, 20, 14).unwrap();
        assert!(c.mu.iter().all(|m| *m == 0.0));
        assert_eq!(c.beta_plus(), 0.0);
        assert_eq!(c.beta_minus(), 0.0);
        assert_eq!(c.wald.p_value, 1.0);
    }

    #[test]
    fn asymmetric_fixture_recovered() {
        let mut rng = seeded(21);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v.max(0.0) + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
        let c = binned_nic(&raw_inputs(y, x), ControlSpec::Unconditional, 20, 14).unwrap();
        assert!((c.beta_plus() - 0.5).abs() < 3.0 * c.piecewise.se[1]);
        assert!(c.beta_minus().abs() < 3.0 * c.piecewise.se[2]);
        assert!(c.wald.p_value < 0.01);
        for b in 0..8 {
            assert!(c.lo[b] < 0.02 && c.hi[b] > -0.02, "bin {b}");
        }
    }

    #[test]
    fn control_collinear_with_intercept_errors() {
        let mut inp = raw_inputs((0..400).map(|i| (i as f64).sin()).collect(), (0..400).map(|i| (i as f64).cos()).collect());
        inp.price_control = alloc::vec![2.0; 400];
        assert!(matches!(binned_nic(&inp, ControlSpec::PriceLevel, 20, 14), Err(Error::Collinear(_))));
        assert!(binned_nic(&inp, ControlSpec::Unconditional, 30, 14).is_err());
    }

    #[test]
    fn leverage_linear_in_hour() {
        let mut rng = seeded(8);
        let n = 3000;
        let d = 6;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let iv = Mat::from_fn(n, d, |t, h| (h + 1) as f64 * x[t].max(0.0) + 0.01 * rng.sample::<f64, _>(StandardNormal));
        let c = functional_leverage_curves(&iv, &x, None, 7).unwrap();
        for h in 0..d {
            assert_relative_eq!(c.beta_plus[h], (h + 1) as f64, epsilon = 0.01);
            assert!(c.beta_minus[h].abs() < 0.01);
            assert!(c.asymmetric[h]);
            let (lo, hi) = c.plus_band(h);
            assert_relative_eq!(c.beta_plus[h] - lo, hi - c.beta_plus[h], epsilon = 1e-12);
        }
        assert!(functional_leverage_curves(&iv, &alloc::vec![1.0; n], None, 7).is_err());
    }

    #[test]
    fn leverage_inputs_alignment() {
        let n = 40;
        let iv = Mat::from_fn(n, 2, |t, h| (t + h) as f64);
        let pbar: Vec<f64> = (0..n).map(|t| t as f64 * 2.0).collect();
        let ph = Mat::from_fn(n, 2, |t, _| t as f64);
        let li = LeverageInputs::build(&dates(n), &iv, &pbar, &ph, 7).unwrap();
        assert_eq!(li.iv.nrows(), n - 14);
        assert_relative_eq!(li.driver[0], 14.0);
        assert_relative_eq!(li.controls[1][(0, 1)], 8.0);
        assert_relative_eq!(li.controls[0][(0, 0)], libm::asinh(7.0));
    }

    proptest! {
        #[test]
        fn bins_balanced(xs in proptest::collection::vec(-1e3f64..1e3, 40..300), nb in 2usize..25) {
            let bins = equal_frequency_bins(&xs, nb);
            let mut counts = alloc::vec![0usize; nb];
            for b in &bins { counts[*b] += 1; }
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
            // Monotone: larger values never fall in lower bins.
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if xs[i] < xs[j] { prop_assert!(bins[i] <= bins[j]); }
                }
            }
        }
    }
}
