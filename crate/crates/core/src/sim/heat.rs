//! Spectral heat equation on the circle.
//!
//! The latent curve is expanded in the real Fourier basis `1/√(2π)`,
//! `cos(kθ)/√π`, `sin(kθ)/√π` for `k = 1..M`, giving `2M + 1` independent
//! coordinates. Mode `k ≥ 1` decays at rate `κk²`; the zero mode decays at an
//! optional reversion rate and otherwise is a random walk. Each coordinate is
//! advanced with its exact conditional law, so for volatility that is constant
//! within a day the number of substeps only affects rounding.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;
use chrono::{Datelike, NaiveDate};
use core::f64::consts::PI;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{phi1, phi2};
use crate::linalg::{self, Mat};
use crate::panel::{DeliveryPartition, PricePanel};
use crate::rng;
use crate::{Error, Result, DAY};

/// Per-mode volatility, indexed by wavenumber `k = 0..=M` and shared by the
/// cosine and sine coordinates of a mode.
#[derive(Debug, Clone, PartialEq)]
pub enum VolSpec {
    Constant(Vec<f64>),
    /// Levels switch at the given day indices; `starts[0]` must be 0.
    Piecewise { starts: Vec<usize>, levels: Vec<Vec<f64>> },
    /// `σ_k(t) = base_k √v_k(t)` with a square-root variance factor of mean one,
    /// `dv = reversion (1 - v) dt + vol_of_var √v dB`, discretized by full
    /// truncation Euler at substep scale.
    Stochastic { base: Vec<f64>, reversion: f64, vol_of_var: f64, initial: f64 },
}

impl VolSpec {
    fn levels(&self) -> impl Iterator<Item = &Vec<f64>> {
        match self {
            VolSpec::Constant(v) => core::slice::from_ref(v).iter(),
            VolSpec::Piecewise { levels, .. } => levels.iter(),
            VolSpec::Stochastic { base, .. } => core::slice::from_ref(base).iter(),
        }
    }

    /// Deterministic volatility of mode `k` on day `day`.
    fn sigma(&self, k: usize, day: usize) -> f64 {
        match self {
            VolSpec::Constant(v) => v[k],
            VolSpec::Piecewise { starts, levels } => {
                let seg = starts.partition_point(|&s| s <= day).saturating_sub(1);
                levels[seg][k]
            }
            VolSpec::Stochastic { base, .. } => base[k],
        }
    }
}

/// Drift of the latent curve's spatial mean, constant within each day.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Zero,
    /// Price units per year: `slope + weekly[weekday]` (Monday = 0).
    TrendWeekly { slope: f64, weekly: [f64; 7] },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Draw from the stationary law; random-walk coordinates start at zero.
    Stationary,
    Zero,
    /// Fourier coordinates, length `2M + 1`.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_modes: usize,
    /// Heat diffusivity `κ`.
    pub kappa: f64,
    /// Decay rate of the zero mode (0 for a random walk).
    pub zero_mode_rate: f64,
    pub vol: VolSpec,
    pub drift: DriftSpec,
    pub initial: InitialCondition,
    /// Number of daily observations.
    pub days: usize,
    pub substeps: usize,
    pub delta: f64,
    pub seed: u64,
    pub partition: DeliveryPartition,
    pub start: NaiveDate,
    /// Constant added to every price.
    pub mean_price: f64,
}

impl SimConfig {
    /// Constant-volatility configuration with zero drift and a stationary start.
    pub fn stationary(n_modes: usize, kappa: f64, zero_mode_rate: f64, sigma: Vec<f64>, partition: DeliveryPartition, days: usize, seed: u64) -> Self {
        Self {
            n_modes,
            kappa,
            zero_mode_rate,
            vol: VolSpec::Constant(sigma),
            drift: DriftSpec::Zero,
            initial: InitialCondition::Stationary,
            days,
            substeps: 1,
            delta: DAY,
            seed,
            partition,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            mean_price: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes + 1
    }

    /// Wavenumber of state coordinate `i`.
    pub fn wavenumber(i: usize) -> usize {
        i.div_ceil(2)
    }

    /// Decay rate of state coordinate `i`.
    pub fn rate(&self, i: usize) -> f64 {
        let k = Self::wavenumber(i);
        if k == 0 {
            self.zero_mode_rate
        } else {
            self.kappa * (k * k) as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_modes < 1 {
            return bad("n_modes must be at least 1");
        }
        if self.substeps < 1 {
            return bad("substeps must be at least 1");
        }
        if self.days < 2 {
            return bad("need at least two days");
        }
        if !(self.delta > 0.0) || !(self.kappa >= 0.0) || !(self.zero_mode_rate >= 0.0) {
            return bad("delta must be positive and decay rates nonnegative");
        }
        if !self.mean_price.is_finite() {
            return bad("mean_price must be finite");
        }
        for lv in self.vol.levels() {
            if lv.len() != self.n_modes + 1 {
                return Err(Error::InvalidParameter(format!("volatility vector has {} entries, expected {}", lv.len(), self.n_modes + 1)));
            }
            if lv.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return bad("volatilities must be finite and nonnegative");
            }
        }
        match &self.vol {
            VolSpec::Piecewise { starts, levels } => {
                if starts.len() != levels.len() || starts.first() != Some(&0) || starts.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("piecewise volatility needs increasing starts beginning at day 0");
                }
            }
            VolSpec::Stochastic { reversion, vol_of_var, initial, .. } => {
                if !(*reversion >= 0.0) || !(*vol_of_var >= 0.0) || !(*initial >= 0.0) {
                    return bad("variance-factor parameters must be nonnegative");
                }
            }
            VolSpec::Constant(_) => {}
        }
        if let InitialCondition::Fixed(x) = &self.initial {
            if x.len() != self.dim() {
                return Err(Error::InvalidParameter(format!("initial state has {} entries, expected {}", x.len(), self.dim())));
            }
        }
        Ok(())
    }

    fn drift(&self, day: usize) -> f64 {
        match &self.drift {
            DriftSpec::Zero => 0.0,
            DriftSpec::TrendWeekly { slope, weekly } => {
                let date = self.start + chrono::Days::new(day as u64);
                slope + weekly[date.weekday().num_days_from_monday() as usize]
            }
        }
    }
}

/// Bin averages of the Fourier basis: `d × (2M+1)`.
pub fn observation_matrix(partition: &DeliveryPartition, n_modes: usize) -> Mat {
    let d = partition.bins();
    let sp = PI.sqrt();
    let s2p = (2.0 * PI).sqrt();
    Mat::from_fn(d, 2 * n_modes + 1, |j, i| {
        let (a, b) = partition.bounds(j);
        let w = b - a;
        let k = SimConfig::wavenumber(i);
        if i == 0 {
            1.0 / s2p
        } else {
            let kf = k as f64;
            if i % 2 == 1 {
                ((kf * b).sin() - (kf * a).sin()) / (kf * sp * w)
            } else {
                ((kf * a).cos() - (kf * b).cos()) / (kf * sp * w)
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub panel: PricePanel,
    /// Fourier coordinates per day, `N × (2M+1)`.
    pub state: Mat,
    /// Conditional variance of each coordinate's innovation between day `n-1`
    /// and day `n` (row 0 is zero).
    pub innovation_var: Mat,
    /// Observation matrix `A`.
    pub observation: Mat,
    pub delta: f64,
    /// Population one-step predictor when the configuration is stationary.
    pub true_predictor: Option<Mat>,
}

impl SimTruth {
    /// Realized semigroup-weighted integrated covariance of the `w` innovations
    /// ending at row `end`, annualized: `A diag(Σ v_n) Aᵀ / (δ w)`.
    pub fn window_iv(&self, end: usize, w: usize) -> Result<Mat> {
        if w == 0 || end < w || end >= self.innovation_var.nrows() {
            return Err(Error::InvalidParameter(format!("window of {w} ending at row {end} is out of range")));
        }
        let p = self.innovation_var.ncols();
        let mut diag = alloc::vec![0.0; p];
        for n in end + 1 - w..=end {
            for (i, slot) in diag.iter_mut().enumerate() {
                *slot += self.innovation_var[(n, i)];
            }
        }
        Ok(weighted_gram(&self.observation, &diag, 1.0 / (self.delta * w as f64)))
    }

    /// Rolling window truths aligned with a rolling RCV of the panel's increments.
    pub fn true_iv_series(&self, w: usize) -> Result<Vec<Mat>> {
        (w..self.innovation_var.nrows()).map(|end| self.window_iv(end, w)).collect()
    }
}

/// `scale · A diag(v) Aᵀ`, symmetrized.
fn weighted_gram(a: &Mat, v: &[f64], scale: f64) -> Mat {
    let d = a.nrows();
    let mut out = Mat::from_fn(d, d, |r, c| (0..v.len()).map(|i| a[(r, i)] * v[i] * a[(c, i)]).sum::<f64>() * scale);
    linalg::symmetrize(&mut out);
    out
}

pub fn simulate_heat_spde(cfg: &SimConfig) -> Result<SimTruth> {
    cfg.validate()?;
    let p = cfg.dim();
    let n = cfg.days;
    let h = cfg.delta / cfg.substeps as f64;
    let rates: Vec<f64> = (0..p).map(|i| cfg.rate(i)).collect();
    let decay_h: Vec<f64> = rates.iter().map(|r| (-r * h).exp()).collect();
    let mut rng = rng::seeded(cfg.seed);

    let mut x = match &cfg.initial {
        InitialCondition::Zero => alloc::vec![0.0; p],
        InitialCondition::Fixed(v) => v.clone(),
        InitialCondition::Stationary => {
            let v0 = initial_variance_factor(&cfg.vol);
            (0..p)
                .map(|i| {
                    let s = cfg.vol.sigma(SimConfig::wavenumber(i), 0);
                    let z: f64 = rng.sample(StandardNormal);
                    if rates[i] > 0.0 {
                        s * (v0 / (2.0 * rates[i])).sqrt() * z
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let mut vfac: Vec<f64> = alloc::vec![initial_variance_factor(&cfg.vol); cfg.n_modes + 1];

    let mut state = Mat::zeros(n, p);
    let mut innovation_var = Mat::zeros(n, p);
    state.row_mut(0).copy_from_slice(&x);
    let drift_scale = (2.0 * PI).sqrt();
    let mut var = alloc::vec![0.0; p];
    for day in 1..n {
        var.iter_mut().for_each(|v| *v = 0.0);
        let mu = cfg.drift(day - 1) * drift_scale;
        for _ in 0..cfg.substeps {
            if let VolSpec::Stochastic { reversion, vol_of_var, .. } = &cfg.vol {
                for v in vfac.iter_mut() {
                    let vp = v.max(0.0);
                    let z: f64 = rng.sample(StandardNormal);
                    *v += reversion * (1.0 - vp) * h + vol_of_var * (vp * h).sqrt() * z;
                }
            }
            for i in 0..p {
                let k = SimConfig::wavenumber(i);
                let s = cfg.vol.sigma(k, day - 1);
                let s2 = match cfg.vol {
                    VolSpec::Stochastic { .. } => s * s * vfac[k].max(0.0),
                    _ => s * s,
                };
                let e = decay_h[i];
                x[i] *= e;
                if i == 0 {
                    x[0] += mu * phi1(rates[0], h);
                }
                var[i] = e * e * var[i] + s2 * phi2(rates[i], h);
            }
        }
        for i in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x[i] += var[i].sqrt() * z;
        }
        state.row_mut(day).copy_from_slice(&x);
        innovation_var.row_mut(day).copy_from_slice(&var);
    }

    let a = observation_matrix(&cfg.partition, cfg.n_modes);
    let mut values = &state * a.transpose();
    values.add_scalar_mut(cfg.mean_price);
    let dates: Vec<NaiveDate> = (0..n).map(|i| cfg.start + chrono::Days::new(i as u64)).collect();
    let panel = PricePanel::new(dates, values, cfg.partition.clone(), "SIM", Vec::new())?;
    let true_predictor = population_moments(cfg).ok().map(|m| m.s);
    Ok(SimTruth { panel, state, innovation_var, observation: a, delta: cfg.delta, true_predictor })
}

fn initial_variance_factor(vol: &VolSpec) -> f64 {
    match vol {
        VolSpec::Stochastic { initial, .. } => *initial,
        _ => 1.0,
    }
}

/// Stationary second moments of the observed panel (zero drift, constant or
/// mean-one stochastic volatility).
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    /// `Γ = E[X̃₀X̃₀ᵀ]`.
    pub gamma: Mat,
    /// `C = E[X̃₁X̃₀ᵀ]`.
    pub cross: Mat,
    /// `S = C Γ⁻¹`.
    pub s: Mat,
    /// `(Γ - SΓSᵀ)/δ`, the long-span limit of the adjusted RCV.
    pub adjusted: Mat,
    /// `(S - I)Γ(S - I)ᵀ/δ`.
    pub propagation: Mat,
    /// `A diag((1 - e^{-rδ})² v) Aᵀ / δ`: propagation of the latent field itself,
    /// `E[A B Bᵀ Aᵀ]/δ` with `B = (𝒮(δ) - I)X`.
    pub latent_propagation: Mat,
    /// `(2Γ - C - Cᵀ)/δ`, the long-span limit of the naive RCV.
    pub naive: Mat,
    /// `A diag(σ²(1 - e^{-2rδ})/(2r)) Aᵀ / δ`: expected semigroup-weighted variance.
    pub weighted_iv: Mat,
    /// `A diag(σ²) Aᵀ`: annualized spot covariance without semigroup weighting.
    pub spot_iv: Mat,
}

pub fn population_moments(cfg: &SimConfig) -> Result<PopulationMoments> {
    cfg.validate()?;
    if cfg.drift != DriftSpec::Zero {
        return Err(Error::InvalidParameter("population moments require zero drift".into()));
    }
    let sigma: Vec<f64> = match &cfg.vol {
        VolSpec::Constant(s) => s.clone(),
        VolSpec::Stochastic { base, initial, .. } if *initial == 1.0 => base.clone(),
        _ => return Err(Error::InvalidParameter("population moments require constant volatility".into())),
    };
    let p = cfg.dim();
    let delta = cfg.delta;
    let mut v = alloc::vec![0.0; p];
    let mut lagged = alloc::vec![0.0; p];
    let mut weighted = alloc::vec![0.0; p];
    let mut latent = alloc::vec![0.0; p];
    let mut spot = alloc::vec![0.0; p];
    for i in 0..p {
        let k = SimConfig::wavenumber(i);
        let r = cfg.rate(i);
        let s2 = sigma[k] * sigma[k];
        if r == 0.0 && s2 > 0.0 {
            return Err(Error::NonStationaryMode(k));
        }
        v[i] = if r > 0.0 { s2 / (2.0 * r) } else { 0.0 };
        lagged[i] = (-r * delta).exp() * v[i];
        weighted[i] = s2 * phi2(r, delta);
        latent[i] = (-r * delta).exp_m1().powi(2) * v[i];
        spot[i] = s2;
    }
    let a = observation_matrix(&cfg.partition, cfg.n_modes);
    let gamma = weighted_gram(&a, &v, 1.0);
    let cross = weighted_gram(&a, &lagged, 1.0);
    let cond = linalg::sym_condition(&gamma);
    if cond > 1e12 {
        return Err(Error::SingularGram { cond });
    }
    let s = linalg::spd_solve(&gamma, &cross.transpose()).ok_or(Error::SingularGram { cond })?.transpose();
    let d = gamma.nrows();
    let mut adjusted = (&gamma - &s * &gamma * s.transpose()) / delta;
    linalg::symmetrize(&mut adjusted);
    let sm = &s - Mat::identity(d, d);
    let mut propagation = &sm * &gamma * sm.transpose() / delta;
    linalg::symmetrize(&mut propagation);
    let mut naive = (&gamma * 2.0 - &cross - cross.transpose()) / delta;
    linalg::symmetrize(&mut naive);
    Ok(PopulationMoments {
        gamma,
        cross,
        s,
        adjusted,
        propagation,
        latent_propagation: weighted_gram(&a, &latent, 1.0 / delta),
        naive,
        weighted_iv: weighted_gram(&a, &weighted, 1.0 / delta),
        spot_iv: weighted_gram(&a, &spot, 1.0),
    })
}

/// Expected semigroup-weighted integrated covariance over days
/// `first_day..first_day + w` (innovations into those days), annualized.
pub fn true_semigroup_weighted_iv(cfg: &SimConfig, first_day: usize, w: usize) -> Result<Mat> {
    cfg.validate()?;
    if w == 0 || first_day == 0 {
        return Err(Error::InvalidParameter("window must be nonempty and start after day 0".into()));
    }
    let p = cfg.dim();
    let delta = cfg.delta;
    let mut diag = alloc::vec![0.0; p];
    for day in first_day..first_day + w {
        for (i, slot) in diag.iter_mut().enumerate() {
            let k = SimConfig::wavenumber(i);
            let r = cfg.rate(i);
            let s = cfg.vol.sigma(k, day - 1);
            *slot += match &cfg.vol {
                VolSpec::Stochastic { reversion, initial, .. } => {
                    // E v(t) = 1 + (v₀ - 1) e^{-reversion t}, integrated against e^{-2r(δ-u)}.
                    let t0 = (day - 1) as f64 * delta;
                    let c = (initial - 1.0) * (-reversion * t0).exp();
                    let g = 2.0 * r - reversion;
                    let mixed = if g.abs() < 1e-12 { delta * (-2.0 * r * delta).exp() } else { ((-reversion * delta).exp() - (-2.0 * r * delta).exp()) / g };
                    s * s * (phi2(r, delta) + c * mixed)
                }
                _ => s * s * phi2(r, delta),
            };
        }
    }
    let a = observation_matrix(&cfg.partition, cfg.n_modes);
    Ok(weighted_gram(&a, &diag, 1.0 / (delta * w as f64)))
}
