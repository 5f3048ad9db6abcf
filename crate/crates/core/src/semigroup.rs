//! The effective one-step semigroup on the observation space.
//!
//! `Ŝ = Ĉ Γ̂⁻¹` with `Ĉ = Σ X̃_n X̃_{n-1}ᵀ / P` and `Γ̂ = Σ X̃_{n-1} X̃_{n-1}ᵀ / P`
//! is the least-squares one-step linear predictor of the de-meaned price
//! vector. Its residuals split each price increment into a propagation part
//! `B̂_n = (Ŝ - I) X̃_{n-1}` and an innovation part `ε̂_n`.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::vec::Vec;
use chrono::NaiveDate;
use nalgebra::Complex;

use crate::linalg::{self, Mat};
use crate::{Error, Result};

pub const DEFAULT_REFIT_DAYS: usize = 28;
pub const DEFAULT_BURN_IN_DAYS: usize = 364;
/// Condition number above which the automatic ridge kicks in.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePolicy {
    /// Ridge added to `Γ̂` unconditionally.
    pub ridge: f64,
    /// With `ridge == 0`, fall back to `1e-8 · tr(Γ̂)/d` when `Γ̂` is ill-conditioned
    /// instead of returning [`Error::SingularGram`].
    pub auto_fallback: bool,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        Self { ridge: 0.0, auto_fallback: true }
    }
}

impl RidgePolicy {
    pub fn exact() -> Self {
        Self { ridge: 0.0, auto_fallback: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupEstimate {
    pub s: Mat,
    pub gram: Mat,
    pub cross: Mat,
    pub n_obs: usize,
    /// Ridge actually used (0 if none).
    pub ridge: f64,
    /// True when the ridge came from the ill-conditioning fallback.
    pub auto_ridge: bool,
    /// Half-open row range `[start, end)` of the rows the estimate used.
    pub rows: (usize, usize),
    pub window: Option<(NaiveDate, NaiveDate)>,
}

/// Fit `Ŝ` on consecutive rows of a de-meaned panel.
pub fn estimate_semigroup(rows: &Mat, policy: RidgePolicy) -> Result<SemigroupEstimate> {
    let t = rows.nrows();
    let d = rows.ncols();
    if t < d + 1 || t < 2 {
        return Err(Error::TooShort { needed: d + 1, have: t });
    }
    if policy.ridge < 0.0 {
        return Err(Error::InvalidParameter("ridge must be nonnegative".into()));
    }
    let pairs = t - 1;
    let mut gram = Mat::zeros(d, d);
    let mut cross = Mat::zeros(d, d);
    let mut prev = linalg::row(rows, 0);
    for n in 1..t {
        let cur = linalg::row(rows, n);
        for i in 0..d {
            for j in 0..d {
                cross[(i, j)] += cur[i] * prev[j];
                gram[(i, j)] += prev[i] * prev[j];
            }
        }
        prev = cur;
    }
    gram /= pairs as f64;
    cross /= pairs as f64;
    linalg::symmetrize(&mut gram);

    let mut ridge = policy.ridge;
    let mut auto_ridge = false;
    if ridge == 0.0 {
        let cond = linalg::sym_condition(&gram);
        if !(cond <= MAX_CONDITION) {
            if !policy.auto_fallback {
                return Err(Error::SingularGram { cond });
            }
            ridge = 1e-8 * linalg::trace(&gram) / d as f64;
            auto_ridge = true;
            if !(ridge > 0.0) {
                return Err(Error::SingularGram { cond });
            }
        }
    }
    let mut reg = gram.clone();
    for i in 0..d {
        reg[(i, i)] += ridge;
    }
    // Ŝ Γ = Ĉ  ⇔  Γ Ŝᵀ = Ĉᵀ (Γ symmetric).
    let st = linalg::spd_solve(&reg, &cross.transpose()).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    Ok(SemigroupEstimate {
        s: st.transpose(),
        gram,
        cross,
        n_obs: pairs,
        ridge,
        auto_ridge,
        rows: (0, t),
        window: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalfLife {
    Days(f64),
    /// Spectral radius zero: shocks vanish after one step.
    Instant,
    /// Spectral radius ≥ 1 (unit root or explosive).
    Undefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex<f64>>,
    pub half_life: HalfLife,
}

pub fn modulus(z: &Complex<f64>) -> f64 {
    z.re.hypot(z.im)
}

pub fn spectrum(s: &Mat) -> Spectrum {
    let mut eigenvalues: Vec<Complex<f64>> = s.clone().complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| modulus(b).total_cmp(&modulus(a)).then(b.re.total_cmp(&a.re)));
    let radius = eigenvalues.first().map_or(0.0, modulus);
    let half_life = if radius <= 1e-14 {
        HalfLife::Instant
    } else if radius < 1.0 - 1e-12 {
        HalfLife::Days(-core::f64::consts::LN_2 / radius.ln())
    } else {
        HalfLife::Undefined
    };
    Spectrum { eigenvalues, half_life }
}

/// Backward-looking refits: the estimate used on row `n` is the latest one
/// whose refit row is `≤ n`, and a refit at row `r` only sees rows `< r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupSchedule {
    pub refit_rows: Vec<usize>,
    pub estimates: Vec<SemigroupEstimate>,
}

impl SemigroupSchedule {
    /// One estimate applied to every row (full-sample, look-ahead).
    pub fn constant(est: SemigroupEstimate) -> Self {
        Self { refit_rows: alloc::vec![0], estimates: alloc::vec![est] }
    }

    pub fn estimate_for(&self, row: usize) -> Option<&SemigroupEstimate> {
        let idx = self.refit_rows.partition_point(|&r| r <= row);
        if idx == 0 {
            None
        } else {
            Some(&self.estimates[idx - 1])
        }
    }

    pub fn first_row(&self) -> usize {
        self.refit_rows.first().copied().unwrap_or(usize::MAX)
    }
}

pub fn rolling_semigroup(
    rows: &Mat,
    dates: &[NaiveDate],
    refit_every: usize,
    burn_in: usize,
    policy: RidgePolicy,
) -> Result<SemigroupSchedule> {
    let t = rows.nrows();
    if refit_every == 0 {
        return Err(Error::InvalidParameter("refit interval must be positive".into()));
    }
    if burn_in >= t {
        return Err(Error::TooShort { needed: burn_in + 1, have: t });
    }
    if dates.len() != t {
        return Err(Error::Dimension("dates and rows differ in length".into()));
    }
    let mut refit_rows = Vec::new();
    let mut estimates = Vec::new();
    let mut r = burn_in;
    while r < t {
        let mut est = estimate_semigroup(&rows.rows(0, r).into_owned(), policy)?;
        est.rows = (0, r);
        est.window = Some((dates[0], dates[r - 1]));
        refit_rows.push(r);
        estimates.push(est);
        r += refit_every;
    }
    Ok(SemigroupSchedule { refit_rows, estimates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    pub dates: Vec<NaiveDate>,
    /// Plug-in residuals `ε̂_n`.
    pub eps: Mat,
    /// Propagation components `B̂_n = (Ŝ - I) X̃_{n-1}`.
    pub bhat: Mat,
    /// Input row index of the first residual.
    pub first_row: usize,
}

impl ResidualPanel {
    pub fn len(&self) -> usize {
        self.eps.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.nrows() == 0
    }

    /// `Δ_n X̃ = ε̂_n + B̂_n`.
    pub fn increments(&self) -> Mat {
        &self.eps + &self.bhat
    }
}

/// Residuals for every row covered by the schedule; earlier rows are excluded.
pub fn propagation_residuals(rows: &Mat, dates: &[NaiveDate], schedule: &SemigroupSchedule) -> Result<ResidualPanel> {
    let t = rows.nrows();
    let d = rows.ncols();
    if dates.len() != t {
        return Err(Error::Dimension("dates and rows differ in length".into()));
    }
    let first = schedule.first_row().max(1);
    if first >= t {
        return Err(Error::TooShort { needed: first + 1, have: t });
    }
    let m = t - first;
    let mut eps = Mat::zeros(m, d);
    let mut bhat = Mat::zeros(m, d);
    for (out, n) in (first..t).enumerate() {
        let est = schedule.estimate_for(n).ok_or(Error::TooShort { needed: n, have: 0 })?;
        if est.s.nrows() != d {
            return Err(Error::Dimension("semigroup dimension differs from panel".into()));
        }
        for i in 0..d {
            let mut prop = -rows[(n - 1, i)];
            for j in 0..d {
                prop += est.s[(i, j)] * rows[(n - 1, j)];
            }
            bhat[(out, i)] = prop;
            eps[(out, i)] = (rows[(n, i)] - rows[(n - 1, i)]) - prop;
        }
    }
    Ok(ResidualPanel { dates: dates[first..].to_vec(), eps, bhat, first_row: first })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Mat {
        let mut rng = seeded(seed);
        Mat::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn moment_identity_holds() {
        let x = random_rows(300, 3, 1);
        let est = estimate_semigroup(&x, RidgePolicy::exact()).unwrap();
        let lhs = &est.s * &est.gram;
        assert!(linalg::rel_frobenius(&lhs, &est.cross) < 1e-12);
        assert_eq!(est.n_obs, 299);
    }

    #[test]
    fn iid_rows_give_small_semigroup() {
        let x = random_rows(100_000, 2, 7);
        let est = estimate_semigroup(&x, RidgePolicy::exact()).unwrap();
        assert!(est.s.norm() < 0.02, "{}", est.s.norm());
    }

    #[test]
    fn singular_gram_errors_or_falls_back() {
        let base = random_rows(50, 1, 3);
        let x = Mat::from_fn(50, 2, |i, _| base[(i, 0)]);
        assert!(matches!(estimate_semigroup(&x, RidgePolicy::exact()), Err(Error::SingularGram { .. })));
        let est = estimate_semigroup(&x, RidgePolicy::default()).unwrap();
        assert!(est.auto_ridge && est.ridge > 0.0);
    }

    #[test]
    fn spectrum_cases() {
        let sp = spectrum(&(Mat::identity(3, 3) * 0.8));
        assert!(sp.eigenvalues.iter().all(|z| (z.re - 0.8).abs() < 1e-12 && z.im.abs() < 1e-12));
        match sp.half_life {
            HalfLife::Days(h) => assert_relative_eq!(h, 3.106, epsilon = 1e-3),
            other => panic!("{other:?}"),
        }
        assert_eq!(spectrum(&Mat::identity(2, 2)).half_life, HalfLife::Undefined);
        assert_eq!(spectrum(&Mat::zeros(2, 2)).half_life, HalfLife::Instant);
    }

    #[test]
    fn rotation_spectrum_is_complex() {
        let s = Mat::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        let sp = spectrum(&s);
        assert!(sp.eigenvalues.iter().all(|z| (modulus(z) - 0.5).abs() < 1e-12));
        assert!(sp.eigenvalues[0].im.abs() > 0.4);
    }

    #[test]
    fn rolling_schedule_arithmetic() {
        let x = random_rows(400, 2, 11);
        let sched = rolling_semigroup(&x, &dates(400), 28, 364, RidgePolicy::default()).unwrap();
        // 1-based days 365 and 393.
        assert_eq!(sched.refit_rows, vec![364, 392]);
        assert_eq!(sched.estimates[0].rows, (0, 364));
        assert!(sched.estimate_for(363).is_none());
        assert_eq!(sched.estimate_for(391).unwrap().rows, (0, 364));
        assert_eq!(sched.estimate_for(399).unwrap().rows, (0, 392));
        assert!(rolling_semigroup(&x, &dates(400), 28, 400, RidgePolicy::default()).is_err());
    }

    #[test]
    fn rolling_estimates_ignore_future_rows() {
        let x = random_rows(200, 2, 5);
        let mut y = x.clone();
        y[(199, 0)] = 1e6;
        let a = rolling_semigroup(&x, &dates(200), 20, 100, RidgePolicy::default()).unwrap();
        let b = rolling_semigroup(&y, &dates(200), 20, 100, RidgePolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_semigroup_residuals_are_increments() {
        let x = random_rows(20, 3, 2);
        let mut est = estimate_semigroup(&x, RidgePolicy::default()).unwrap();
        est.s = Mat::identity(3, 3);
        let res = propagation_residuals(&x, &dates(20), &SemigroupSchedule::constant(est)).unwrap();
        assert_eq!(res.first_row, 1);
        for n in 1..20 {
            for i in 0..3 {
                assert_eq!(res.bhat[(n - 1, i)], 0.0);
                assert_relative_eq!(res.eps[(n - 1, i)], x[(n, i)] - x[(n - 1, i)]);
            }
        }
    }

    #[test]
    fn noiseless_ar_has_zero_residuals() {
        let s = Mat::from_row_slice(2, 2, &[0.7, 0.1, -0.2, 0.5]);
        let mut x = Mat::zeros(40, 2);
        x[(0, 0)] = 3.0;
        x[(0, 1)] = -1.0;
        for n in 1..40 {
            let prev = x.row(n - 1).transpose();
            let next = &s * prev;
            x[(n, 0)] = next[0];
            x[(n, 1)] = next[1];
        }
        let mut est = estimate_semigroup(&x, RidgePolicy::default()).unwrap();
        est.s = s;
        let res = propagation_residuals(&x, &dates(40), &SemigroupSchedule::constant(est)).unwrap();
        assert!(res.eps.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_sample_residuals_are_orthogonal_to_lagged_levels() {
        let x = random_rows(500, 4, 9);
        let est = estimate_semigroup(&x, RidgePolicy::exact()).unwrap();
        let res = propagation_residuals(&x, &dates(500), &SemigroupSchedule::constant(est)).unwrap();
        let scale = x.norm() * res.eps.norm();
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (1..500).map(|n| res.eps[(n - 1, i)] * x[(n - 1, j)]).sum();
                assert!(s.abs() < 1e-10 * scale, "{s}");
            }
        }
        let inc = res.increments();
        for n in 1..500 {
            for i in 0..4 {
                assert_relative_eq!(inc[(n - 1, i)], x[(n, i)] - x[(n - 1, i)], epsilon = 1e-12);
            }
        }
    }
}
