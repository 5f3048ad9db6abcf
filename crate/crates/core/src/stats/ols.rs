//! Least squares with Newey–West or classical coefficient covariance.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use nalgebra::{DVector, QR};

use super::bartlett;
use super::dist::{chi2_1_sf, normal_two_sided_p};
use crate::linalg::Mat;
use crate::{Error, Result};

/// Relative size of a QR pivot below which a column counts as collinear.
pub const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Coefficient covariance (HAC or classical).
    pub cov: Mat,
    pub se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub n: usize,
    /// Newey–West lags; `None` for classical standard errors.
    pub lags: Option<usize>,
    pub residuals: Vec<f64>,
}

impl RegressionReport {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

struct Fit {
    coef: DVector<f64>,
    residuals: DVector<f64>,
    /// `(XᵀX)⁻¹`.
    bread: Mat,
    r2: f64,
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

fn check_rank(qr: &QR<f64, nalgebra::Dyn, nalgebra::Dyn>, x: &Mat, names: &[String]) -> Result<Mat> {
    let r = qr.r();
    for j in 0..x.ncols() {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() < COLLINEAR_TOL * norm {
            return Err(Error::Collinear(names[j].clone()));
        }
    }
    Ok(r)
}

fn fit(y: &[f64], x: &Mat, names: &[String]) -> Result<Fit> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses for {n} regressor rows", y.len())));
    }
    if names.len() != k {
        return Err(Error::Dimension(format!("{} names for {k} regressors", names.len())));
    }
    if n <= k {
        return Err(Error::TooShort { needed: k + 1, have: n });
    }
    let qr = x.clone().qr();
    let r = check_rank(&qr, x, names)?;
    let q = qr.q();
    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * &yv;
    let coef = r.solve_upper_triangular(&qty).ok_or_else(|| Error::Collinear(names[k - 1].clone()))?;
    let fitted = &q * &qty;
    let residuals = &yv - &fitted;
    let rinv = r
        .solve_upper_triangular(&Mat::identity(k, k))
        .ok_or_else(|| Error::Collinear(names[k - 1].clone()))?;
    let bread = &rinv * rinv.transpose();

    // Centered R² whenever the constant lies in the column space.
    let ones = DVector::from_element(n, 1.0);
    let proj = &q * (q.transpose() * &ones);
    let has_const = (&ones - proj).norm() < 1e-8 * (n as f64).sqrt();
    let rss = residuals.norm_squared();
    let tss = if has_const {
        let m = yv.mean();
        yv.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else if rss == 0.0 { 1.0 } else { 0.0 };
    Ok(Fit { coef, residuals, bread, r2 })
}

fn hac_meat(x: &Mat, u: &[f64], lags: usize) -> Mat {
    let n = x.nrows();
    let k = x.ncols();
    let mut meat = Mat::zeros(k, k);
    // Scores g_t = x_t u_t.
    let g = Mat::from_fn(n, k, |t, j| x[(t, j)] * u[t]);
    meat += g.transpose() * &g;
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = bartlett(l, lags);
        let lead = g.rows(l, n - l);
        let lag = g.rows(0, n - l);
        let gamma = lead.transpose() * lag;
        meat += (&gamma + gamma.transpose()) * w;
    }
    meat
}

/// Newey–West sandwich `(XᵀX)⁻¹ Ω̂ (XᵀX)⁻¹` with Bartlett weights and no
/// small-sample correction.
pub fn newey_west_cov(x: &Mat, residuals: &[f64], lags: usize) -> Result<Mat> {
    let names = default_names(x.ncols());
    if residuals.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} residuals for {} rows", residuals.len(), x.nrows())));
    }
    let qr = x.clone().qr();
    let r = check_rank(&qr, x, &names)?;
    let k = x.ncols();
    let rinv = r.solve_upper_triangular(&Mat::identity(k, k)).ok_or(Error::Collinear(names[k - 1].clone()))?;
    let bread = &rinv * rinv.transpose();
    Ok(&bread * hac_meat(x, residuals, lags) * &bread)
}

fn report(fit: Fit, cov: Mat, names: &[String], lags: Option<usize>) -> RegressionReport {
    let k = fit.coef.len();
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t_stats: Vec<f64> = (0..k).map(|j| fit.coef[j] / se[j]).collect();
    let p_values = t_stats.iter().map(|&t| if t.is_nan() { f64::NAN } else { normal_two_sided_p(t) }).collect();
    RegressionReport {
        names: names.to_vec(),
        coef: fit.coef.iter().copied().collect(),
        cov,
        se,
        t_stats,
        p_values,
        r2: fit.r2,
        n: fit.residuals.len(),
        lags,
        residuals: fit.residuals.iter().copied().collect(),
    }
}

/// OLS with Newey–West standard errors and normal p-values.
pub fn ols_hac(y: &[f64], x: &Mat, names: Option<&[String]>, lags: usize) -> Result<RegressionReport> {
    let owned;
    let names = match names {
        Some(n) => n,
        None => {
            owned = default_names(x.ncols());
            &owned
        }
    };
    let f = fit(y, x, names)?;
    let u: Vec<f64> = f.residuals.iter().copied().collect();
    let cov = &f.bread * hac_meat(x, &u, lags) * &f.bread;
    Ok(report(f, cov, names, Some(lags)))
}

/// OLS with classical `s² (XᵀX)⁻¹` standard errors, `s² = RSS/(n-k)`.
pub fn ols_classical(y: &[f64], x: &Mat, names: Option<&[String]>) -> Result<RegressionReport> {
    let owned;
    let names = match names {
        Some(n) => n,
        None => {
            owned = default_names(x.ncols());
            &owned
        }
    };
    let f = fit(y, x, names)?;
    let dof = (x.nrows() - x.ncols()) as f64;
    let s2 = f.residuals.norm_squared() / dof;
    let cov = &f.bread * s2;
    Ok(report(f, cov, names, None))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// χ²(1) Wald test of `coef_i = coef_j` using the report's covariance.
pub fn wald_equality(rep: &RegressionReport, i: usize, j: usize) -> Result<WaldResult> {
    let k = rep.coef.len();
    if i >= k || j >= k || i == j {
        return Err(Error::InvalidParameter(format!("invalid coefficient pair ({i}, {j}) for {k} coefficients")));
    }
    let diff = rep.coef[i] - rep.coef[j];
    let var = rep.cov[(i, i)] + rep.cov[(j, j)] - 2.0 * rep.cov[(i, j)];
    if !(var > 0.0) {
        return Err(Error::Degenerate("zero variance for coefficient difference".to_string()));
    }
    let statistic = diff * diff / var;
    Ok(WaldResult { statistic, p_value: chi2_1_sf(statistic) })
}

/// Residuals of `y` on `[1, controls]`.
pub fn residualize(y: &[f64], controls: &Mat) -> Result<Vec<f64>> {
    let n = y.len();
    if controls.nrows() != n {
        return Err(Error::Dimension(format!("{} control rows for {n} observations", controls.nrows())));
    }
    let c = controls.ncols();
    let mut z = Mat::zeros(n, c + 1);
    z.column_mut(0).fill(1.0);
    z.columns_mut(1, c).copy_from(controls);
    let mut names = alloc::vec![String::from("intercept")];
    names.extend((0..c).map(|j| format!("control{j}")));
    let f = fit(y, &z, &names)?;
    Ok(f.residuals.iter().copied().collect())
}

fn standardize(x: &[f64], what: &str) -> Result<Vec<f64>> {
    let m = crate::linalg::mean(x);
    let sd = crate::linalg::variance(x).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate(format!("{what} has zero variance")));
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

/// `PS_h = α + β₀ h + β₁ e_h^wind + β₂ e_h^solar` with standardized predictors
/// and classical standard errors.
pub fn ps_uncertainty_regression(ps: &[f64], hours: &[f64], wind_mse: &[f64], solar_mse: &[f64]) -> Result<RegressionReport> {
    let n = ps.len();
    if hours.len() != n || wind_mse.len() != n || solar_mse.len() != n {
        return Err(Error::Dimension("per-hour inputs differ in length".into()));
    }
    let cols = [standardize(hours, "hour")?, standardize(wind_mse, "wind error")?, standardize(solar_mse, "solar error")?];
    let x = Mat::from_fn(n, 4, |t, j| if j == 0 { 1.0 } else { cols[j - 1][t] });
    let names: Vec<String> = ["alpha", "beta_hour", "beta_wind", "beta_solar"].iter().map(|s| s.to_string()).collect();
    ols_classical(ps, &x, Some(&names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn design(x: &[f64]) -> Mat {
        Mat::from_fn(x.len(), 2, |t, j| if j == 0 { 1.0 } else { x[t] })
    }

    #[test]
    fn exact_fit() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 1.5 * v).collect();
        let rep = ols_hac(&y, &design(&x), None, 3).unwrap();
        assert_relative_eq!(rep.coef[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(rep.coef[1], -1.5, epsilon = 1e-12);
        assert_relative_eq!(rep.r2, 1.0, epsilon = 1e-12);
        assert!(rep.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn orthogonal_response() {
        let x = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let y = [1.0, 1.0, -1.0, -1.0, 0.0, 0.0];
        let rep = ols_classical(&y, &design(&x), None).unwrap();
        assert!(rep.coef[1].abs() < 1e-14);
        assert!(rep.coef[0].abs() < 1e-14);
    }

    #[test]
    fn collinear_column_named() {
        let x = Mat::from_fn(10, 3, |t, j| if j == 2 { 2.0 * t as f64 } else if j == 1 { t as f64 } else { 1.0 });
        let names = vec!["const".to_string(), "a".to_string(), "twice_a".to_string()];
        assert_eq!(ols_hac(&[0.0; 10], &x, Some(&names), 1), Err(Error::Collinear("twice_a".into())));
    }

    #[test]
    fn zero_lags_is_white_sandwich() {
        let x = design(&[0.5, -1.0, 2.0, 0.0, 1.0]);
        let u = [0.3, -0.2, 0.1, 0.4, -0.6];
        let cov = newey_west_cov(&x, &u, 0).unwrap();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let mut meat = Mat::zeros(2, 2);
        for t in 0..5 {
            let xt = x.row(t).transpose();
            meat += &xt * xt.transpose() * (u[t] * u[t]);
        }
        let expect = &xtx_inv * meat * &xtx_inv;
        assert!((cov - expect).amax() < 1e-14);
    }

    #[test]
    fn three_observation_fixture_one_lag() {
        // Brute-force oracle: Ω = Σ_t Σ_s w(|t-s|) g_t g_sᵀ with w(0)=1, w(1)=1/2, w(2)=0.
        let x = Mat::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let u = [0.5, -1.0, 0.25];
        let g: Vec<[f64; 2]> = (0..3).map(|t| [x[(t, 0)] * u[t], x[(t, 1)] * u[t]]).collect();
        let mut omega = [[0.0; 2]; 2];
        for t in 0..3usize {
            for s in 0..3usize {
                let w = match t.abs_diff(s) {
                    0 => 1.0,
                    1 => 0.5,
                    _ => 0.0,
                };
                for a in 0..2 {
                    for b in 0..2 {
                        omega[a][b] += w * g[t][a] * g[s][b];
                    }
                }
            }
        }
        // (XᵀX) = [[3,4],[4,10]], inverse = [[10,-4],[-4,3]]/14.
        let inv = [[10.0 / 14.0, -4.0 / 14.0], [-4.0 / 14.0, 3.0 / 14.0]];
        let mut expect = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for e in 0..2 {
                        expect[a][b] += inv[a][c] * omega[c][e] * inv[e][b];
                    }
                }
            }
        }
        let cov = newey_west_cov(&x, &u, 1).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(cov[(a, b)], expect[a][b], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn iid_hac_matches_classical() {
        let mut rng = seeded(11);
        let n = 50_000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + rng.sample::<f64, _>(StandardNormal)).collect();
        let hac = ols_hac(&y, &design(&x), None, 10).unwrap();
        let cls = ols_classical(&y, &design(&x), None).unwrap();
        for j in 0..2 {
            assert_relative_eq!(hac.cov[(j, j)], cls.cov[(j, j)], max_relative = 0.05);
        }
    }

    #[test]
    fn hac_recovers_ar1_long_run_variance() {
        // Mean regression with AR(1) errors: Var(ȳ) ≈ σ²/((1-φ)² n).
        let phi = 0.5;
        let n = 100_000;
        let mut rng = seeded(12);
        let mut e = 0.0;
        let y: Vec<f64> = (0..n)
            .map(|_| {
                e = phi * e + rng.sample::<f64, _>(StandardNormal);
                e
            })
            .collect();
        let x = Mat::from_element(n, 1, 1.0);
        let lags = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize * 4;
        let rep = ols_hac(&y, &x, None, lags).unwrap();
        let analytic = 1.0 / ((1.0 - phi) * (1.0 - phi) * n as f64);
        assert_relative_eq!(rep.cov[(0, 0)], analytic, max_relative = 0.10);
    }

    #[test]
    fn wald_cases() {
        let mut rep = ols_classical(&[1.0, 2.0, 2.5, 4.0, 5.5], &design(&[0.0, 1.0, 2.0, 3.0, 4.0]), None).unwrap();
        rep.coef = vec![1.0, 1.0];
        assert_relative_eq!(wald_equality(&rep, 0, 1).unwrap().p_value, 1.0);
        assert!(wald_equality(&rep, 0, 0).is_err());
        assert!(wald_equality(&rep, 0, 5).is_err());
    }

    #[test]
    fn ps_regression_linear_in_hour() {
        let hours: Vec<f64> = (1..=24).map(|h| h as f64).collect();
        let ps: Vec<f64> = hours.iter().map(|h| 0.6 - 0.01 * h).collect();
        let wind: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64).collect();
        let solar: Vec<f64> = (0..24).map(|i| ((i * 11) % 13) as f64).collect();
        let rep = ps_uncertainty_regression(&ps, &hours, &wind, &solar).unwrap();
        assert_relative_eq!(rep.r2, 1.0, epsilon = 1e-12);
        assert!(rep.coef[2].abs() < 1e-12 && rep.coef[3].abs() < 1e-12);
        assert!(rep.coef[1] < 0.0);
        // Relabelling hours with all inputs permuted identically changes nothing.
        let perm: Vec<usize> = (0..24).map(|i| (i * 5) % 24).collect();
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let rep2 = ps_uncertainty_regression(&pick(&ps), &pick(&hours), &pick(&wind), &pick(&solar)).unwrap();
        for j in 0..4 {
            assert_relative_eq!(rep.coef[j], rep2.coef[j], epsilon = 1e-12);
        }
        assert!(ps_uncertainty_regression(&ps, &hours, &[1.0; 24], &solar).is_err());
    }

    proptest! {
        #[test]
        fn residualization_idempotent(seed in 0u64..300) {
            let mut rng = seeded(seed);
            let n = 40;
            let c = Mat::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0).collect();
            let once = residualize(&y, &c).unwrap();
            let twice = residualize(&once, &c).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn t_stat_consistent(seed in 0u64..300) {
            let mut rng = seeded(seed);
            let x: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = x.iter().map(|v| v * 0.3 + rng.sample::<f64, _>(StandardNormal)).collect();
            let rep = ols_hac(&y, &design(&x), None, 2).unwrap();
            for j in 0..2 {
                prop_assert!((rep.t_stats[j] - rep.coef[j] / rep.cov[(j, j)].sqrt()).abs() < 1e-12);
            }
            prop_assert!(rep.r2 >= 0.0 && rep.r2 <= 1.0);
        }
    }
}
