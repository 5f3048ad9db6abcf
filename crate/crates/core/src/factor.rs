//! Principal components of realized covariation matrices.
//!
//! Eigenvectors are only identified up to sign. Every direction returned by
//! [`eigendecompose`] is oriented so that its entries sum to a nonnegative
//! number; a level factor then has positive loadings and, with the default
//! observation vector (the diagonal of a weekly adjusted RCV), positive scores.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;
use chrono::NaiveDate;
use nalgebra::SymmetricEigen;

use crate::linalg::{self, Mat};
use crate::rcv::RcvSeries;
use crate::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues below `-NEG_EIG_TOL * trace` are rejected; any with magnitude
/// under `NEG_EIG_TOL * trace` are set to zero.
pub const NEG_EIG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecomposition {
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns `q_k`.
    pub directions: Mat,
    pub source: Mat,
}

impl FactorDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn direction(&self, k: usize) -> Vec<f64> {
        self.directions.column(k).iter().copied().collect()
    }

    /// `√λ_k q_k`.
    pub fn loading(&self, k: usize) -> Vec<f64> {
        let s = self.eigenvalues[k].sqrt();
        self.directions.column(k).iter().map(|q| s * q).collect()
    }

    /// Loadings as a `d × d` matrix, one column per component.
    pub fn loadings(&self) -> Mat {
        let mut l = self.directions.clone();
        for (k, lam) in self.eigenvalues.iter().enumerate() {
            l.column_mut(k).scale_mut(lam.sqrt());
        }
        l
    }

    pub fn explained(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total > 0.0 {
            self.eigenvalues.iter().map(|l| l / total).collect()
        } else {
            alloc::vec![0.0; self.dim()]
        }
    }

    pub fn cumulative_explained(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.explained()
            .into_iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect()
    }

    /// `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> Mat {
        let l = self.loadings();
        &l * l.transpose()
    }
}

fn orient(col: &mut [f64]) {
    let s: f64 = col.iter().sum();
    let flip = if s == 0.0 { col.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0) } else { s < 0.0 };
    if flip {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

pub fn eigendecompose(m: &Mat) -> Result<FactorDecomposition> {
    let d = m.nrows();
    if m.ncols() != d || d == 0 {
        return Err(Error::Dimension(format!("expected a nonempty square matrix, got {}x{}", d, m.ncols())));
    }
    let scale = linalg::max_abs(m).max(f64::MIN_POSITIVE);
    let asym = linalg::max_asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = m.clone();
    linalg::symmetrize(&mut sym);
    let trace = linalg::trace(&sym).abs();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(d);
    let mut directions = Mat::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        if lam < -NEG_EIG_TOL * trace {
            return Err(Error::NotPsd(lam));
        }
        // Round-off below the tolerance is a numerical zero, so a rank-k matrix has exactly k positive eigenvalues.
        eigenvalues.push(if lam.abs() <= NEG_EIG_TOL * trace { 0.0 } else { lam.max(0.0) });
        let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        orient(&mut col);
        directions.column_mut(k).copy_from_slice(&col);
    }
    Ok(FactorDecomposition { eigenvalues, directions, source: m.clone() })
}

/// Smallest `k` whose cumulative explained share reaches `threshold`.
pub fn variance_explained_count(decomp: &FactorDecomposition, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0, 1]")));
    }
    let total: f64 = decomp.eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Ok(0);
    }
    // Compare sums directly so that threshold 1 lands on the last positive eigenvalue.
    let target = threshold * total;
    let mut acc = 0.0;
    for (k, lam) in decomp.eigenvalues.iter().enumerate() {
        acc += lam;
        if acc >= target * (1.0 - 1e-12) {
            return Ok(k + 1);
        }
    }
    Ok(decomp.dim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub dates: Vec<NaiveDate>,
    /// `T × K` matrix, `scores[(t, k)] = q_kᵀ x_t`.
    pub scores: Mat,
    /// The observation vectors used, one row per date.
    pub observations: Mat,
    pub x_definition: &'static str,
}

pub const X_DIAGONAL_ADJUSTED: &str = "diagonal of the weekly adjusted RCV (hourly integrated variances)";
pub const X_CUSTOM: &str = "caller-supplied observation vectors";

/// Scores for the first `components` directions.
pub fn factor_scores(decomp: &FactorDecomposition, dates: &[NaiveDate], x: &Mat, components: usize, x_definition: &'static str) -> Result<ScoreSeries> {
    let d = decomp.dim();
    if x.ncols() != d {
        return Err(Error::Dimension(format!("observations have {} columns, expected {d}", x.ncols())));
    }
    if dates.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} dates for {} observations", dates.len(), x.nrows())));
    }
    let k = components.min(d);
    let q = decomp.directions.columns(0, k);
    Ok(ScoreSeries { dates: dates.to_vec(), scores: x * q, observations: x.clone(), x_definition })
}

/// Scores with the default observation vector `x_t = diag(Σ̂_t)`.
pub fn factor_scores_from_rcv(decomp: &FactorDecomposition, series: &RcvSeries, components: usize) -> Result<ScoreSeries> {
    factor_scores(decomp, &series.dates, &series.diagonals(), components, X_DIAGONAL_ADJUSTED)
}

/// Sign-align a sequence of loading vectors for one component: the first has a
/// nonnegative entry sum, each later one the nonnegative inner product with its
/// aligned predecessor.
pub fn align_signs(raw: &Mat) -> Mat {
    let mut out = raw.clone();
    for t in 0..out.nrows() {
        let flip = if t == 0 {
            out.row(0).sum() < 0.0
        } else {
            out.row(t).dot(&out.row(t - 1)) < 0.0
        };
        if flip {
            out.row_mut(t).neg_mut();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSurfaces {
    pub dates: Vec<NaiveDate>,
    /// One `T × d` surface per component.
    pub surfaces: Vec<Mat>,
    /// `T × K` eigenvalue paths.
    pub eigenvalues: Mat,
}

/// Per-window PCA of an RCV series, loadings aligned over time.
pub fn rolling_loadings(series: &RcvSeries, components: usize) -> Result<LoadingSurfaces> {
    let d = series.dim();
    let k = components.min(d);
    let t = series.len();
    let mut raw: Vec<Mat> = (0..k).map(|_| Mat::zeros(t, d)).collect();
    let mut eigenvalues = Mat::zeros(t, k);
    for (i, m) in series.mats.iter().enumerate() {
        let dec = eigendecompose(m)?;
        for (c, surf) in raw.iter_mut().enumerate() {
            let l = dec.loading(c);
            surf.row_mut(i).copy_from_slice(&l);
            eigenvalues[(i, c)] = dec.eigenvalues[c];
        }
    }
    Ok(LoadingSurfaces { dates: series.dates.clone(), surfaces: raw.iter().map(align_signs).collect(), eigenvalues })
}

/// PCA of the sample covariance of a generic `T × d` panel.
pub fn covariance_pca(rows: &Mat) -> Result<FactorDecomposition> {
    if rows.nrows() < 2 {
        return Err(Error::TooShort { needed: 2, have: rows.nrows() });
    }
    eigendecompose(&linalg::sample_covariance(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let s = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
        (0..n).map(|i| s + chrono::Days::new(i as u64)).collect()
    }

    fn random_psd(d: usize, rank: usize, seed: u64) -> Mat {
        let mut rng = seeded(seed);
        let b = Mat::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        &b * b.transpose()
    }

    fn series(mats: Vec<Mat>) -> RcvSeries {
        RcvSeries { dates: dates(mats.len()), mats, window: 7, delta: crate::DAY, adjusted: true, rolling: true }
    }

    #[test]
    fn identity_spectrum() {
        let dec = eigendecompose(&Mat::identity(5, 5)).unwrap();
        assert!(dec.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-12));
        assert!(dec.explained().iter().all(|&e| (e - 0.2).abs() < 1e-12));
    }

    #[test]
    fn rank_one_spectrum() {
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let dec = eigendecompose(&(&v * v.transpose())).unwrap();
        assert_relative_eq!(dec.eigenvalues[0], v.norm_squared(), epsilon = 1e-10);
        assert_relative_eq!(dec.explained()[0], 1.0, epsilon = 1e-12);
        let q = dec.direction(0);
        let cos: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / v.norm();
        assert_relative_eq!(cos.abs(), 1.0, epsilon = 1e-10);
        assert!(q.iter().sum::<f64>() >= 0.0);
        for thr in [0.1, 0.5, 0.99, 1.0] {
            assert_eq!(variance_explained_count(&dec, thr).unwrap(), 1);
        }
    }

    #[test]
    fn explained_count_cases() {
        let dec = eigendecompose(&Mat::identity(24, 24)).unwrap();
        assert_eq!(variance_explained_count(&dec, 0.95).unwrap(), 23);
        let m = random_psd(6, 3, 2);
        assert_eq!(variance_explained_count(&eigendecompose(&m).unwrap(), 1.0).unwrap(), 3);
        assert!(variance_explained_count(&dec, 0.0).is_err());
    }

    #[test]
    fn low_rank_fixture_matches_construction() {
        // Known spectrum 6, 3, 1 on orthonormal directions.
        let q = Mat::from_fn(8, 8, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0).qr().q();
        let lam = [6.0, 3.0, 1.0];
        let mut m = Mat::zeros(8, 8);
        for (k, l) in lam.iter().enumerate() {
            m += q.column(k) * q.column(k).transpose() * *l;
        }
        let dec = eigendecompose(&m).unwrap();
        assert_relative_eq!(dec.explained()[0], 0.6, epsilon = 1e-10);
        assert_eq!(variance_explained_count(&dec, 0.95).unwrap(), 3);
        assert_eq!(variance_explained_count(&dec, 0.6).unwrap(), 1);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eigendecompose(&a), Err(Error::NotSymmetric(_))));
        let b = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(eigendecompose(&b), Err(Error::NotPsd(_))));
        let c = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        assert_eq!(eigendecompose(&c).unwrap().eigenvalues[1], 0.0);
    }

    #[test]
    fn score_cases() {
        let m = random_psd(4, 4, 5);
        let dec = eigendecompose(&m).unwrap();
        let q1 = dec.direction(0);
        let x = Mat::from_fn(2, 4, |r, c| if r == 0 { q1[c] } else { 0.0 });
        let s = factor_scores(&dec, &dates(2), &x, 4, X_CUSTOM).unwrap();
        assert_relative_eq!(s.scores[(0, 0)], 1.0, epsilon = 1e-12);
        for k in 1..4 {
            assert!(s.scores[(0, k)].abs() < 1e-12);
        }
        assert!(s.scores.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scores_average_to_projected_mean() {
        let dec = eigendecompose(&random_psd(3, 3, 9)).unwrap();
        let mut rng = seeded(10);
        let x = Mat::from_fn(50, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = factor_scores(&dec, &dates(50), &x, 3, X_CUSTOM).unwrap();
        let xbar = x.row_mean();
        for k in 0..3 {
            let direct: f64 = (0..3).map(|c| dec.directions[(c, k)] * xbar[c]).sum();
            assert_relative_eq!(s.scores.column(k).mean(), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_windows_give_constant_surfaces() {
        let m = random_psd(5, 5, 3);
        let surf = rolling_loadings(&series(vec![m.clone(); 6]), 2).unwrap();
        for s in &surf.surfaces {
            for t in 1..6 {
                assert_eq!(s.row(t), s.row(0));
            }
        }
    }

    #[test]
    fn alignment_ignores_raw_sign_flip() {
        let mut rng = seeded(1);
        let raw = Mat::from_fn(10, 4, |t, c| 1.0 + 0.1 * t as f64 + 0.05 * rng.sample::<f64, _>(StandardNormal) * c as f64);
        let aligned = align_signs(&raw);
        let mut flipped = raw.clone();
        flipped.row_mut(4).neg_mut();
        flipped.row_mut(0).neg_mut();
        assert_eq!(align_signs(&flipped), aligned);
        assert_eq!(align_signs(&aligned), aligned);
    }

    #[test]
    fn drifting_rank_one_is_tracked() {
        let d = 6;
        let steps = 40;
        let mats: Vec<Mat> = (0..steps)
            .map(|t| {
                let phi = 0.02 * t as f64;
                let v = DVector::from_fn(d, |i, _| (phi + i as f64 * 0.4).cos() + 0.3);
                &v * v.transpose() + Mat::identity(d, d) * 1e-3
            })
            .collect();
        let surf = rolling_loadings(&series(mats.clone()), 1).unwrap();
        let s = &surf.surfaces[0];
        for t in 1..steps {
            let a = s.row(t);
            let b = s.row(t - 1);
            let cos = a.dot(&b) / (a.norm() * b.norm());
            assert!(cos > 5f64.to_radians().cos(), "step {t}: cos {cos}");
        }
    }

    proptest! {
        #[test]
        fn reconstruction_and_orthonormality(seed in 0u64..500, d in 2usize..10) {
            let m = random_psd(d, d, seed);
            let dec = eigendecompose(&m).unwrap();
            let qtq = dec.directions.transpose() * &dec.directions;
            prop_assert!((qtq - Mat::identity(d, d)).amax() < 1e-10);
            prop_assert!((dec.reconstruct() - &m).norm() <= 1e-8 * linalg::trace(&m));
            prop_assert!((dec.explained().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(dec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn scores_invariant_under_raw_sign_flips(seed in 0u64..500) {
            let m = random_psd(4, 4, seed);
            let dec = eigendecompose(&m).unwrap();
            // Re-decompose a matrix rebuilt from sign-flipped directions.
            let mut q = dec.directions.clone();
            q.column_mut(1).neg_mut();
            q.column_mut(3).neg_mut();
            let rebuilt = &q * Mat::from_diagonal(&DVector::from_vec(dec.eigenvalues.clone())) * q.transpose();
            let dec2 = eigendecompose(&rebuilt).unwrap();
            let x = Mat::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.0);
            let s1 = factor_scores(&dec, &dates(3), &x, 2, X_CUSTOM).unwrap();
            let s2 = factor_scores(&dec2, &dates(3), &x, 2, X_CUSTOM).unwrap();
            prop_assert!((s1.scores - s2.scores).amax() < 1e-8);
        }
    }
}
