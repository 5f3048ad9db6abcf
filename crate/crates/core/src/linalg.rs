//! Small dense helpers on top of nalgebra.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn trace(m: &Mat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Condition number of a symmetric positive semidefinite matrix; infinite when
/// the smallest eigenvalue is not positive.
pub fn sym_condition(m: &Mat) -> f64 {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Accumulate `scale * x xᵀ` into `acc`.
pub fn add_outer(acc: &mut Mat, x: &[f64], scale: f64) {
    let d = x.len();
    for i in 0..d {
        let xi = x[i] * scale;
        if xi == 0.0 {
            continue;
        }
        for j in 0..d {
            acc[(i, j)] += xi * x[j];
        }
    }
}

/// Frobenius norm of `a - b` relative to the Frobenius norm of `b`.
pub fn rel_frobenius(a: &Mat, b: &Mat) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        return (a - b).norm();
    }
    (a - b).norm() / denom
}

pub fn row(m: &Mat, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|j| m[(i, j)]).collect()
}

pub fn column(m: &Mat, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Build an `n × k` matrix from `k` equally long columns.
pub fn from_columns(cols: &[&[f64]]) -> Result<Mat> {
    let k = cols.len();
    let n = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension(format!("columns of unequal length (expected {n})")));
    }
    Ok(Mat::from_fn(n, k, |i, j| cols[j][i]))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Mat, b: &Mat) -> Option<Mat> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Sample covariance of the rows of `data` (divisor `n - 1`).
pub fn sample_covariance(data: &Mat) -> Mat {
    let n = data.nrows();
    let d = data.ncols();
    let means: Vec<f64> = (0..d).map(|j| mean(&column(data, j))).collect();
    let mut cov = Mat::zeros(d, d);
    let mut centered = alloc::vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            centered[j] = data[(i, j)] - means[j];
        }
        add_outer(&mut cov, &centered, 1.0);
    }
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    symmetrize(&mut cov);
    cov
}
