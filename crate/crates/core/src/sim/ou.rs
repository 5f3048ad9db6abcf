//! Scalar Ornstein–Uhlenbeck process `dX = λ X dt + σ dW`, sampled daily.

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OuSimulation {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
    /// `e^{λδ}`.
    pub ar_coef: f64,
    /// `(1/δ)(e^{λδ} - 1)² E[X₀²]` under the stationary law (0 when `λ ≥ 0`).
    pub propagation_target: f64,
    /// `(1/δ)∫₀^δ e^{2λ(δ-t)} σ² dt` averaged over the σ path.
    pub adjusted_limit: f64,
}

/// `∫₀^δ e^{2λ(δ-t)} dt`.
fn weighted_length(lambda: f64, delta: f64) -> f64 {
    if lambda == 0.0 {
        delta
    } else {
        (2.0 * lambda * delta).exp_m1() / (2.0 * lambda)
    }
}

/// Exact discretization. `sigma` holds one value per day (`len == 1` means
/// constant); `x0 = None` starts from the stationary law when `λ < 0` and at 0
/// otherwise.
pub fn simulate_ou_1d(lambda: f64, sigma: &[f64], delta: f64, n: usize, x0: Option<f64>, seed: u64) -> Result<OuSimulation> {
    if n < 2 {
        return Err(Error::TooShort { needed: 2, have: n });
    }
    if sigma.is_empty() || (sigma.len() != 1 && sigma.len() != n - 1) {
        return Err(Error::Dimension("sigma must have one entry or one per increment".into()));
    }
    if !(delta > 0.0) || !lambda.is_finite() || sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidParameter("need delta > 0, finite lambda and nonnegative sigma".into()));
    }
    let sig = |i: usize| if sigma.len() == 1 { sigma[0] } else { sigma[i] };
    let a = (lambda * delta).exp();
    let wl = weighted_length(lambda, delta);
    let mut rng = rng::seeded(seed);
    let stationary_var = if lambda < 0.0 { sig(0) * sig(0) / (-2.0 * lambda) } else { 0.0 };
    let start = x0.unwrap_or_else(|| stationary_var.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let mut x = Vec::with_capacity(n);
    x.push(start);
    for i in 0..n - 1 {
        let sd = sig(i) * wl.sqrt();
        let z: f64 = rng.sample(StandardNormal);
        let next = a * x[i] + sd * z;
        x.push(next);
    }
    let mean_s2 = (0..n - 1).map(|i| sig(i) * sig(i)).sum::<f64>() / (n - 1) as f64;
    Ok(OuSimulation {
        x,
        lambda,
        delta,
        ar_coef: a,
        propagation_target: (a - 1.0) * (a - 1.0) * stationary_var / delta,
        adjusted_limit: mean_s2 * wl / delta,
    })
}
