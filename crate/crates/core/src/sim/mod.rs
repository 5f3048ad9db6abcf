//! Synthetic panels with known ground truth.
//!
//! [`heat`] simulates the spectral heat equation on the circle observed through
//! delivery-period averages; [`ou`] is the scalar Ornstein–Uhlenbeck collapse.

pub mod heat;
pub mod ou;

pub use heat::{
    population_moments, simulate_heat_spde, true_semigroup_weighted_iv, DriftSpec, InitialCondition, PopulationMoments, SimConfig, SimTruth, VolSpec,
};
pub use ou::{simulate_ou_1d, OuSimulation};

#[allow(unused_imports)] // needed for f64 math without std; the lint misfires
use num_traits::Float as _;

/// `(1 - e^{-r h}) / r`, equal to `h` at `r = 0`.
pub(crate) fn phi1(r: f64, h: f64) -> f64 {
    if r == 0.0 {
        h
    } else {
        -(-r * h).exp_m1() / r
    }
}

/// `(1 - e^{-2 r h}) / (2 r)`, equal to `h` at `r = 0`.
pub(crate) fn phi2(r: f64, h: f64) -> f64 {
    phi1(2.0 * r, h)
}
