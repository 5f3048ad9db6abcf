//! Realized covariation of day-ahead electricity price panels.
//!
//! Daily price vectors are treated as local averages of a latent price curve on
//! the circle. This crate holds the allocation-only numerics: observation
//! functionals, causal de-trending, the effective one-step semigroup, naive and
//! propagation-adjusted realized covariation, factor decompositions, the
//! inference toolkit (HAC regressions, KPSS/ADF, news-impact and leverage
//! curves) and a spectral heat-SPDE simulator that provides ground truth.
//!
//! Everything here is `no_std` + `alloc`. File formats, CSV ingestion and the
//! command line live in the `spotvol` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod detrend;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod panel;
pub mod rcv;
pub mod rng;
pub mod semigroup;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use panel::{DeliveryPartition, ObservationWeights, PricePanel};

/// Year fraction of one trading day.
pub const DAY: f64 = 1.0 / 365.0;
