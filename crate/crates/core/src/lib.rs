//! Jump inference for high-frequency quotes observed under one-sided
//! (limit order) microstructure noise.
//!
//! Ask quotes are modelled as the efficient log-price plus nonnegative noise,
//! bid quotes with nonpositive noise. All estimators work on block-wise local
//! extrema (minima of asks, maxima of bids) instead of local averages:
//!
//! - [`series`]: observation series, block grids and local extrema.
//! - [`spot_vol`]: spot volatility from squared differences of block extrema.
//! - [`evt`]: Gumbel calibration and the half-normal difference law.
//! - [`inference`]: jump size estimation, local and global tests, localization
//!   and sequential multi-jump detection.
//! - [`online`]: streaming detection with running extrema.
//! - [`sim`]: stochastic volatility paths, noise schemes and jump injection.
//! - [`mmn`]: the local-average baseline for mid quotes and the bootstrap.
//! - [`experiment`]: size/power Monte Carlo tables.
//! - [`io`]: quote ingestion, session cleaning and diagnostics.

pub mod error;
pub mod evt;
pub mod experiment;
pub mod inference;
pub mod io;
pub mod mmn;
pub mod online;
pub mod series;
pub mod sim;
pub mod spot_vol;

mod par;
pub mod rng;

pub use error::{Error, Result};
pub use series::{BlockGrid, ExtremaSeries, GridTarget, QuoteSeries, SessionMeta, Side};
