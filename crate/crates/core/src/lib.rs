//! Monte Carlo model of the interference seen at the matched-filter output of a
//! 5G NR receiver tracking comb-multiplexed Positioning Reference Signals (PRS)
//! broadcast from several LEO satellites.
//!
//! The crate is organized along the signal path:
//!
//! - [`geometry`]: Walker shells, user lattices, look angles and per-link
//!   channel parameters (path loss, delay, Doppler).
//! - [`prs`]: Gold sequences, comb resource-grid mapping and CP-OFDM modulation.
//! - [`channel`]: application of the delay/Doppler channel and the received
//!   composite.
//! - [`receiver`]: cross-ambiguity function, delay-Doppler maps, interference
//!   and SINR extraction.
//! - [`montecarlo`]: the campaign driver and its file formats.
//! - [`stats`]: ECDF, Kolmogorov-Smirnov, candidate fitting, GEV estimation and
//!   the parameter regression against the PRS configuration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod prs;
pub mod receiver;
pub mod stats;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a power ratio or a power in watts to decibels.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
