//! Minimum-description feature pipeline for UWB zone positioning.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] draws multipath channel realizations and synthesizes the
//!   received baseband waveform at every sensor.
//! * [`frontend`] turns waveforms into power-delay profiles with a
//!   sub-Nyquist energy detector (or a matched filter) and calibrates noise.
//! * [`features`] keeps the `F` strongest bins of every profile and renders
//!   them as a sparse image or as power/index matrices.
//! * [`select`] scores candidate feature sizes with a chi-square likelihood,
//!   Marcum-Q acquisition probabilities and a nearest-neighbour KL estimate.
//!
//! All numerical code is generic over [`Real`]; the aliases below fix the
//! common `f64` instantiations.

// `!(x > 0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_clamp)]

pub mod channel;
pub mod error;
pub mod features;
pub mod frontend;
pub mod rng;
pub mod scalar;
pub mod select;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Location = channel::Location<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type PdpVector = frontend::PdpVector<f64>;
pub type FeatureSet = features::FeatureSet<f64>;
pub type NormalizationStats = features::NormalizationStats<f64>;
pub type SelectionStats = select::SelectionStats<f64>;
pub type PerFQuantities = select::PerFQuantities<f64>;

/// Single-precision PDP, used when feeding networks trained in `f32`.
pub type PdpVector32 = frontend::PdpVector<f32>;
