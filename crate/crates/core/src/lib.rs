//! Determined multichannel blind source separation under the local Gaussian
//! model.
//!
//! The engine alternates between refreshing each source's variance model and
//! updating the per-frequency demixing matrices by iterative projection. Source
//! models are pluggable through [`lgm::SourceModel`]:
//!
//! * [`nmf::NmfModel`]: low-rank NMF variances (ILRMA) or a single flat basis (IVA).
//! * [`neural::NeuralModel`]: forward-only inference with a unified
//!   encoder-classifier network and a class-conditioned decoder.
//! * [`lgm::OracleModel`]: fixed known variances, for testing.

pub mod error;
pub mod lgm;
pub mod metrics;
pub mod mixsim;
pub mod neural;
pub mod nmf;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Lower bound applied to every variance value.
pub const VARIANCE_FLOOR: f64 = 1e-10;
