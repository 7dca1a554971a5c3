//! PCA whitening as a preprocessing step for sparse autoencoders, at desk scale.
//!
//! The crate trains ReLU and Top-K SAEs with and without whitening on
//! synthetic data with a known dictionary, measures feature recovery, and
//! sweeps the two-angle optimization landscape of 2D dictionaries.
//!
//! Samples are rows everywhere: a linear map `M` acts on a batch as `x M^T`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod gradcheck;
pub mod landscape;
pub mod metrics;
pub mod numkit;
pub mod parallel;
pub mod pipeline;
pub mod sae;
pub mod synthgen;
pub mod whitening;

pub use error::{Error, Result};
