//! Unsupervised seismic event detection.
//!
//! Convolutional autoencoders are trained on unlabeled 3-component waveforms;
//! a window is then scored by the Gaussian-weighted lag-domain covariance of
//! its bottleneck representation. High scores indicate a transient arrival.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod waveform;
pub mod synthetic;
pub mod autoencoder;
pub mod trigger;
pub mod evaluation;
pub mod config;
pub mod cli;
