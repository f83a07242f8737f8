//! Multifractal detrended (cross-)correlation analysis of return series.
//!
//! The crate covers the full chain from raw price files to network
//! topology: normalized returns and profiles ([`series`]), q-order
//! fluctuation functions ([`fluctuation`]), generalized Hurst exponents and
//! singularity spectra ([`spectrum`]), the q-dependent detrended
//! cross-correlation coefficient ([`rho`]), power-law tail exponents
//! ([`tail`]) and minimal spanning trees of correlation distances
//! ([`network`]). Synthetic generators with known scaling live in
//! [`synth`]; [`pipeline`] drives rolling-window analyses from a config file.

pub mod config;
pub mod detrend;
pub mod error;
pub mod fluctuation;
pub mod network;
pub mod pipeline;
pub mod rho;
pub mod series;
pub mod spectrum;
pub mod synth;
pub mod tail;
pub mod window;

pub use error::{Error, Result};
