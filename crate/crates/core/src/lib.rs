//! Spectral graph wavelet transforms with Chebyshev polynomial
//! approximation, the wavelet-domain graph network built on them, and the
//! synthetic-data / analysis machinery for fault-diagnosis experiments.

pub mod analysis;
pub mod chebyshev;
pub mod data;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod nn;
pub mod parallel;
pub mod seed;
pub mod sgwt;

pub use error::{Error, Result};
