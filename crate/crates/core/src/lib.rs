//! Numerical laboratory for self-similar measures on the line and their
//! pushforwards to polynomial curves: cut-set discretizations, exact
//! self-affine lifts along moment curves, Fourier transforms and L^p region
//! scans, dyadic moment sums, and the flattening diagnostics that tie them
//! together.

pub mod curve;
pub mod error;
pub mod ifs;
pub mod lift;
pub mod measure;
pub mod moments;
pub mod numeric;
pub mod poly;
pub mod spectral;

pub use error::{Error, Result};
