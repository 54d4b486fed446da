//! Hybrid qualitative/quantitative inverse scattering in two dimensions.
//!
//! The pipeline simulates multistatic data with a method-of-moments forward
//! solver, localizes scatterers with the linear sampling method, segments
//! the indicator into a region of interest, and reconstructs the contrast
//! inside that region with contrast source inversion against an
//! artificially constructed inhomogeneous background.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod csi;
pub mod error;
pub mod forward;
pub mod io;
pub mod krylov;
pub mod lsm;
pub mod medium;
pub mod segment;
pub mod specfun;

pub use error::{Error, Result};
