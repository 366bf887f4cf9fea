//! Continuum particle model with Kac interactions and hard-core exclusion.
//!
//! The crate covers the mean-field phase diagram, grand-canonical sampling,
//! coarse-graining into phase indicators and contours, the coarse-grained
//! effective Hamiltonian with its cluster expansion, and Dobrushin-type
//! uniqueness diagnostics.

// Coordinate-axis index loops and NaN-rejecting `!(x > 0.0)` checks are deliberate.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod cluster_exp;
pub mod coarse_grain;
pub mod dobrushin;
pub mod effective_ham;
pub mod meanfield;
pub mod quadrature;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
