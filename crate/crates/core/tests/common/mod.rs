//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance report.
#![allow(dead_code)]

pub mod contours;
pub mod diagrams;
pub mod fixtures;
pub mod meanfield;
pub mod sampler;
pub mod transport;
