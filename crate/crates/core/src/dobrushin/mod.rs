//! Uniqueness diagnostics for the coarse-grained model: single-site
//! conditional measures on a restricted ensemble, Vaserstein distances,
//! boundary discrepancies, Dobrushin coupling coefficients `r(x, z)` with the
//! `sum_z r(x, z) < 1` check, and a box-versus-torus comparison of local
//! expectations.

mod coupling;
mod geometry;
mod transport;

pub use coupling::{
    conditional_measure, dobrushin_coefficient, fit_decay, uniqueness_check, CoefficientEstimate, CouplingReport,
    DecayFit, EffectiveEnergy, FnEnergy, Phase, ProbeSettings, RestrictedWindow, SiteEnergy, TermProvider,
};
pub use geometry::{
    compare_geometries, ComparisonSetup, DecayCurve, DecayRow, Reference, MIN_TORUS_FACTOR, SIGNAL_SIGMAS,
};
pub use transport::{
    coupling_cost, discrepancy, discrepancy_in_cube, quantile_coupling, vaserstein_1d, DiscreteDistribution,
    NORMALISATION_TOLERANCE,
};
