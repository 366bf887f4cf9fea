//! Parameters, configurations, the Kac kernel and energy evaluation.

pub mod cell_index;
pub mod coarse;
pub mod energy;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod multibody;
pub mod params;
pub mod particles;
pub mod snapshot;

pub use coarse::{cell_of, Cell, CubeAverageTable};
pub use energy::{
    energy, energy_functional, energy_functional_points, interaction_energy, relative_energy, Energy,
};
pub use geometry::{Domain, DomainKind, Metric, Point};
pub use kernel::{kac_kernel, KacKernel};
pub use multibody::{energy_multibody, lattice_product_sum, multibody_integral, IndexRule};
pub use params::{ball_volume, kernel_constant, HamiltonianForm, KernelSpec, ModelParams, Scales};
pub use particles::{hardcore_admissible, pair_violations, ParticleConfiguration};
pub use snapshot::Snapshot;
