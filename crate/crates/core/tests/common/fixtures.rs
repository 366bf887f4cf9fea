use std::f64::consts::PI;

use lmphc_core::coarse_grain::{peierls_statistics, segment_contour, PeierlsConfig, PeierlsEstimate, PhaseWindows};
use lmphc_core::dobrushin::{
    compare_geometries, uniqueness_check, ComparisonSetup, CouplingReport, DecayCurve, EffectiveEnergy, ProbeSettings,
    Reference, RestrictedWindow,
};
use lmphc_core::effective_ham::{admissible_volume, CoarseModel};
use lmphc_core::meanfield::{find_beta_c, find_coexistence, global_minimizer, FreeEnergySpec};
use lmphc_core::model::{Cell, CubeAverageTable, HamiltonianForm, KernelSpec, Metric, ModelParams, Point};
use lmphc_core::sampler::SamplerConfig;

use super::meanfield::BETA_LMP;

pub fn coarse_model(params: &ModelParams) -> CoarseModel {
    CoarseModel::new(params, Metric::free(params.d), CubeAverageTable::build(params)).unwrap()
}

/// Admissible volume of a square cube next to a disc centred on a face
/// midpoint: `(R, computed, ell^2 - pi R^2 / 2)`.
pub fn half_disc_volumes() -> Vec<(f64, f64, f64)> {
    let p = ModelParams::new(2, 0.1, 1.0, 1.0, 0.0).unwrap();
    let ell = p.scales().ell_minus;
    [0.5, 1.0, 2.0]
        .into_iter()
        .map(|r| {
            let v = admissible_volume(&[0, 0, 0], ell, 2, &[[0.0, 0.5 * ell, 0.0]], r, 64).unwrap();
            (r, v, ell * ell - PI * r * r / 2.0)
        })
        .collect()
}

/// `h0` of two particle realisations with equal cube counts, as bit patterns.
pub fn h0_of_equal_counts() -> (u64, u64) {
    let p = ModelParams::new(2, 0.1, 0.2, 1.0, 0.1).unwrap();
    let m = coarse_model(&p);
    let ell = m.ell();
    let a: Vec<Point> = vec![[0.5, 0.5, 0.0], [1.5, 2.0, 0.0], [ell + 1.0, 0.3, 0.0]];
    let b: Vec<Point> = vec![[4.0, 5.0, 0.0], [2.2, 0.9, 0.0], [ell + 4.0, 3.3, 0.0]];
    let bar: Vec<Point> = vec![[-1.0, 2.0, 0.0]];
    let ha = m.h0(&m.counts_of(&a), &m.counts_of(&bar)).unwrap();
    let hb = m.h0(&m.counts_of(&b), &m.counts_of(&bar)).unwrap();
    (ha.to_bits(), hb.to_bits())
}

/// Rejection fraction of single-particle draws next to two boundary
/// particles: `(observed, 1 - Z, standard error)`.
pub fn rejection_vs_closed_form(draws: usize, seed: u64) -> (f64, f64, f64) {
    let p = ModelParams::new(2, 0.1, 1.5, 1.0, 0.0).unwrap();
    let m = coarse_model(&p);
    let ell = m.ell();
    let bar = [[-0.5, 0.3 * ell, 0.0], [0.6 * ell, -0.2, 0.0]];
    let reject = m.rejection_fraction(&[0, 0, 0], &bar, draws, seed).unwrap();
    let v = admissible_volume(&[0, 0, 0], ell, 2, &bar, p.hc_radius, 64).unwrap();
    let want = 1.0 - v / (ell * ell);
    (reject, want, (want / draws as f64).sqrt())
}

pub fn toy_params(beta: f64, kernel: KernelSpec) -> ModelParams {
    let mut p = ModelParams::new(1, 0.1, 0.0, beta, 0.0).unwrap();
    p.form = HamiltonianForm::Multibody;
    p.kernel = kernel;
    p
}

pub fn toy_energy(p: &ModelParams) -> EffectiveEnergy {
    EffectiveEnergy::new(CoarseModel::build(p, Metric::free(p.d), None).unwrap(), vec![])
}

/// Uniqueness check on eight cubes in `d = 1` at `beta_factor * beta_c`,
/// with the window centred on the mean-field minimiser.
pub fn high_temperature_check(beta_factor: f64, kernel: KernelSpec) -> CouplingReport {
    let beta_c = find_beta_c(1, 0.0, 3).unwrap();
    let p = toy_params(beta_factor * beta_c, kernel);
    let spec = FreeEnergySpec::new(1, p.beta, 0.0).with_lambda(p.lambda);
    let rho = global_minimizer(&spec).unwrap();
    let w = RestrictedWindow::around(rho, p.scales().zeta, p.cell_volume()).unwrap();
    let lattice: Vec<Cell> = (0..8).map(|i| [i, 0, 0]).collect();
    uniqueness_check(&lattice, &w, &toy_energy(&p), &ProbeSettings::default(), p.gamma).unwrap()
}

/// Box against `reference` at `0.3 beta_c` in `d = 1`.
pub fn comparison(reference: Reference, seed: u64) -> DecayCurve {
    let mut p = ModelParams::new(1, 0.1, 0.0, 0.3 * BETA_LMP, 0.0).unwrap();
    p.form = HamiltonianForm::Multibody;
    let setup = ComparisonSetup {
        box_cubes: 2,
        reference,
        boundary_density: None,
        initial_density: 0.8,
        burn_in: 20_000,
        samples: 4_000,
        stride: 100,
        batches: 20,
        sampler: SamplerConfig::default(),
    };
    compare_geometries(&p, &setup, seed).unwrap()
}

/// Segment contours of `1..=lengths` cubes decorated `+,0,+` in `d = 1` at
/// `1.1 beta_c` and coexistence, with `zeta = 0.3` below the half gap.
pub fn peierls_family(lengths: usize, steps: u64, seed: u64) -> Vec<(usize, PeierlsEstimate)> {
    let beta = 1.1 * BETA_LMP;
    let sol = find_coexistence(1, beta, 0.0, 2).unwrap();
    let p = ModelParams::new(1, 0.1, 0.0, beta, sol.lambda_coex).unwrap();
    let zeta = 0.3;
    assert!(zeta < 0.5 * (sol.rho_plus - sol.rho_minus));
    let w = PhaseWindows::new(sol.rho_minus, sol.rho_plus, zeta).unwrap();
    let ratio = p.scales().plus_ratio;
    (1..=lengths)
        .map(|len| {
            let g = segment_contour(1, ratio, len, &[1, 0, 1]).unwrap();
            let cfg = PeierlsConfig {
                steps,
                burn_in: 20_000,
                every: 50,
                seed: seed * 1000 + len as u64,
                max_support: lengths,
                ..Default::default()
            };
            (g.n_gamma, peierls_statistics(&g, 1, &w, &p, &cfg).unwrap())
        })
        .collect()
}
