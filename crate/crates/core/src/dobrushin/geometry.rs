//! Box versus torus comparison of cube occupation expectations as a function
//! of the distance to the box boundary.

use std::fmt::Write as _;

use serde::Serialize;

use super::coupling::{fit_decay, DecayFit};
use crate::error::{Error, Result};
use crate::model::{Domain, ModelParams, ParticleConfiguration};
use crate::sampler::{boundary_shell, phase_configuration, SamplerConfig, SamplerState};
use crate::stats::{batch_means, batch_stderr, derive_seed, mean_var};

/// Geometry the box is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Torus whose side is `factor` times the box side.
    Torus { factor: usize },
    /// The same box with the same boundary condition and an independent chain.
    SameBox,
}

/// Smallest accepted torus-to-box side ratio.
pub const MIN_TORUS_FACTOR: usize = 3;
/// Number of standard errors a bin must exceed to count as signal.
pub const SIGNAL_SIGMAS: f64 = 2.0;

/// Inputs of [`compare_geometries`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSetup {
    /// Box side in `ell_plus` cubes.
    pub box_cubes: usize,
    pub reference: Reference,
    /// Density of the lattice-filled boundary shell; `None` for an empty boundary.
    pub boundary_density: Option<f64>,
    /// Density of the initial lattice configuration of both chains.
    pub initial_density: f64,
    pub burn_in: u64,
    pub samples: usize,
    /// Sampler steps between observations.
    pub stride: u64,
    pub batches: usize,
    pub sampler: SamplerConfig,
}

/// One distance bin: distance from the cube centre to the box complement in
/// units of `1/gamma`, and the box-minus-reference density difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub distance: f64,
    pub difference: f64,
    pub sigma: f64,
    pub cubes: usize,
}

/// Result of [`compare_geometries`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub rows: Vec<DecayRow>,
    /// Exponential fit of `|difference|` over the bins exceeding the noise.
    pub fit: Option<DecayFit>,
    /// Set when no bin exceeds the noise; the curve is then only an upper bound.
    pub upper_bound: Option<f64>,
}

impl DecayCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance,difference,sigma\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.distance, r.difference, r.sigma);
        }
        s
    }

    /// `|difference|` is non-increasing in distance up to `k` combined standard errors.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.rows.iter().enumerate().all(|(i, a)| {
            self.rows[i + 1..]
                .iter()
                .all(|b| b.difference.abs() <= a.difference.abs() + k * (a.sigma.powi(2) + b.sigma.powi(2)).sqrt())
        })
    }
}

/// Runs one chain in the box and one in the reference geometry and compares
/// the mean density of the `ell_minus` cubes of the box, binned by distance to
/// the box complement.
pub fn compare_geometries(params: &ModelParams, setup: &ComparisonSetup, seed: u64) -> Result<DecayCurve> {
    params.validate()?;
    if setup.samples < 2 * setup.batches || setup.batches < 2 || setup.stride == 0 {
        return Err(Error::param("samples", "need stride > 0 and at least two observations per batch"));
    }
    let s = params.scales();
    let d = params.d;
    let n_fine = setup.box_cubes * s.plus_ratio;
    let boundary = match setup.boundary_density {
        None => Vec::new(),
        Some(rho) => boundary_shell(params, n_fine, rho)?,
    };
    let boxed = Domain::boxed(params, setup.box_cubes, boundary)?;
    let bins = distance_bins(n_fine, d);
    let n_bins = bins.iter().copied().max().map_or(0, |m| m + 1);

    let box_chain = || observe_bins(params, &boxed, setup, &bins, n_bins, derive_seed(seed, 0));
    let reference_chain = || -> Result<Vec<Vec<f64>>> {
        match setup.reference {
            Reference::SameBox => observe_bins(params, &boxed, setup, &bins, n_bins, derive_seed(seed, 1)),
            Reference::Torus { factor } => {
                if factor < MIN_TORUS_FACTOR {
                    return Err(Error::param("factor", format!("torus must be at least {MIN_TORUS_FACTOR} times the box")));
                }
                let torus = Domain::torus(params, factor * setup.box_cubes)?;
                let all = vec![0usize; (factor * n_fine).pow(d as u32)];
                let series = observe_bins(params, &torus, setup, &all, 1, derive_seed(seed, 1))?;
                Ok(vec![series[0].clone(); n_bins])
            }
        }
    };
    let (a, b) = rayon::join(box_chain, reference_chain);
    let (a, b) = (a?, b?);

    let mut rows = Vec::with_capacity(n_bins);
    for k in 0..n_bins {
        let (ma, sa) = summary(&a[k], setup.batches);
        let (mb, sb) = summary(&b[k], setup.batches);
        rows.push(DecayRow {
            distance: params.gamma * (k as f64 + 0.5) * s.ell_minus,
            difference: ma - mb,
            sigma: (sa * sa + sb * sb).sqrt(),
            cubes: bins.iter().filter(|&&b| b == k).count(),
        });
    }
    let signal: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.difference.abs() > SIGNAL_SIGMAS * r.sigma)
        .map(|r| (r.distance, r.difference.abs()))
        .collect();
    let fit = fit_decay(&signal);
    let upper_bound = if signal.is_empty() {
        Some(rows.iter().map(|r| r.difference.abs() + SIGNAL_SIGMAS * r.sigma).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(DecayCurve { rows, fit, upper_bound })
}

fn summary(series: &[f64], batches: usize) -> (f64, f64) {
    let (m, _) = mean_var(series);
    let means = batch_means(series, batches);
    let se = if means.len() >= 2 { batch_stderr(series, batches) } else { f64::NAN };
    (m, se)
}

/// Bin of each fine cube of an `n`-per-axis box: its cube distance to the
/// nearest face.
fn distance_bins(n: usize, d: usize) -> Vec<usize> {
    (0..n.pow(d as u32))
        .map(|flat| {
            let mut rest = flat;
            let mut k = usize::MAX;
            for _ in 0..d {
                let i = rest % n;
                rest /= n;
                k = k.min(i.min(n - 1 - i));
            }
            k
        })
        .collect()
}

/// Per-bin time series of the mean fine-cube density.
fn observe_bins(
    params: &ModelParams,
    domain: &Domain,
    setup: &ComparisonSetup,
    bins: &[usize],
    n_bins: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let init: ParticleConfiguration = phase_configuration(domain, params, |_| setup.initial_density)?;
    let mut chain = SamplerState::new(init, params, setup.sampler, None, seed)?;
    chain.run_observed(setup.burn_in, 0, |_| {})?;
    let vol = params.cell_volume();
    let sizes: Vec<f64> = (0..n_bins).map(|k| bins.iter().filter(|&&b| b == k).count() as f64).collect();
    let mut series = vec![Vec::with_capacity(setup.samples); n_bins];
    chain.run_observed(setup.samples as u64 * setup.stride, setup.stride, |st| {
        let counts = &st.fine_counts().counts;
        let mut acc = vec![0.0; n_bins];
        for (c, &b) in counts.iter().zip(bins) {
            acc[b] += *c as f64;
        }
        for k in 0..n_bins {
            series[k].push(acc[k] / (sizes[k] * vol));
        }
    })?;
    Ok(series)
}
