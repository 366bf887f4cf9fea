//! Grid quadrature of the Kac energy.
//!
//! At every node the power sums `p_k = sum_i J(r, q_i)^k`, `k = 1..4`, are
//! accumulated. The functional form integrates `-p1^2/2 + p1^4/24`; the
//! distinct-index form integrates the elementary symmetric combinations
//! `-(p1^2 - p2)/2 + (p1^4 - 6 p1^2 p2 + 3 p2^2 + 8 p1 p3 - 6 p4)/24`, which equal
//! the pair and quadruple sums over distinct indices pointwise.

use serde::Serialize;

use super::geometry::{Metric, Point};
use super::grid::QuadGrid;
use super::kernel::KacKernel;
use super::params::{HamiltonianForm, ModelParams};
use super::particles::{pair_violations, ParticleConfiguration};
use crate::error::{Error, Result};

pub type Powers = [f64; 4];

/// Energy density at a node, without the chemical-potential term.
#[inline]
pub fn density_energy(form: HamiltonianForm, p: &Powers) -> f64 {
    let p1 = p[0];
    match form {
        HamiltonianForm::Functional => {
            let s = p1 * p1;
            -0.5 * s + s * s / 24.0
        }
        HamiltonianForm::Multibody => {
            let s = p1 * p1;
            let pair = s - p[1];
            let quad = s * s - 6.0 * s * p[1] + 3.0 * p[1] * p[1] + 8.0 * p1 * p[2] - 6.0 * p[3];
            -0.5 * pair + quad / 24.0
        }
    }
}

/// Adds `sign * (v, v^2, v^3, v^4)` to a power-sum accumulator.
#[inline]
pub fn accumulate(acc: &mut Powers, v: f64, sign: f64) {
    let v2 = v * v;
    acc[0] += sign * v;
    acc[1] += sign * v2;
    acc[2] += sign * v2 * v;
    acc[3] += sign * v2 * v2;
}

/// Result of an energy evaluation that may hit the hard core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Energy {
    Finite(f64),
    /// Hard-core overlap: the energy is `+infinity`.
    HardCore,
}

impl Energy {
    pub fn finite(self) -> Option<f64> {
        match self {
            Energy::Finite(x) => Some(x),
            Energy::HardCore => None,
        }
    }

    /// `+inf` for hard-core overlaps.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Power sums of a set of kernel centres on a grid.
#[derive(Debug, Clone)]
pub struct PowerField {
    pub grid: QuadGrid,
    pub values: Vec<Powers>,
}

impl PowerField {
    pub fn new(grid: QuadGrid) -> Self {
        let n = grid.len();
        PowerField {
            grid,
            values: vec![[0.0; 4]; n],
        }
    }

    pub fn add(&mut self, kernel: &KacKernel, q: &Point, sign: f64) {
        let c = kernel.centre(q);
        let values = &mut self.values;
        self.grid.for_each_in_ball(&c, kernel.range(), |i, d2| {
            accumulate(&mut values[i], kernel.profile(d2), sign);
        });
    }

    pub fn integrate(&self, form: HamiltonianForm) -> f64 {
        self.grid.weight() * self.values.iter().map(|p| density_energy(form, p)).sum::<f64>()
    }
}

/// Grid used to integrate the energy of `points` under `metric`.
pub fn energy_grid<'a>(
    points: impl IntoIterator<Item = &'a Point>,
    metric: Metric,
    params: &ModelParams,
) -> Result<QuadGrid> {
    let s = params.scales();
    let range = s.range;
    match metric.period {
        Some(l) => {
            if l <= 2.0 * range {
                return Err(Error::param("side", "torus side must exceed twice the Kac range"));
            }
            QuadGrid::periodic(params.d, s.spacing, l)
        }
        None => {
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            let mut any = false;
            let kernel = KacKernel::new(params);
            for p in points {
                let c = kernel.centre(p);
                for k in 0..params.d {
                    if !any {
                        lo[k] = c[k];
                        hi[k] = c[k];
                    } else {
                        lo[k] = lo[k].min(c[k]);
                        hi[k] = hi[k].max(c[k]);
                    }
                }
                any = true;
            }
            for k in 0..params.d {
                lo[k] -= range;
                hi[k] += range;
            }
            Ok(QuadGrid::window(params.d, s.spacing, &lo, &hi))
        }
    }
}

/// Kac part of the energy (without `-lambda N`) in the requested form.
pub fn kac_energy(points: &[Point], metric: Metric, params: &ModelParams, form: HamiltonianForm) -> Result<f64> {
    let kernel = KacKernel::new(params);
    if kernel.is_off() || points.is_empty() {
        return Ok(0.0);
    }
    let grid = energy_grid(points, metric, params)?;
    let mut field = PowerField::new(grid);
    for p in points {
        field.add(&kernel, p, 1.0);
    }
    Ok(field.integrate(form))
}

fn check_admissible(points: &[Point], metric: Metric, params: &ModelParams) -> Result<()> {
    if let Some(&(i, j)) = pair_violations(points, params.hc_radius, metric).first() {
        return Err(Error::HardCoreOverlap(i, j));
    }
    Ok(())
}

/// `int e_lambda(J_gamma * q) dr`, with `-lambda |q|` added exactly.
pub fn energy_functional(q: &ParticleConfiguration, params: &ModelParams) -> Result<f64> {
    energy_functional_points(q.positions(), q.metric(), params)
}

pub fn energy_functional_points(points: &[Point], metric: Metric, params: &ModelParams) -> Result<f64> {
    check_admissible(points, metric, params)?;
    Ok(kac_energy(points, metric, params, HamiltonianForm::Functional)? - params.lambda * points.len() as f64)
}

/// Energy in the form selected by `params.form`, evaluated on the grid.
pub fn energy(points: &[Point], metric: Metric, params: &ModelParams) -> Result<f64> {
    check_admissible(points, metric, params)?;
    Ok(kac_energy(points, metric, params, params.form)? - params.lambda * points.len() as f64)
}

/// `H(q | q_bar) = H(q + q_bar) - H(q_bar)`, integrated pointwise on one grid.
pub fn relative_energy(q: &[Point], q_bar: &[Point], metric: Metric, params: &ModelParams) -> Result<Energy> {
    relative_energy_form(q, q_bar, metric, params, params.form)
}

pub fn relative_energy_form(
    q: &[Point],
    q_bar: &[Point],
    metric: Metric,
    params: &ModelParams,
    form: HamiltonianForm,
) -> Result<Energy> {
    check_admissible(q, metric, params)?;
    check_admissible(q_bar, metric, params)?;
    if crosses_hard_core(q, q_bar, metric, params.hc_radius) {
        return Ok(Energy::HardCore);
    }
    let kernel = KacKernel::new(params);
    let chem = -params.lambda * q.len() as f64;
    if kernel.is_off() || q.is_empty() {
        return Ok(Energy::Finite(chem));
    }
    let grid = energy_grid(q, metric, params)?;
    let mut base = PowerField::new(grid);
    for p in q_bar {
        base.add(&kernel, p, 1.0);
    }
    let mut full = base.clone();
    for p in q {
        full.add(&kernel, p, 1.0);
    }
    let mut s = 0.0;
    for (a, b) in full.values.iter().zip(&base.values) {
        s += density_energy(form, a) - density_energy(form, b);
    }
    Ok(Energy::Finite(s * full.grid.weight() + chem))
}

/// `U(q, q_bar) = H(q + q_bar) - H(q) - H(q_bar)`, integrated pointwise on one grid.
pub fn interaction_energy(q: &[Point], q_bar: &[Point], metric: Metric, params: &ModelParams) -> Result<Energy> {
    check_admissible(q, metric, params)?;
    check_admissible(q_bar, metric, params)?;
    if crosses_hard_core(q, q_bar, metric, params.hc_radius) {
        return Ok(Energy::HardCore);
    }
    let kernel = KacKernel::new(params);
    if kernel.is_off() || q.is_empty() || q_bar.is_empty() {
        return Ok(Energy::Finite(0.0));
    }
    let grid = energy_grid(q.iter().chain(q_bar), metric, params)?;
    let mut fa = PowerField::new(grid.clone());
    let mut fb = PowerField::new(grid);
    for p in q {
        fa.add(&kernel, p, 1.0);
    }
    for p in q_bar {
        fb.add(&kernel, p, 1.0);
    }
    let mut s = 0.0;
    for (a, b) in fa.values.iter().zip(&fb.values) {
        if a[0] == 0.0 || b[0] == 0.0 {
            continue;
        }
        let mut ab = *a;
        for k in 0..4 {
            ab[k] += b[k];
        }
        s += density_energy(params.form, &ab) - density_energy(params.form, a) - density_energy(params.form, b);
    }
    Ok(Energy::Finite(s * fa.grid.weight()))
}

fn crosses_hard_core(q: &[Point], q_bar: &[Point], metric: Metric, r: f64) -> bool {
    if r <= 0.0 {
        return false;
    }
    let r2 = r * r;
    q.iter().any(|a| q_bar.iter().any(|b| metric.dist2(a, b) <= r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::KernelSpec;
    use crate::quadrature::GaussLegendre;

    fn radial_power_integral(p: &ModelParams, k: i32) -> f64 {
        // int J^k dr over R^d by radial Gauss-Legendre, independent of the grid code
        let kern = KacKernel::new(p);
        let rng = 1.0 / p.gamma;
        let surface = match p.d {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        surface
            * GaussLegendre::new(30).integrate(0.0, rng, |r| r.powi(p.d as i32 - 1) * kern.profile(r * r).powi(k))
    }

    #[test]
    fn single_particle_energy_matches_radial_oracle() {
        for d in 1..=3 {
            let mut p = ModelParams::new(d, 0.2, 0.0, 1.0, 0.7).unwrap();
            p.quad_factor = 16;
            let e = energy_functional_points(&[[0.37, -0.2, 0.11]], Metric::free(d), &p).unwrap();
            let want = -0.7 - 0.5 * radial_power_integral(&p, 2) + radial_power_integral(&p, 4) / 24.0;
            assert!(((e - want) / want).abs() < 1e-6, "d={d}: {e} vs {want}");
        }
    }

    #[test]
    fn kernel_integrates_to_one_on_grid() {
        for d in 1..=3 {
            let mut p = ModelParams::new(d, 0.25, 0.0, 1.0, 0.0).unwrap();
            p.quad_factor = 16;
            let kern = KacKernel::new(&p);
            let grid = energy_grid(&[[0.1, 0.2, 0.3]], Metric::free(d), &p).unwrap();
            let mut s = 0.0;
            grid.for_each_in_ball(&[0.1, 0.2, 0.3], kern.range(), |_, d2| s += kern.profile(d2));
            // the third derivative jumps at the support edge, so the lattice sum is O(h^4)
            assert!((s * grid.weight() - 1.0).abs() < 1e-5, "d={d}: {}", s * grid.weight() - 1.0);
        }
    }

    #[test]
    fn empty_configuration_has_zero_energy() {
        let p = ModelParams::new(2, 0.2, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(energy_functional_points(&[], Metric::free(2), &p).unwrap(), 0.0);
    }

    #[test]
    fn hard_core_across_sets_is_reported_distinctly() {
        let p = ModelParams::new(1, 0.2, 0.5, 1.0, 0.0).unwrap();
        let e = relative_energy(&[[0.0; 3]], &[[0.5, 0.0, 0.0]], Metric::free(1), &p).unwrap();
        assert_eq!(e, Energy::HardCore);
        assert_eq!(e.value(), f64::INFINITY);
    }

    #[test]
    fn kernel_off_leaves_chemical_term() {
        let mut p = ModelParams::new(1, 0.2, 0.0, 1.0, 0.3).unwrap();
        p.kernel = KernelSpec::Off;
        let e = energy(&[[0.0; 3], [1.0, 0.0, 0.0]], Metric::free(1), &p).unwrap();
        assert!((e + 0.6).abs() < 1e-15);
    }
}
