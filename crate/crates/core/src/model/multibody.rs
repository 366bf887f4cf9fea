//! Exact multibody integrals `J^(n)(q_1..q_n) = int prod_k J_gamma(r, q_k) dr`.
//!
//! The integrand is supported on the intersection of the balls of radius
//! `1/gamma` around the centres. Integration is nested over axes: the last axis
//! is integrated with a Gauss rule exact for the polynomial integrand on the
//! chord, outer axes use composite Gauss rules on their exact ranges.

use super::geometry::{Metric, Point};
use super::kernel::KacKernel;
use super::params::ModelParams;
use super::particles::pair_violations;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Largest number of particles allowed within one interaction neighbourhood.
pub const NEIGHBOURHOOD_LIMIT: usize = 64;

/// Panels and order of the composite rules on outer axes.
#[derive(Debug, Clone, Copy)]
pub struct OuterRule {
    pub panels: usize,
    pub order: usize,
}

impl OuterRule {
    pub fn for_dimension(d: usize) -> Self {
        match d {
            1 => OuterRule { panels: 1, order: 1 },
            2 => OuterRule { panels: 32, order: 8 },
            _ => OuterRule { panels: 12, order: 8 },
        }
    }
}

/// Integral of the product of kernels centred at the (already effective) `centres`.
pub fn product_integral(kernel: &KacKernel, centres: &[Point], rule: OuterRule) -> f64 {
    if centres.is_empty() {
        return 0.0;
    }
    let rho = kernel.range();
    let radii = vec![rho; centres.len()];
    let mut r = [0.0; 3];
    integrate_axis(kernel, centres, &radii, 0, &mut r, rule)
}

fn integrate_axis(kernel: &KacKernel, centres: &[Point], radii: &[f64], axis: usize, r: &mut Point, rule: OuterRule) -> f64 {
    let d = kernel.d;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (c, &rad) in centres.iter().zip(radii) {
        lo = lo.max(c[axis] - rad);
        hi = hi.min(c[axis] + rad);
    }
    if lo >= hi {
        return 0.0;
    }
    if axis + 1 == d {
        let n = 3 * centres.len() + 1;
        let gl = GaussLegendre::cached(n.min(32));
        let mut s = 0.0;
        for (x, w) in gl.mapped(lo, hi) {
            r[axis] = x;
            let mut prod = 1.0;
            for c in centres {
                let mut d2 = 0.0;
                for k in 0..d {
                    d2 += (r[k] - c[k]).powi(2);
                }
                prod *= kernel.profile(d2);
            }
            s += w * prod;
        }
        return s;
    }
    let gl = GaussLegendre::cached(rule.order);
    let h = (hi - lo) / rule.panels as f64;
    let mut inner_radii = vec![0.0; radii.len()];
    let mut s = 0.0;
    for p in 0..rule.panels {
        let a = lo + h * p as f64;
        for (x, w) in gl.mapped(a, a + h) {
            let mut empty = false;
            for (k, c) in centres.iter().enumerate() {
                let t = radii[k] * radii[k] - (x - c[axis]).powi(2);
                if t <= 0.0 {
                    empty = true;
                    break;
                }
                inner_radii[k] = t.sqrt();
            }
            if empty {
                continue;
            }
            r[axis] = x;
            s += w * integrate_axis(kernel, centres, &inner_radii, axis + 1, r, rule);
        }
    }
    s
}

/// `J^(n)` of the given particles (true positions; kernel centres applied here).
pub fn multibody_integral(points: &[Point], metric: Metric, params: &ModelParams) -> f64 {
    let kernel = KacKernel::new(params);
    if kernel.is_off() || points.is_empty() {
        return 0.0;
    }
    let base = kernel.centre(&points[0]);
    let centres: Vec<Point> = points
        .iter()
        .map(|p| {
            let c = kernel.centre(p);
            let dv = metric.delta(&c, &base);
            [base[0] + dv[0], base[1] + dv[1], base[2] + dv[2]]
        })
        .collect();
    product_integral(&kernel, &centres, OuterRule::for_dimension(params.d))
}

/// `J^(n)` as the lattice sum `h^d sum_r prod_k J(r, q_k)` on the energy grid.
///
/// This is the exact pair/quadruple decomposition of the grid-quadrature
/// energy, so expansions built from it reproduce grid energies identically.
pub fn lattice_product_sum(points: &[Point], metric: Metric, params: &ModelParams) -> f64 {
    let kernel = KacKernel::new(params);
    if kernel.is_off() || points.is_empty() {
        return 0.0;
    }
    let h = params.scales().spacing;
    let base = kernel.centre(&points[0]);
    let centres: Vec<Point> = points
        .iter()
        .map(|p| {
            let c = kernel.centre(p);
            let dv = metric.delta(&c, &base);
            [base[0] + dv[0], base[1] + dv[1], base[2] + dv[2]]
        })
        .collect();
    let rho = kernel.range();
    let mut lo = [f64::NEG_INFINITY; 3];
    let mut hi = [f64::INFINITY; 3];
    for c in &centres {
        for k in 0..params.d {
            lo[k] = lo[k].max(c[k] - rho);
            hi[k] = hi[k].min(c[k] + rho);
        }
    }
    for k in params.d..3 {
        lo[k] = 0.0;
        hi[k] = 0.0;
    }
    if (0..params.d).any(|k| lo[k] >= hi[k]) {
        return 0.0;
    }
    let grid = super::grid::QuadGrid::window(params.d, h, &lo, &hi);
    let mut s = 0.0;
    for i in 0..grid.len() {
        let r = grid.node(i);
        let mut prod = 1.0;
        for c in &centres {
            let d2 = (r[0] - c[0]).powi(2) + (r[1] - c[1]).powi(2) + (r[2] - c[2]).powi(2);
            prod *= kernel.profile(d2);
            if prod == 0.0 {
                break;
            }
        }
        s += prod;
    }
    s * grid.weight()
}

/// Which index tuples enter the multibody sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexRule {
    /// All ordered tuples, coincident indices included; equals the functional form.
    All,
    /// Distinct indices only.
    Distinct,
}

/// `-lambda |q| - 1/2 sum J2 + 1/24 sum J4` with exact multibody integrals.
pub fn energy_multibody(points: &[Point], metric: Metric, params: &ModelParams, rule: IndexRule) -> Result<f64> {
    if let Some(&(i, j)) = pair_violations(points, params.hc_radius, metric).first() {
        return Err(Error::HardCoreOverlap(i, j));
    }
    let chem = -params.lambda * points.len() as f64;
    let kernel = KacKernel::new(params);
    if kernel.is_off() || points.is_empty() {
        return Ok(chem);
    }
    let n = points.len();
    let reach2 = (2.0 * kernel.range()).powi(2);
    let centres: Vec<Point> = points.iter().map(|p| kernel.centre(p)).collect();
    let near: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| metric.dist2(&centres[i], &centres[j]) < reach2).collect())
        .collect();
    for row in &near {
        let count = row.iter().filter(|&&b| b).count();
        if count > NEIGHBOURHOOD_LIMIT {
            return Err(Error::SizeGuard {
                count,
                limit: NEIGHBOURHOOD_LIMIT,
            });
        }
    }
    let integral = |idx: &[usize]| -> f64 {
        let pts: Vec<Point> = idx.iter().map(|&i| points[i]).collect();
        multibody_integral(&pts, metric, params)
    };
    let distinct = rule == IndexRule::Distinct;

    let mut pair = 0.0;
    for i in 0..n {
        if !distinct {
            pair += integral(&[i, i]);
        }
        for j in (i + 1)..n {
            if near[i][j] {
                pair += 2.0 * integral(&[i, j]);
            }
        }
    }

    // Sorted index multisets i <= j <= k <= l weighted by their orderings.
    let mut quad = 0.0;
    for i in 0..n {
        for j in i..n {
            if !near[i][j] || (distinct && j == i) {
                continue;
            }
            for k in j..n {
                if !near[i][k] || !near[j][k] || (distinct && k == j) {
                    continue;
                }
                for l in k..n {
                    if !near[i][l] || !near[j][l] || !near[k][l] || (distinct && l == k) {
                        continue;
                    }
                    let idx = [i, j, k, l];
                    quad += orderings(&idx) * integral(&idx);
                }
            }
        }
    }
    Ok(chem - 0.5 * pair + quad / 24.0)
}

/// Number of distinct orderings of a sorted 4-index multiset.
fn orderings(idx: &[usize; 4]) -> f64 {
    let mut denom = 1.0;
    let mut run = 1.0;
    for w in 1..4 {
        if idx[w] == idx[w - 1] {
            run += 1.0;
            denom *= run;
        } else {
            run = 1.0;
        }
    }
    24.0 / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_counts() {
        assert_eq!(orderings(&[0, 1, 2, 3]), 24.0);
        assert_eq!(orderings(&[0, 0, 1, 2]), 12.0);
        assert_eq!(orderings(&[0, 0, 1, 1]), 6.0);
        assert_eq!(orderings(&[0, 0, 0, 1]), 4.0);
        assert_eq!(orderings(&[2, 2, 2, 2]), 1.0);
    }

    #[test]
    fn pair_integral_matches_dense_convolution_in_1d() {
        let p = ModelParams::new(1, 0.25, 0.0, 1.0, 0.0).unwrap();
        let kern = KacKernel::new(&p);
        let a = [0.0; 3];
        let b = [2.3, 0.0, 0.0];
        let got = multibody_integral(&[a, b], Metric::free(1), &p);
        // fine composite rule on the overlap [b-4, a+4]
        let want = GaussLegendre::new(10).composite(-1.7, 4.0, 400, |x| {
            kern.profile(x * x) * kern.profile((x - 2.3) * (x - 2.3))
        });
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn far_pair_has_no_interaction() {
        let p = ModelParams::new(2, 0.25, 0.0, 1.0, 0.0).unwrap();
        let v = multibody_integral(&[[0.0; 3], [8.01, 0.0, 0.0]], Metric::free(2), &p);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn self_pair_matches_radial_power() {
        let p = ModelParams::new(2, 0.25, 0.0, 1.0, 0.0).unwrap();
        let kern = KacKernel::new(&p);
        let got = multibody_integral(&[[0.3, 0.1, 0.0]; 2], Metric::free(2), &p);
        let want = 2.0
            * std::f64::consts::PI
            * GaussLegendre::new(20).integrate(0.0, 4.0, |r| r * kern.profile(r * r).powi(2));
        assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
    }
}
