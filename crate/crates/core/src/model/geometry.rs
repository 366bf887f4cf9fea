use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};

/// Position in up to three dimensions; unused trailing coordinates are zero.
pub type Point = [f64; 3];

/// Euclidean distance, optionally with minimum-image wrapping on a cubic torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub d: usize,
    pub period: Option<f64>,
}

impl Metric {
    pub fn free(d: usize) -> Self {
        Metric { d, period: None }
    }

    #[inline]
    pub fn delta(&self, a: &Point, b: &Point) -> Point {
        let mut out = [0.0; 3];
        for k in 0..self.d {
            let mut x = a[k] - b[k];
            if let Some(l) = self.period {
                x -= l * (x / l).round();
            }
            out[k] = x;
        }
        out
    }

    #[inline]
    pub fn dist2(&self, a: &Point, b: &Point) -> f64 {
        let v = self.delta(a, b);
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    }

    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        self.dist2(a, b).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Box,
    Torus,
}

/// A cubic box `[0, side)^d` with a frozen exterior configuration, or a torus.
///
/// An optional region mask restricts the box to a union of `ell_plus` cubes; the
/// masked-out cubes then belong to the exterior.
#[derive(Debug, Clone)]
pub struct Domain {
    pub kind: DomainKind,
    pub d: usize,
    pub side: f64,
    pub cube_side: f64,
    pub cubes_per_axis: usize,
    allowed: Option<Vec<bool>>,
    boundary: Vec<Point>,
}

impl Domain {
    pub fn torus(params: &ModelParams, cubes_per_axis: usize) -> Result<Self> {
        Self::build(DomainKind::Torus, params, cubes_per_axis, Vec::new())
    }

    /// Box of `cubes_per_axis` `ell_plus` cubes per axis. Boundary particles
    /// farther than `2/gamma` from the box are dropped.
    pub fn boxed(params: &ModelParams, cubes_per_axis: usize, boundary: Vec<Point>) -> Result<Self> {
        Self::build(DomainKind::Box, params, cubes_per_axis, boundary)
    }

    /// Snaps an arbitrary side length to the nearest positive multiple of `ell_plus`.
    pub fn from_side(kind: DomainKind, params: &ModelParams, side: f64, boundary: Vec<Point>) -> Result<Self> {
        let lp = params.scales().ell_plus;
        let n = ((side / lp).round() as usize).max(1);
        Self::build(kind, params, n, boundary)
    }

    fn build(kind: DomainKind, params: &ModelParams, n: usize, boundary: Vec<Point>) -> Result<Self> {
        params.validate()?;
        if n == 0 {
            return Err(Error::param("side", "domain needs at least one ell_plus cube"));
        }
        let cube_side = params.scales().ell_plus;
        let mut dom = Domain {
            kind,
            d: params.d,
            side: n as f64 * cube_side,
            cube_side,
            cubes_per_axis: n,
            allowed: None,
            boundary: Vec::new(),
        };
        if kind == DomainKind::Torus && !boundary.is_empty() {
            return Err(Error::param("boundary", "a torus has no boundary configuration"));
        }
        dom.set_boundary(boundary, 2.0 * params.range())?;
        Ok(dom)
    }

    fn set_boundary(&mut self, boundary: Vec<Point>, keep: f64) -> Result<()> {
        let mut kept = Vec::with_capacity(boundary.len());
        for (i, p) in boundary.into_iter().enumerate() {
            if self.contains(&p) {
                return Err(Error::OutsideDomain(i));
            }
            if self.distance_to_box(&p) <= keep {
                kept.push(p);
            }
        }
        self.boundary = kept;
        Ok(())
    }

    /// Restricts the domain to the `ell_plus` cubes flagged in `allowed`
    /// (row-major over the cube grid). Boundary particles must avoid them.
    pub fn with_region(mut self, allowed: Vec<bool>) -> Result<Self> {
        if self.kind == DomainKind::Torus {
            return Err(Error::param("region", "region masks need a box domain"));
        }
        if allowed.len() != self.cube_count() {
            return Err(Error::param("region", "mask length does not match cube grid"));
        }
        if !allowed.iter().any(|&a| a) {
            return Err(Error::param("region", "mask selects no cube"));
        }
        self.allowed = Some(allowed);
        let b = std::mem::take(&mut self.boundary);
        for (i, p) in b.iter().enumerate() {
            if self.contains(p) {
                return Err(Error::OutsideDomain(i));
            }
        }
        self.boundary = b;
        Ok(self)
    }

    /// Replaces the boundary configuration; points must lie outside the allowed region.
    pub fn with_boundary(mut self, boundary: Vec<Point>, params: &ModelParams) -> Result<Self> {
        if self.kind == DomainKind::Torus && !boundary.is_empty() {
            return Err(Error::param("boundary", "a torus has no boundary configuration"));
        }
        self.set_boundary(boundary, 2.0 * params.range())?;
        Ok(self)
    }

    pub fn boundary(&self) -> &[Point] {
        &self.boundary
    }

    pub fn region(&self) -> Option<&[bool]> {
        self.allowed.as_deref()
    }

    pub fn metric(&self) -> Metric {
        Metric {
            d: self.d,
            period: (self.kind == DomainKind::Torus).then_some(self.side),
        }
    }

    pub fn cube_count(&self) -> usize {
        self.cubes_per_axis.pow(self.d as u32)
    }

    /// Flat index of the `ell_plus` cube holding `p`, if `p` is inside `[0, side)^d`.
    pub fn cube_of(&self, p: &Point) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.d {
            if !(p[k] >= 0.0 && p[k] < self.side) {
                return None;
            }
            let c = ((p[k] / self.cube_side) as usize).min(self.cubes_per_axis - 1);
            idx = idx * self.cubes_per_axis + c;
        }
        Some(idx)
    }

    pub fn cube_coords(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = flat;
        for k in (0..self.d).rev() {
            out[k] = rest % self.cubes_per_axis;
            rest /= self.cubes_per_axis;
        }
        out
    }

    /// Whether a particle may sit at `p` (inside the box and the region mask).
    pub fn contains(&self, p: &Point) -> bool {
        match self.cube_of(p) {
            None => false,
            Some(c) => self.allowed.as_ref().is_none_or(|a| a[c]),
        }
    }

    pub fn allowed_cubes(&self) -> Vec<usize> {
        (0..self.cube_count())
            .filter(|&c| self.allowed.as_ref().is_none_or(|a| a[c]))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.allowed_cubes().len() as f64 * self.cube_side.powi(self.d as i32)
    }

    fn distance_to_box(&self, p: &Point) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d {
            let x = if p[k] < 0.0 {
                -p[k]
            } else if p[k] > self.side {
                p[k] - self.side
            } else {
                0.0
            };
            s += x * x;
        }
        s.sqrt()
    }

    /// Canonical representative of `p` (wrapped into `[0, side)` on a torus).
    pub fn wrap(&self, p: &Point) -> Point {
        let mut out = *p;
        if self.kind == DomainKind::Torus {
            for x in out.iter_mut().take(self.d) {
                *x = x.rem_euclid(self.side);
                if *x >= self.side {
                    *x = 0.0;
                }
            }
        }
        out
    }

    /// Uniform point in the allowed region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let cubes = self.allowed_cubes();
        let cube = if self.allowed.is_some() {
            cubes[rng.random_range(0..cubes.len())]
        } else {
            usize::MAX
        };
        let mut p = [0.0; 3];
        if cube == usize::MAX {
            for x in p.iter_mut().take(self.d) {
                *x = rng.random::<f64>() * self.side;
            }
        } else {
            let c = self.cube_coords(cube);
            for k in 0..self.d {
                p[k] = (c[k] as f64 + rng.random::<f64>()) * self.cube_side;
            }
        }
        self.wrap(&p)
    }
}
