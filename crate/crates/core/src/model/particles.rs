use super::cell_index::CellIndex;
use super::geometry::{Domain, Metric, Point};
use super::kernel::KacKernel;
use super::params::ModelParams;
use crate::error::{Error, Result};

/// A finite, hard-core admissible particle configuration in a [`Domain`].
///
/// Two spatial hashes are kept in sync with the positions: one with cells of
/// side at least `R` (exclusion checks) and one with cells of side at least
/// `1/gamma` (kernel sums). The boundary configuration of a box domain has its
/// own static exclusion index.
#[derive(Debug, Clone)]
pub struct ParticleConfiguration {
    domain: Domain,
    hc_radius: f64,
    kernel: KacKernel,
    positions: Vec<Point>,
    hc_index: CellIndex,
    kac_index: CellIndex,
    boundary_index: CellIndex,
}

impl ParticleConfiguration {
    pub fn new(positions: Vec<Point>, domain: Domain, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if params.d != domain.d {
            return Err(Error::param("d", "parameters and domain disagree on dimension"));
        }
        let metric = domain.metric();
        let positions: Vec<Point> = positions.iter().map(|p| domain.wrap(p)).collect();
        for (i, p) in positions.iter().enumerate() {
            if !domain.contains(p) {
                return Err(Error::OutsideDomain(i));
            }
        }
        let r = params.hc_radius;
        let hc_cell = r.max(params.range() / 16.0);
        let boundary_index = CellIndex::build(Metric::free(domain.d), hc_cell, domain.boundary());
        let mut cfg = ParticleConfiguration {
            hc_radius: r,
            kernel: KacKernel::new(params),
            hc_index: CellIndex::new(metric, hc_cell),
            kac_index: CellIndex::new(metric, params.range()),
            boundary_index,
            domain,
            positions: Vec::with_capacity(positions.len()),
        };
        for (i, p) in positions.into_iter().enumerate() {
            if let Some(j) = cfg.overlap_at(&p, None) {
                return Err(Error::HardCoreOverlap(j, i));
            }
            cfg.push_unchecked(p);
        }
        Ok(cfg)
    }

    pub fn empty(domain: Domain, params: &ModelParams) -> Result<Self> {
        Self::new(Vec::new(), domain, params)
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn metric(&self) -> Metric {
        self.domain.metric()
    }

    pub fn hc_radius(&self) -> f64 {
        self.hc_radius
    }

    /// First stored particle (or `usize::MAX` for a boundary particle) within
    /// distance `<= R` of `p`, ignoring particle `skip`.
    pub fn overlap_at(&self, p: &Point, skip: Option<usize>) -> Option<usize> {
        if self.hc_radius <= 0.0 {
            return None;
        }
        let r2 = self.hc_radius * self.hc_radius;
        let metric = self.metric();
        let mut hit = None;
        self.hc_index.for_each_near(p, |j| {
            if hit.is_none() && Some(j) != skip && metric.dist2(p, &self.positions[j]) <= r2 {
                hit = Some(j);
            }
        });
        if hit.is_some() {
            return hit;
        }
        let free = Metric::free(self.domain.d);
        let b = self.domain.boundary();
        self.boundary_index.for_each_near(p, |j| {
            if hit.is_none() && free.dist2(p, &b[j]) <= r2 {
                hit = Some(usize::MAX);
            }
        });
        hit
    }

    fn push_unchecked(&mut self, p: Point) {
        let id = self.positions.len();
        self.hc_index.push(id, &p);
        self.kac_index.push(id, &p);
        self.positions.push(p);
    }

    /// Adds a particle, rejecting positions outside the domain or overlapping others.
    pub fn insert(&mut self, p: Point) -> Result<usize> {
        let p = self.domain.wrap(&p);
        if !self.domain.contains(&p) {
            return Err(Error::OutsideDomain(self.positions.len()));
        }
        if let Some(j) = self.overlap_at(&p, None) {
            return Err(Error::HardCoreOverlap(j, self.positions.len()));
        }
        self.push_unchecked(p);
        Ok(self.positions.len() - 1)
    }

    /// Removes particle `i`; the last particle takes its id.
    pub fn remove(&mut self, i: usize) -> Point {
        self.hc_index.swap_remove(i);
        self.kac_index.swap_remove(i);
        self.positions.swap_remove(i)
    }

    pub fn move_particle(&mut self, i: usize, p: Point) -> Result<()> {
        let p = self.domain.wrap(&p);
        if !self.domain.contains(&p) {
            return Err(Error::OutsideDomain(i));
        }
        if let Some(j) = self.overlap_at(&p, Some(i)) {
            return Err(Error::HardCoreOverlap(j, i));
        }
        self.hc_index.relocate(i, &p);
        self.kac_index.relocate(i, &p);
        self.positions[i] = p;
        Ok(())
    }

    /// `rho_gamma(r; q)`, summed over particles found through the Kac-range hash.
    pub fn local_density(&self, r: &Point) -> f64 {
        if self.kernel.is_off() {
            return 0.0;
        }
        let metric = self.metric();
        let mut s = 0.0;
        self.kac_index.for_each_near(r, |j| {
            let c = self.kernel.centre(&self.positions[j]);
            s += self.kernel.profile(metric.dist2(r, &c));
        });
        s
    }

    /// Consistency of both hashes with the stored positions.
    pub fn audit_index(&self) -> bool {
        self.hc_index.audit(&self.positions) && self.kac_index.audit(&self.positions)
    }

    pub fn admissible(&self) -> bool {
        hardcore_admissible(&self.positions, self.hc_radius, self.metric())
    }
}

/// True iff all pairwise distances exceed `radius`.
pub fn hardcore_admissible(points: &[Point], radius: f64, metric: Metric) -> bool {
    pair_violations(points, radius, metric).is_empty()
}

/// Pairs `(i, j)`, `i < j`, at distance `<= radius`.
pub fn pair_violations(points: &[Point], radius: f64, metric: Metric) -> Vec<(usize, usize)> {
    if radius <= 0.0 || points.len() < 2 {
        return Vec::new();
    }
    let idx = CellIndex::build(metric, radius, points);
    let r2 = radius * radius;
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        idx.for_each_near(p, |j| {
            if j > i && metric.dist2(p, &points[j]) <= r2 {
                out.push((i, j));
            }
        });
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometry::DomainKind;

    fn params() -> ModelParams {
        ModelParams::new(2, 0.1, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn distance_exactly_r_is_inadmissible() {
        let m = Metric::free(2);
        assert!(!hardcore_admissible(&[[0.0; 3], [0.5, 0.0, 0.0]], 0.5, m));
        assert!(hardcore_admissible(&[[0.0; 3], [0.5 * (1.0 + 1e-9), 0.0, 0.0]], 0.5, m));
        assert!(hardcore_admissible(&[], 0.5, m));
        assert!(hardcore_admissible(&[[1.0; 3]], 0.5, m));
    }

    #[test]
    fn constructor_and_mutators_guard_exclusion() {
        let p = params();
        let dom = Domain::from_side(DomainKind::Torus, &p, 40.0, vec![]).unwrap();
        assert!(ParticleConfiguration::new(vec![[1.0, 1.0, 0.0], [1.3, 1.0, 0.0]], dom.clone(), &p).is_err());
        let mut q = ParticleConfiguration::new(vec![[1.0, 1.0, 0.0]], dom, &p).unwrap();
        assert!(q.insert([1.2, 1.2, 0.0]).is_err());
        let id = q.insert([3.0, 3.0, 0.0]).unwrap();
        assert!(q.move_particle(id, [1.4, 1.0, 0.0]).is_err());
        q.move_particle(id, [1.6, 1.0, 0.0]).unwrap();
        assert!(q.audit_index() && q.admissible());
    }

    #[test]
    fn local_density_of_single_particle_is_peak() {
        let p = params();
        let dom = Domain::from_side(DomainKind::Torus, &p, 40.0, vec![]).unwrap();
        let q = ParticleConfiguration::new(vec![[5.0, 5.0, 0.0]], dom.clone(), &p).unwrap();
        let peak = 0.01 * 4.0 / std::f64::consts::PI;
        assert!((q.local_density(&[5.0, 5.0, 0.0]) - peak).abs() < 1e-15);
        let e = ParticleConfiguration::empty(dom, &p).unwrap();
        assert_eq!(e.local_density(&[1.0, 1.0, 0.0]), 0.0);
    }
}
