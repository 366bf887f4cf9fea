//! Effective Hamiltonian for occupation numbers of `ell_minus` cubes.
//!
//! Integrating out the positions inside each cube gives
//! `h(rho | q_bar) = -sum log(ell^{d n_x} / n_x!) - sum log Z_{x,q_bar} +
//! beta h0(rho | rho_bar) + h^p + h^c`, where `h0` is the multibody energy
//! with cube-averaged potentials, `Z_{x,q_bar}` the fraction of the cube not
//! excluded by boundary particles, and `h^p = -log E0(e^{-beta dH} 1_hc)` the
//! correction from positions inside cubes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{e_lambda, MeanFieldSolution};
use crate::model::coarse::box_integral;
use crate::model::energy::{accumulate, density_energy, relative_energy_form, Energy, Powers};
use crate::model::{
    cell_of, hardcore_admissible, Cell, CubeAverageTable, HamiltonianForm, KacKernel, Metric, ModelParams, Point,
};
use crate::quadrature::GaussLegendre;

/// Default outer resolution of the admissible-volume estimate.
pub const ADMISSIBLE_RESOLUTION: usize = 64;
/// Per-particle bound on rejection-sampling attempts.
pub const MAX_TRIES: usize = 10_000;
/// Largest tolerated overall rejection fraction of the reference sampler.
pub const MAX_REJECTION: f64 = 0.999;

/// Occupation numbers of `ell_minus` cubes, keyed by integer cube coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DensityConfig {
    pub counts: BTreeMap<Cell, u32>,
}

impl DensityConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(pairs: impl IntoIterator<Item = (Cell, u32)>) -> Self {
        let mut c = Self::new();
        for (cell, n) in pairs {
            c.set(cell, n);
        }
        c
    }

    pub fn from_points(points: &[Point], d: usize, ell: f64) -> Self {
        let mut c = Self::new();
        for p in points {
            *c.counts.entry(cell_of(p, d, ell)).or_insert(0) += 1;
        }
        c
    }

    pub fn set(&mut self, cell: Cell, n: u32) {
        self.counts.insert(cell, n);
    }

    pub fn get(&self, cell: &Cell) -> u32 {
        self.counts.get(cell).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&n| n as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Cell, &u32)> {
        self.counts.iter()
    }
}

/// Mean with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Admissible volume of one boundary cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryFactor {
    pub cell: Cell,
    /// `|C_x^{q_bar}|`.
    pub volume: f64,
    /// `ell_minus^d`.
    pub cube_volume: f64,
}

impl BoundaryFactor {
    /// `log Z_{x,q_bar} = n log(|C_x^{q_bar}| / ell^d)`; zero for `n = 0`.
    pub fn log_z(&self, n: u32) -> f64 {
        if n == 0 {
            0.0
        } else {
            n as f64 * (self.volume / self.cube_volume).ln()
        }
    }
}

pub(crate) fn cube_lo(cell: &Cell, d: usize, ell: f64) -> Point {
    let mut lo = [0.0; 3];
    for k in 0..d {
        lo[k] = cell[k] as f64 * ell;
    }
    lo
}

pub(crate) fn dist2_to_cube(p: &Point, lo: &Point, ell: f64, d: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        let x = p[k];
        let e = if x < lo[k] {
            lo[k] - x
        } else if x > lo[k] + ell {
            x - lo[k] - ell
        } else {
            0.0
        };
        s += e * e;
    }
    s
}

/// Measure of `{r in C_x : |r - q_bar_i| > R for all i}`.
///
/// The last axis is integrated exactly (union of excluded chords); outer axes
/// use midpoint sums at `resolution` and twice that, combined by Richardson
/// extrapolation.
pub fn admissible_volume(cell: &Cell, ell: f64, d: usize, q_bar: &[Point], hc_radius: f64, resolution: usize) -> Result<f64> {
    if resolution < 32 {
        return Err(Error::param("resolution", "needs at least 32 points per axis"));
    }
    let lo = cube_lo(cell, d, ell);
    let r2 = hc_radius * hc_radius;
    let near: Vec<Point> = q_bar
        .iter()
        .copied()
        .filter(|p| hc_radius > 0.0 && dist2_to_cube(p, &lo, ell, d) < r2)
        .collect();
    if near.is_empty() {
        return Ok(ell.powi(d as i32));
    }
    if d == 1 {
        return Ok(chord_free_length(&near, &lo, ell, d, hc_radius, &mut [0.0; 3]));
    }
    let coarse = midpoint_volume(&near, &lo, ell, d, hc_radius, resolution);
    let fine = midpoint_volume(&near, &lo, ell, d, hc_radius, 2 * resolution);
    Ok(((4.0 * fine - coarse) / 3.0).clamp(0.0, ell.powi(d as i32)))
}

fn midpoint_volume(near: &[Point], lo: &Point, ell: f64, d: usize, radius: f64, n: usize) -> f64 {
    let h = ell / n as f64;
    let outer = d - 1;
    let mut r = [0.0; 3];
    let mut total = 0.0;
    for idx in 0..n.pow(outer as u32) {
        let mut rest = idx;
        for k in (0..outer).rev() {
            r[k] = lo[k] + ((rest % n) as f64 + 0.5) * h;
            rest /= n;
        }
        total += chord_free_length(near, lo, ell, d, radius, &mut r);
    }
    total * h.powi(outer as i32)
}

/// Length of the last-axis segment of the cube at outer coordinates `r` not
/// covered by any exclusion ball.
fn chord_free_length(near: &[Point], lo: &Point, ell: f64, d: usize, radius: f64, r: &mut Point) -> f64 {
    let axis = d - 1;
    let (a, b) = (lo[axis], lo[axis] + ell);
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    for p in near {
        let mut t = radius * radius;
        for k in 0..axis {
            t -= (r[k] - p[k]).powi(2);
        }
        if t > 0.0 {
            let s = t.sqrt();
            let (x, y) = ((p[axis] - s).max(a), (p[axis] + s).min(b));
            if x < y {
                cuts.push((x, y));
            }
        }
    }
    cuts.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (x, y) in cuts {
        match cur {
            Some((cx, cy)) if x <= cy => cur = Some((cx, cy.max(y))),
            Some((cx, cy)) => {
                covered += cy - cx;
                cur = Some((x, y));
            }
            None => cur = Some((x, y)),
        }
    }
    if let Some((cx, cy)) = cur {
        covered += cy - cx;
    }
    ell - covered
}

/// Boundary factors of the cubes of `rho` that boundary particles reach.
pub fn boundary_factors(rho: &DensityConfig, q_bar: &[Point], params: &ModelParams, resolution: usize) -> Result<Vec<BoundaryFactor>> {
    let ell = params.scales().ell_minus;
    let d = params.d;
    let mut out = Vec::new();
    for (cell, _) in rho.iter() {
        let volume = admissible_volume(cell, ell, d, q_bar, params.hc_radius, resolution)?;
        let cube_volume = ell.powi(d as i32);
        if volume < cube_volume {
            out.push(BoundaryFactor {
                cell: *cell,
                volume,
                cube_volume,
            });
        }
    }
    Ok(out)
}

/// `-sum_x log(ell^{d n_x} / n_x!)` with exact log-factorials.
pub fn entropy_term(rho: &DensityConfig, cube_volume: f64) -> f64 {
    rho.iter()
        .map(|(_, &n)| {
            let log_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
            -(n as f64 * cube_volume.ln() - log_fact)
        })
        .sum()
}

/// Coarse-grained model: parameters, metric and the cube-averaged kernel table.
#[derive(Debug, Clone)]
pub struct CoarseModel {
    pub params: ModelParams,
    pub metric: Metric,
    table: CubeAverageTable,
}

impl CoarseModel {
    pub fn new(params: &ModelParams, metric: Metric, table: CubeAverageTable) -> Result<Self> {
        params.validate()?;
        let key = CubeAverageTable::key_for(params);
        if table.key != key {
            return Err(Error::MissingTable(format!("table `{}` does not match `{key}`", table.key)));
        }
        let s = params.scales();
        if let Some(l) = metric.period {
            let cells = l / s.ell_minus;
            if (cells - cells.round()).abs() > 1e-9 * cells || l <= 2.0 * s.range {
                return Err(Error::param("period", "torus side must be a multiple of ell_minus beyond twice the range"));
            }
        }
        Ok(CoarseModel {
            params: *params,
            metric,
            table,
        })
    }

    /// Builds or loads the kernel table (see [`CubeAverageTable::load_or_build`]).
    pub fn build(params: &ModelParams, metric: Metric, cache_dir: Option<&Path>) -> Result<Self> {
        let table = CubeAverageTable::load_or_build(params, cache_dir)?;
        Self::new(params, metric, table)
    }

    pub fn table(&self) -> &CubeAverageTable {
        &self.table
    }

    pub fn ell(&self) -> f64 {
        self.params.scales().ell_minus
    }

    pub fn cube_volume(&self) -> f64 {
        self.ell().powi(self.params.d as i32)
    }

    pub fn counts_of(&self, points: &[Point]) -> DensityConfig {
        DensityConfig::from_points(points, self.params.d, self.ell())
    }

    /// `h0(rho | rho_bar)`: the multibody energy of `rho` relative to `rho_bar`
    /// with cube-averaged potentials, including `-lambda sum n_x`.
    pub fn h0(&self, rho: &DensityConfig, rho_bar: &DensityConfig) -> Result<f64> {
        let d = self.params.d;
        let chem = -self.params.lambda * rho.total() as f64;
        if self.params.kernel_off() || rho.total() == 0 {
            return Ok(chem);
        }
        let occupied = |c: &DensityConfig| c.iter().filter(|(_, &n)| n > 0).map(|(c, &n)| (*c, n)).collect::<Vec<_>>();
        let inner = occupied(rho);
        let outer = occupied(rho_bar);
        let (lo, dims, period) = match self.metric.period {
            Some(l) => {
                let p = (l / self.table.h).round() as i64;
                let mut dims = [1usize; 3];
                for x in dims.iter_mut().take(d) {
                    *x = p as usize;
                }
                ([0i64; 3], dims, Some(p))
            }
            None => {
                let mut lo = [i64::MAX; 3];
                let mut hi = [i64::MIN; 3];
                for (c, _) in inner.iter().chain(&outer) {
                    let (a, b) = self.table.stencil(c);
                    for k in 0..d {
                        lo[k] = lo[k].min(a[k]);
                        hi[k] = hi[k].max(b[k]);
                    }
                }
                let mut dims = [1usize; 3];
                for k in 0..d {
                    dims[k] = (hi[k] - lo[k]) as usize;
                }
                for k in d..3 {
                    lo[k] = 0;
                }
                (lo, dims, None)
            }
        };
        let len = dims[0] * dims[1] * dims[2];
        let index = |g: [i64; 3]| -> usize {
            let mut flat = 0usize;
            for k in 0..3 {
                let mut v = g[k] - lo[k];
                if let (Some(p), true) = (period, k < d) {
                    v = v.rem_euclid(p);
                }
                flat = flat * dims[k] + v as usize;
            }
            flat
        };
        let mut base = vec![[0.0f64; 4]; len];
        let mut touched = vec![false; len];
        let mut add = |field: &mut Vec<Powers>, cells: &[(Cell, u32)], mark: bool| {
            for (c, n) in cells {
                self.table.for_each_node(c, |g, v| {
                    let i = index(g);
                    let p = &mut field[i];
                    let mut one = [0.0; 4];
                    accumulate(&mut one, v, 1.0);
                    for k in 0..4 {
                        p[k] += *n as f64 * one[k];
                    }
                    if mark {
                        touched[i] = true;
                    }
                });
            }
        };
        add(&mut base, &outer, false);
        let mut full = base.clone();
        add(&mut full, &inner, true);
        let mut s = 0.0;
        for i in 0..len {
            if touched[i] {
                s += density_energy(HamiltonianForm::Multibody, &full[i]) - density_energy(HamiltonianForm::Multibody, &base[i]);
            }
        }
        Ok(s * self.table.h.powi(d as i32) + chem)
    }

    /// `H_gamma(q | q_bar)` in the multibody form, evaluated on the grid.
    pub fn h_gamma(&self, q: &[Point], q_bar: &[Point]) -> Result<Energy> {
        relative_energy_form(q, q_bar, self.metric, &self.params, HamiltonianForm::Multibody)
    }

    /// `dH = H_gamma(q | q_bar) - h0(counts(q) | counts(q_bar))`.
    pub fn delta_h(&self, q: &[Point], q_bar: &[Point]) -> Result<f64> {
        let h = match self.h_gamma(q, q_bar)? {
            Energy::Finite(h) => h,
            Energy::HardCore => return Err(Error::param("q", "overlaps the boundary configuration")),
        };
        Ok(h - self.h0(&self.counts_of(q), &self.counts_of(q_bar))?)
    }

    fn reference_sampler(&self, rho: &DensityConfig, q_bar: &[Point]) -> ReferenceSampler {
        let d = self.params.d;
        let ell = self.ell();
        let r = self.params.hc_radius;
        let cubes = rho
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(c, &n)| {
                let lo = cube_lo(c, d, ell);
                let near: Vec<Point> = q_bar
                    .iter()
                    .copied()
                    .filter(|p| r > 0.0 && dist2_to_cube(p, &lo, ell, d) < r * r)
                    .collect();
                (lo, n, near)
            })
            .collect();
        ReferenceSampler {
            d,
            ell,
            radius: r,
            cubes,
            tries: 0,
            placed: 0,
        }
    }

    /// `E0(f)` under independent uniform positions in each cube, conditioned
    /// to keep distance `> R` from `q_bar`.
    pub fn reference_expectation(
        &self,
        rho: &DensityConfig,
        q_bar: &[Point],
        mut f: impl FnMut(&[Point]) -> f64,
        budget: usize,
        seed: u64,
    ) -> Result<Estimate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = self.reference_sampler(rho, q_bar);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut q = Vec::new();
        for _ in 0..budget.max(2) {
            sampler.draw(&mut rng, &mut q)?;
            let v = f(&q);
            sum += v;
            sum2 += v * v;
        }
        sampler.check()?;
        Ok(mean_estimate(sum, sum2, budget.max(2)))
    }

    /// Observed rejection fraction of the reference sampler per cube, an
    /// estimate of `1 - |C_x^{q_bar}| / ell^d`.
    pub fn rejection_fraction(&self, cell: &Cell, q_bar: &[Point], draws: usize, seed: u64) -> Result<f64> {
        let rho = DensityConfig::from_counts([(*cell, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = self.reference_sampler(&rho, q_bar);
        let mut q = Vec::new();
        for _ in 0..draws {
            sampler.draw(&mut rng, &mut q)?;
        }
        Ok(1.0 - sampler.placed as f64 / sampler.tries as f64)
    }

    /// Weight `e^{-beta dH} 1_{admissible}` of a reference sample.
    fn hp_weight(&self, q: &[Point], q_bar: &[Point], h0: f64) -> Result<f64> {
        if !hardcore_admissible(q, self.params.hc_radius, self.metric) {
            return Ok(0.0);
        }
        match self.h_gamma(q, q_bar)? {
            Energy::HardCore => Ok(0.0),
            Energy::Finite(h) => Ok((-self.params.beta * (h - h0)).exp()),
        }
    }

    /// `h^p(rho | q_bar) = -log E0(e^{-beta dH} e^{-beta H_hc})` by direct
    /// sampling; the error bar is the delta-method propagation.
    pub fn h_p_direct(&self, rho: &DensityConfig, q_bar: &[Point], budget: usize, seed: u64) -> Result<Estimate> {
        if self.params.beta == 0.0 {
            return Ok(Estimate {
                value: 0.0,
                stderr: 0.0,
                samples: 0,
            });
        }
        let h0 = self.h0(rho, &self.counts_of(q_bar))?;
        let mut failure = None;
        let est = self.reference_expectation(
            rho,
            q_bar,
            |q| match self.hp_weight(q, q_bar, h0) {
                Ok(w) => w,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            budget,
            seed,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let est = est?;
        if !(est.value > 2.0 * est.stderr) || est.value <= 0.0 {
            return Err(Error::InsufficientStatistics(format!(
                "E0 weight mean {} with standard error {} over {} samples",
                est.value, est.stderr, est.samples
            )));
        }
        Ok(Estimate {
            value: -est.value.ln(),
            stderr: est.stderr / est.value,
            samples: est.samples,
        })
    }

    /// Tilted expectation `E0(w f) / E0(w)` with `w = e^{-beta dH} 1_hc`;
    /// the error bar accounts for the covariance of numerator and denominator.
    pub fn tilted_expectation(
        &self,
        rho: &DensityConfig,
        q_bar: &[Point],
        f: impl Fn(&[Point]) -> f64,
        budget: usize,
        seed: u64,
    ) -> Result<Estimate> {
        let h0 = self.h0(rho, &self.counts_of(q_bar))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = self.reference_sampler(rho, q_bar);
        let n = budget.max(2);
        let (mut sw, mut swf, mut sww, mut swfwf, mut swwf) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut q = Vec::new();
        for _ in 0..n {
            sampler.draw(&mut rng, &mut q)?;
            let w = self.hp_weight(&q, q_bar, h0)?;
            let wf = w * f(&q);
            sw += w;
            swf += wf;
            sww += w * w;
            swfwf += wf * wf;
            swwf += w * wf;
        }
        sampler.check()?;
        let nf = n as f64;
        let (mw, mwf) = (sw / nf, swf / nf);
        if mw <= 0.0 {
            return Err(Error::InsufficientStatistics(format!("all {n} reference weights vanish")));
        }
        let var_w = (sww / nf - mw * mw) * nf / (nf - 1.0);
        let var_wf = (swfwf / nf - mwf * mwf) * nf / (nf - 1.0);
        let cov = (swwf / nf - mw * mwf) * nf / (nf - 1.0);
        let ratio = mwf / mw;
        let var = (var_wf - 2.0 * ratio * cov + ratio * ratio * var_w) / (mw * mw * nf);
        Ok(Estimate {
            value: ratio,
            stderr: var.max(0.0).sqrt(),
            samples: n,
        })
    }

    /// Evaluates the full effective Hamiltonian, `hp` supplying `h^p`.
    pub fn assemble_h(
        &self,
        rho: &DensityConfig,
        q_bar: &[Point],
        hp: &dyn Fn(&DensityConfig) -> Result<f64>,
        hc: Option<f64>,
    ) -> Result<HTerms> {
        let entropy = entropy_term(rho, self.cube_volume());
        let factors = boundary_factors(rho, q_bar, &self.params, ADMISSIBLE_RESOLUTION)?;
        let boundary: f64 = factors.iter().map(|f| f.log_z(rho.get(&f.cell))).sum();
        let h0 = self.h0(rho, &self.counts_of(q_bar))?;
        let hp = hp(rho)?;
        let total = entropy - boundary + self.params.beta * h0 + hp + hc.unwrap_or(0.0);
        Ok(HTerms {
            entropy,
            boundary,
            h0,
            hp,
            hc,
            total,
        })
    }
}

/// The parts of `h(rho | q_bar)`; `total = entropy - boundary + beta h0 + hp + hc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HTerms {
    pub entropy: f64,
    /// `sum log Z_{x,q_bar}`.
    pub boundary: f64,
    pub h0: f64,
    pub hp: f64,
    pub hc: Option<f64>,
    pub total: f64,
}

pub(crate) fn mean_estimate(sum: f64, sum2: f64, n: usize) -> Estimate {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Estimate {
        value: mean,
        stderr: (var / nf).sqrt(),
        samples: n,
    }
}

struct ReferenceSampler {
    d: usize,
    ell: f64,
    radius: f64,
    cubes: Vec<(Point, u32, Vec<Point>)>,
    tries: u64,
    placed: u64,
}

impl ReferenceSampler {
    fn draw<R: Rng>(&mut self, rng: &mut R, q: &mut Vec<Point>) -> Result<()> {
        q.clear();
        let r2 = self.radius * self.radius;
        for (lo, n, near) in &self.cubes {
            for _ in 0..*n {
                let mut ok = false;
                for _ in 0..MAX_TRIES {
                    self.tries += 1;
                    let mut p = [0.0; 3];
                    for k in 0..self.d {
                        p[k] = lo[k] + rng.random::<f64>() * self.ell;
                    }
                    if near.iter().all(|b| (0..self.d).map(|k| (p[k] - b[k]).powi(2)).sum::<f64>() > r2) {
                        q.push(p);
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    return Err(Error::Numerical(format!(
                        "no admissible position in the cube at {lo:?} after {MAX_TRIES} tries"
                    )));
                }
                self.placed += 1;
            }
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if self.tries > 0 {
            let rate = 1.0 - self.placed as f64 / self.tries as f64;
            if rate > MAX_REJECTION {
                return Err(Error::Numerical(format!("reference rejection rate {rate} exceeds {MAX_REJECTION}")));
            }
        }
        Ok(())
    }
}

/// Surface term `I^pm(L)` of the region `L` (a union of `ell_plus` cubes in an
/// `n^d` block at the origin; `None` is all of space) for phase `sign`.
pub fn surface_term(region: Option<&[bool]>, n: usize, sign: i8, params: &ModelParams, sol: &MeanFieldSolution) -> Result<f64> {
    let Some(mask) = region else {
        return Ok(0.0);
    };
    let d = params.d;
    if mask.len() != n.pow(d as u32) {
        return Err(Error::param("region", "mask length does not match the cube block"));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::param("sign", "must be +1 or -1"));
    }
    if params.kernel_off() {
        return Err(Error::param("kernel", "the surface term needs the Kac kernel"));
    }
    let rho = if sign > 0 { sol.rho_plus } else { sol.rho_minus };
    let lambda = sol.lambda_coex;
    let s = params.scales();
    let side = s.ell_plus;
    let range = s.range;
    let kernel = KacKernel::new(params);
    let cubes: Vec<Point> = (0..mask.len())
        .filter(|&x| mask[x])
        .map(|x| {
            let mut lo = [0.0; 3];
            let mut rest = x;
            for k in (0..d).rev() {
                lo[k] = (rest % n) as f64 * side;
                rest /= n;
            }
            lo
        })
        .collect();
    let nodes = axis_rule(n, side, range);
    let e_full = e_lambda(rho, lambda);
    let mut total = 0.0;
    let mut idx = [0usize; 3];
    let count = nodes.len().pow(d as u32);
    for flat in 0..count {
        let mut rest = flat;
        for k in (0..d).rev() {
            idx[k] = rest % nodes.len();
            rest /= nodes.len();
        }
        let mut r = [0.0; 3];
        let mut w = 1.0;
        for k in 0..d {
            r[k] = nodes[idx[k]].0;
            w *= nodes[idx[k]].1;
        }
        let inside_mass: f64 = cubes
            .iter()
            .filter(|lo| dist2_to_cube(&r, lo, side, d) < range * range)
            .map(|lo| box_integral(&kernel, &r, lo, side))
            .sum();
        let phi = rho * (1.0 - inside_mass);
        let in_region = cubes.iter().any(|lo| (0..d).all(|k| r[k] >= lo[k] && r[k] < lo[k] + side));
        let f = if in_region {
            -e_lambda(phi, lambda)
        } else {
            e_full - e_lambda(phi, lambda)
        };
        total += w * f;
    }
    Ok(total)
}

/// Composite Gauss rule on `[-range, n side + range]` with breaks at cube
/// edges and panels no longer than a quarter range.
fn axis_rule(n: usize, side: f64, range: f64) -> Vec<(f64, f64)> {
    let mut breaks = vec![-range];
    for i in 0..=n {
        breaks.push(i as f64 * side);
    }
    breaks.push(n as f64 * side + range);
    let gl = GaussLegendre::cached(8);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let panels = ((w[1] - w[0]) / (0.25 * range)).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + p as f64 * h;
            out.extend(gl.mapped(a, a + h));
        }
    }
    out
}
