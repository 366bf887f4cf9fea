//! Single-site conditional measures of the coarse-grained model and the
//! Dobrushin coupling coefficients built from them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::transport::{vaserstein_1d, DiscreteDistribution};
use crate::effective_ham::{CoarseModel, DensityConfig};
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldSolution;
use crate::model::{Cell, Metric, Point};
use crate::stats::linear_fit;

/// Which pure phase the restricted ensemble is centred on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Plus,
    Minus,
}

/// Admissible occupation numbers `n_lo ..= n_hi` of one cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RestrictedWindow {
    pub n_lo: u32,
    pub n_hi: u32,
}

impl RestrictedWindow {
    pub fn new(n_lo: u32, n_hi: u32) -> Result<Self> {
        if n_lo > n_hi {
            return Err(Error::param("window", format!("empty range {n_lo}..={n_hi}")));
        }
        Ok(RestrictedWindow { n_lo, n_hi })
    }

    /// Counts `n` with `|n / cube_volume - center| <= zeta`. When no integer
    /// fits, the window collapses to the count nearest `center * cube_volume`.
    pub fn around(center: f64, zeta: f64, cube_volume: f64) -> Result<Self> {
        if !(center >= 0.0 && zeta >= 0.0 && cube_volume > 0.0) || !(center * cube_volume).is_finite() {
            return Err(Error::param("window", "centre, zeta and volume must be finite and non-negative"));
        }
        let lo = (cube_volume * (center - zeta)).ceil().max(0.0);
        let hi = (cube_volume * (center + zeta)).floor();
        if lo > hi {
            let n = (center * cube_volume).round() as u32;
            return Ok(RestrictedWindow { n_lo: n, n_hi: n });
        }
        Ok(RestrictedWindow {
            n_lo: lo as u32,
            n_hi: hi as u32,
        })
    }

    /// Window around the coexisting density of `phase`.
    pub fn for_phase(sol: &MeanFieldSolution, phase: Phase, zeta: f64, cube_volume: f64) -> Result<Self> {
        let center = match phase {
            Phase::Plus => sol.rho_plus,
            Phase::Minus => sol.rho_minus,
        };
        Self::around(center, zeta, cube_volume)
    }

    pub fn contains(&self, n: u32) -> bool {
        (self.n_lo..=self.n_hi).contains(&n)
    }

    pub fn len(&self) -> usize {
        (self.n_hi - self.n_lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `levels` evenly spaced counts including both endpoints, deduplicated.
    pub fn levels(&self, levels: usize) -> Vec<u32> {
        let k = levels.max(2);
        let mut out: Vec<u32> = (0..k)
            .map(|i| {
                let t = i as f64 / (k - 1) as f64;
                (self.n_lo as f64 + t * (self.n_hi - self.n_lo) as f64).round() as u32
            })
            .collect();
        out.dedup();
        out
    }
}

/// Energy `h(rho)` of occupation configurations, local in the sense that cubes
/// whose centres are farther apart than `reach` do not interact.
pub trait SiteEnergy: Sync {
    fn energy(&self, rho: &DensityConfig) -> Result<f64>;
    fn reach(&self) -> f64;
    fn metric(&self) -> Metric;
    fn ell(&self) -> f64;

    /// Distance between the centres of two cubes.
    fn cube_distance(&self, a: &Cell, b: &Cell) -> f64 {
        let m = self.metric();
        let (pa, pb) = (centre(a, m.d, self.ell()), centre(b, m.d, self.ell()));
        let v = m.delta(&pa, &pb);
        v[..m.d].iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn centre(c: &Cell, d: usize, ell: f64) -> Point {
    let mut p = [0.0; 3];
    for k in 0..d {
        p[k] = (c[k] as f64 + 0.5) * ell;
    }
    p
}

/// Extra term of the effective Hamiltonian supplied by the caller.
pub type TermProvider = Arc<dyn Fn(&DensityConfig) -> Result<f64> + Send + Sync>;

/// `h(rho | q_bar)` of a coarse model with optional `h^p` and `h^c` terms.
#[derive(Clone)]
pub struct EffectiveEnergy {
    pub model: CoarseModel,
    pub q_bar: Vec<Point>,
    /// `h^p`; zero when absent.
    pub hp: Option<TermProvider>,
    /// Extra interaction range of `hp` beyond the Kac range.
    pub hp_reach: f64,
    /// `h^c`; off when absent.
    pub hc: Option<TermProvider>,
}

impl EffectiveEnergy {
    pub fn new(model: CoarseModel, q_bar: Vec<Point>) -> Self {
        EffectiveEnergy {
            model,
            q_bar,
            hp: None,
            hp_reach: 0.0,
            hc: None,
        }
    }
}

impl std::fmt::Debug for EffectiveEnergy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveEnergy")
            .field("params", &self.model.params)
            .field("q_bar", &self.q_bar.len())
            .field("hp", &self.hp.is_some())
            .field("hc", &self.hc.is_some())
            .finish()
    }
}

impl SiteEnergy for EffectiveEnergy {
    fn energy(&self, rho: &DensityConfig) -> Result<f64> {
        let zero = |_: &DensityConfig| Ok(0.0);
        let hp: &dyn Fn(&DensityConfig) -> Result<f64> = match &self.hp {
            Some(f) => f.as_ref(),
            None => &zero,
        };
        let hc = match &self.hc {
            Some(f) => Some(f(rho)?),
            None => None,
        };
        Ok(self.model.assemble_h(rho, &self.q_bar, hp, hc)?.total)
    }

    fn reach(&self) -> f64 {
        let p = &self.model.params;
        let ell = self.model.ell();
        if p.kernel_off() && self.hp.is_none() && self.hc.is_none() {
            return 0.0;
        }
        2.0 * p.range() + p.hc_radius + (p.d as f64).sqrt() * ell + self.hp_reach
    }

    fn metric(&self) -> Metric {
        self.model.metric
    }

    fn ell(&self) -> f64 {
        self.model.ell()
    }
}

/// Energy given by a closure, for toy systems.
pub struct FnEnergy<F> {
    pub f: F,
    pub reach: f64,
    pub metric: Metric,
    pub ell: f64,
}

impl<F: Fn(&DensityConfig) -> Result<f64> + Sync> SiteEnergy for FnEnergy<F> {
    fn energy(&self, rho: &DensityConfig) -> Result<f64> {
        (self.f)(rho)
    }
    fn reach(&self) -> f64 {
        self.reach
    }
    fn metric(&self) -> Metric {
        self.metric
    }
    fn ell(&self) -> f64 {
        self.ell
    }
}

/// `p(n_x | rest) ∝ exp(-(h({n_x, rest}) - h(rest)))` over the window. Only
/// cubes within the energy's reach of `x` enter, so the result does not
/// depend on counts farther away.
pub fn conditional_measure(
    x: &Cell,
    rest: &DensityConfig,
    window: &RestrictedWindow,
    energy: &dyn SiteEnergy,
) -> Result<DiscreteDistribution> {
    let reach = energy.reach();
    let mut local = DensityConfig::new();
    for (c, &n) in rest.iter() {
        if c == x {
            continue;
        }
        if !window.contains(n) {
            return Err(Error::Constraint(format!("count {n} at cube {c:?} outside the restricted window")));
        }
        if energy.cube_distance(x, c) <= reach {
            local.set(*c, n);
        }
    }
    let mut log_w = Vec::with_capacity(window.len());
    for n in window.n_lo..=window.n_hi {
        let mut full = local.clone();
        full.set(*x, n);
        log_w.push(-energy.energy(&full)?);
    }
    DiscreteDistribution::from_log_weights(window.n_lo as i64, &log_w)
}

/// Probe design of [`dobrushin_coefficient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProbeSettings {
    /// Levels of `n_z`, evenly spaced over the window including its endpoints.
    pub nz_levels: usize,
    /// Uniform background levels of the other cubes.
    pub background_levels: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            nz_levels: 3,
            background_levels: 3,
        }
    }
}

/// Estimate of `r(x, z)`: the largest observed `W1(p1, p2) / |n_z1 - n_z2|`.
/// A lower bound on the supremum over all boundary pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientEstimate {
    pub x: Cell,
    pub z: Cell,
    /// Distance between cube centres in units of `1/gamma`.
    pub distance: f64,
    pub r: f64,
    /// Largest `W1` seen among the probes.
    pub max_w1: f64,
    pub probes: usize,
}

/// Estimates `r(x, z)` from probe pairs of configurations on `lattice` that
/// differ only at `z`.
pub fn dobrushin_coefficient(
    x: &Cell,
    z: &Cell,
    lattice: &[Cell],
    window: &RestrictedWindow,
    energy: &dyn SiteEnergy,
    probes: &ProbeSettings,
    gamma: f64,
) -> Result<CoefficientEstimate> {
    if x == z {
        return Err(Error::param("z", "must differ from x"));
    }
    let dist = energy.cube_distance(x, z);
    let mut est = CoefficientEstimate {
        x: *x,
        z: *z,
        distance: gamma * dist,
        r: 0.0,
        max_w1: 0.0,
        probes: 0,
    };
    if dist > energy.reach() {
        return Ok(est);
    }
    let nz = window.levels(probes.nz_levels);
    for b in window.levels(probes.background_levels) {
        let mut rest = DensityConfig::from_counts(lattice.iter().filter(|c| *c != x).map(|c| (*c, b)));
        let mut measures = Vec::with_capacity(nz.len());
        for &n in &nz {
            rest.set(*z, n);
            measures.push(conditional_measure(x, &rest, window, energy)?);
        }
        for i in 0..nz.len() {
            for j in i + 1..nz.len() {
                let w1 = vaserstein_1d(&measures[i], &measures[j]);
                est.max_w1 = est.max_w1.max(w1);
                est.r = est.r.max(w1 / (nz[j] - nz[i]) as f64);
                est.probes += 1;
            }
        }
    }
    Ok(est)
}

/// Least-squares fit of `r = c1 exp(-c2 s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub points: usize,
}

/// Fits `ln r = ln c1 - c2 s` over the points with `r > 0`; `None` with fewer
/// than two distinct distances.
pub fn fit_decay(points: &[(f64, f64)]) -> Option<DecayFit> {
    let (s, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(s, r)| *r > 0.0 && r.is_finite() && s.is_finite())
        .map(|(s, r)| (*s, r.ln()))
        .unzip();
    let distinct = s.iter().any(|v| (v - s.first().copied().unwrap_or(0.0)).abs() > 1e-12);
    if s.len() < 2 || !distinct {
        return None;
    }
    let (slope, intercept, _) = linear_fit(&s, &y);
    Some(DecayFit {
        c1: intercept.exp(),
        c2: -slope,
        points: s.len(),
    })
}

/// Result of [`uniqueness_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub window: RestrictedWindow,
    pub coefficients: Vec<CoefficientEstimate>,
    /// `sum_z r(x, z)` per site `x`.
    pub row_sums: BTreeMap<String, f64>,
    /// `max_x sum_z r(x, z)`.
    pub u: f64,
    pub worst_site: Option<Cell>,
    /// Largest `W1` over all probes.
    pub max_w1: f64,
    pub fit: Option<DecayFit>,
    pub probes: usize,
    pub unique: bool,
    pub caveat: String,
}

impl CouplingReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Estimates every `r(x, z)` on `lattice`, the Dobrushin sum `u` and the decay
/// fit of `r` against `gamma |z - x|`.
pub fn uniqueness_check(
    lattice: &[Cell],
    window: &RestrictedWindow,
    energy: &dyn SiteEnergy,
    probes: &ProbeSettings,
    gamma: f64,
) -> Result<CouplingReport> {
    if lattice.len() < 2 {
        return Err(Error::param("lattice", "needs at least two cubes"));
    }
    let pairs: Vec<(Cell, Cell)> = lattice
        .iter()
        .flat_map(|x| lattice.iter().filter(move |z| *z != x).map(move |z| (*x, *z)))
        .collect();
    let coefficients = pairs
        .par_iter()
        .map(|(x, z)| dobrushin_coefficient(x, z, lattice, window, energy, probes, gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut sums: BTreeMap<Cell, f64> = lattice.iter().map(|c| (*c, 0.0)).collect();
    for c in &coefficients {
        *sums.get_mut(&c.x).expect("site of the lattice") += c.r;
    }
    let (worst_site, u) = sums
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(c, u)| (Some(*c), *u))
        .unwrap_or((None, 0.0));
    let fit = fit_decay(&coefficients.iter().map(|c| (c.distance, c.r)).collect::<Vec<_>>());
    let probes_total = coefficients.iter().map(|c| c.probes).sum();
    Ok(CouplingReport {
        window: *window,
        row_sums: sums.iter().map(|(c, v)| (format!("{c:?}"), *v)).collect(),
        max_w1: coefficients.iter().map(|c| c.max_w1).fold(0.0, f64::max),
        coefficients,
        u,
        worst_site,
        fit,
        probes: probes_total,
        unique: u < 1.0,
        caveat: format!(
            "r(x,z) is a lower-bound estimate from {probes_total} probe pairs with uniform backgrounds; u < 1 is indicative, not a proof"
        ),
    })
}
