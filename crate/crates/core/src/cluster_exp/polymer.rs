//! Contour frames, polymers of contours and clusters, and the
//! Kotecky-Preiss-type convergence check.

use std::collections::BTreeSet;

use serde::Serialize;

use super::ursell_coefficient;
use crate::coarse_grain::Contour;
use crate::error::{Error, Result};
use crate::model::{Cell, ModelParams};

/// Frames of one contour in `ell_minus` cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourFrames {
    /// `c(Gamma)`.
    pub inside: BTreeSet<Cell>,
    /// `D`: cells outside `c(Gamma)` within the interaction distance `2/gamma`.
    pub d: BTreeSet<Cell>,
    /// `D*`: `D` with its neighbouring cells outside `c(Gamma)`.
    pub d_star: BTreeSet<Cell>,
    /// `D-bar`: cells outside `c(Gamma)` within `ell_plus / 4` of `D`.
    pub d_bar: BTreeSet<Cell>,
}

fn gap(a: &Cell, b: &Cell, d: usize, ell: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        let g = ((a[k] - b[k]).abs() - 1).max(0) as f64 * ell;
        s += g * g;
    }
    s.sqrt()
}

/// Cells outside `exclude` within gap distance `dist` of some cell of `from`.
fn widen(from: &BTreeSet<Cell>, exclude: &BTreeSet<Cell>, dist: f64, d: usize, ell: f64) -> BTreeSet<Cell> {
    let m = (dist / ell).ceil() as i64 + 1;
    let mut out = BTreeSet::new();
    for c in from {
        let span = |k: usize| if k < d { -m..=m } else { 0..=0 };
        for a in span(0) {
            for b in span(1) {
                for e in span(2) {
                    let y = [c[0] + a, c[1] + b, c[2] + e];
                    if !exclude.contains(&y) && gap(c, &y, d, ell) <= dist {
                        out.insert(y);
                    }
                }
            }
        }
    }
    out
}

impl ContourFrames {
    /// Frames around a set of `ell_minus` cells.
    pub fn from_cells(inside: impl IntoIterator<Item = Cell>, params: &ModelParams) -> Self {
        let s = params.scales();
        let (d, ell) = (params.d, s.ell_minus);
        let inside: BTreeSet<Cell> = inside.into_iter().collect();
        let frame = widen(&inside, &inside, 2.0 * s.range, d, ell);
        let mut d_star = widen(&frame, &inside, 0.0, d, ell);
        d_star.extend(frame.iter().copied());
        let mut d_bar = widen(&frame, &inside, s.ell_plus / 4.0, d, ell);
        d_bar.extend(frame.iter().copied());
        ContourFrames {
            inside,
            d: frame,
            d_star,
            d_bar,
        }
    }

    /// Frames of a contour whose `ell_plus` block starts at `offset` (in
    /// `ell_plus` cubes); periodic wrapping is not applied.
    pub fn from_contour(contour: &Contour, offset: [i64; 3], params: &ModelParams) -> Self {
        let ratio = params.scales().plus_ratio as i64;
        let d = contour.d;
        let mut cells = Vec::new();
        for flat in contour.c_gamma() {
            let c = contour.coords(flat);
            let mut base = [0i64; 3];
            for k in 0..d {
                base[k] = (c[k] as i64 + offset[k]) * ratio;
            }
            let span = |k: usize| if k < d { 0..ratio } else { 0..1 };
            for a in span(0) {
                for b in span(1) {
                    for e in span(2) {
                        cells.push([base[0] + a, base[1] + b, base[2] + e]);
                    }
                }
            }
        }
        Self::from_cells(cells, params)
    }
}

/// Two contours of a polymer joined by one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub a: usize,
    pub b: usize,
    pub cluster: usize,
}

/// A connected set of contours with the clusters attached to their frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Polymer {
    pub contours: Vec<usize>,
    pub clusters: Vec<usize>,
    pub witnesses: Vec<Witness>,
}

/// Classification of clusters against contour frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolymerSet {
    pub polymers: Vec<Polymer>,
    /// Per contour, the clusters inside its `D-bar` (absorbed into its activity).
    pub absorbed: Vec<Vec<usize>>,
    /// Clusters touching no `D*`; they cancel between numerator and denominator.
    pub bulk: Vec<usize>,
}

/// Classifies clusters (given by their cell supports) and forms the maximal
/// connected polymers of the contour-cluster graph.
pub fn build_polymers(frames: &[ContourFrames], clusters: &[BTreeSet<Cell>]) -> Result<PolymerSet> {
    let n = frames.len();
    let mut absorbed = vec![Vec::new(); n];
    let mut bulk = Vec::new();
    let mut attached: Vec<Vec<usize>> = Vec::with_capacity(clusters.len());
    for (j, a) in clusters.iter().enumerate() {
        let inside: Vec<usize> = (0..n).filter(|&i| a.is_subset(&frames[i].d_bar)).collect();
        let touching: Vec<usize> = (0..n)
            .filter(|&i| !a.is_subset(&frames[i].d_bar) && !a.is_disjoint(&frames[i].d_star))
            .collect();
        if inside.len() > 1 || (!inside.is_empty() && !touching.is_empty()) {
            return Err(Error::param("frames", "contour frames overlap; contours must be at least ell_plus apart"));
        }
        if let Some(&i) = inside.first() {
            absorbed[i].push(j);
        } else if touching.is_empty() {
            bulk.push(j);
        }
        attached.push(touching);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut witnesses = Vec::new();
    for (j, t) in attached.iter().enumerate() {
        for &b in t.iter().skip(1) {
            let a = t[0];
            witnesses.push(Witness { a, b, cluster: j });
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut polymers: Vec<Polymer> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = polymers.len();
            polymers.push(Polymer {
                contours: Vec::new(),
                clusters: Vec::new(),
                witnesses: Vec::new(),
            });
        }
        polymers[slot[r]].contours.push(i);
    }
    for (j, t) in attached.iter().enumerate() {
        if let Some(&a) = t.first() {
            let r = find(&mut parent, a);
            polymers[slot[r]].clusters.push(j);
        }
    }
    for w in witnesses {
        let r = find(&mut parent, w.a);
        polymers[slot[r]].witnesses.push(w);
    }
    Ok(PolymerSet {
        polymers,
        absorbed,
        bulk,
    })
}

/// A polymer support with its activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolymerActivity {
    pub support: BTreeSet<Cell>,
    pub activity: f64,
}

/// Largest cluster size accepted by [`truncated_hc`].
pub const MAX_POLYMER_CLUSTER: usize = 4;

/// `-sum phi^T(C) prod zeta` over clusters of at most `max_cluster` polymers,
/// polymers being incompatible when their supports meet.
pub fn truncated_hc(polymers: &[PolymerActivity], max_cluster: usize) -> Result<f64> {
    if max_cluster == 0 || max_cluster > MAX_POLYMER_CLUSTER {
        return Err(Error::Guard(format!("cluster size {max_cluster} outside 1..={MAX_POLYMER_CLUSTER}")));
    }
    let mut chosen = Vec::new();
    let mut sum = 0.0;
    fn rec(p: &[PolymerActivity], max: usize, start: usize, chosen: &mut Vec<usize>, sum: &mut f64) {
        for i in start..p.len() {
            chosen.push(i);
            let members: Vec<&usize> = chosen.iter().collect();
            let coef = ursell_coefficient(&members, |&a, &b| !p[a].support.is_disjoint(&p[b].support));
            if coef != 0.0 {
                *sum += coef * chosen.iter().map(|&k| p[k].activity).product::<f64>();
            }
            if chosen.len() < max {
                rec(p, max, i, chosen, sum);
            }
            chosen.pop();
        }
    }
    rec(polymers, max_cluster, 0, &mut chosen, &mut sum);
    Ok(-sum)
}

/// A polymer species for the convergence check: support, activity norm `|z|`
/// and size functional `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpPolymer {
    pub support: BTreeSet<Cell>,
    pub norm: f64,
    pub size: f64,
}

/// Margins `a(P) - sum_{P' incompatible with P} |z(P')| e^{a(P')}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst: Option<usize>,
    pub satisfied: bool,
}

/// Checks the Kotecky-Preiss-type condition on every species; advisory only.
pub fn convergence_check(polymers: &[KpPolymer]) -> ConvergenceReport {
    let margins: Vec<f64> = polymers
        .iter()
        .map(|p| {
            let s: f64 = polymers
                .iter()
                .filter(|q| !q.support.is_disjoint(&p.support))
                .map(|q| q.norm.abs() * q.size.exp())
                .sum();
            p.size - s
        })
        .collect();
    let worst = margins
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let worst_margin = worst.map_or(f64::INFINITY, |i| margins[i]);
    ConvergenceReport {
        satisfied: margins.iter().all(|&m| m >= 0.0),
        margins,
        worst_margin,
        worst,
    }
}
