//! Link factors, diagram activities and the truncated expansion of `h^p`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::diagram::{shape_key, Diagram, DiagramIter, Label, LinkKinds, ShapeKey};
use super::ursell_coefficient;
use crate::effective_ham::{cube_lo, dist2_to_cube, mean_estimate, CoarseModel, DensityConfig, Estimate};
use crate::error::{Error, Result};
use crate::model::{Cell, KacKernel, Point};
use crate::stats::derive_seed;

/// Highest truncation order accepted by [`truncated_hp`].
pub const MAX_TRUNCATION_ORDER: usize = 2;
/// Largest particle count accepted by [`truncated_hp`].
pub const MAX_EXPANSION_PARTICLES: usize = 10;

type Nodes = Vec<([i64; 3], f64)>;

/// Pair and quadruple parts of `dH`: point kernels minus cube-averaged kernels,
/// integrated on the model's quadrature lattice.
pub struct LinkPotentials<'a> {
    model: &'a CoarseModel,
    kernel: KacKernel,
    h: f64,
    weight: f64,
}

impl<'a> LinkPotentials<'a> {
    pub fn new(model: &'a CoarseModel) -> Result<Self> {
        if model.metric.period.is_some() {
            return Err(Error::param("metric", "the expansion is implemented for free boundary geometry"));
        }
        let h = model.table().h;
        Ok(LinkPotentials {
            model,
            kernel: KacKernel::new(&model.params),
            h,
            weight: h.powi(model.params.d as i32),
        })
    }

    /// Kernel values of a particle at the lattice nodes, in lexicographic order.
    pub fn particle_nodes(&self, q: &Point) -> Nodes {
        let mut out = Vec::new();
        if self.kernel.is_off() {
            return out;
        }
        let d = self.model.params.d;
        let c = self.kernel.centre(q);
        let range = self.kernel.range();
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..d {
            lo[k] = ((c[k] - range) / self.h - 0.5).ceil() as i64;
            hi[k] = ((c[k] + range) / self.h - 0.5).floor() as i64;
        }
        let mut g = lo;
        loop {
            let mut d2 = 0.0;
            for k in 0..d {
                let x = (g[k] as f64 + 0.5) * self.h - c[k];
                d2 += x * x;
            }
            let v = self.kernel.profile(d2);
            if v != 0.0 {
                out.push((g, v));
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                g[k] += 1;
                if g[k] <= hi[k] {
                    break;
                }
                g[k] = lo[k];
            }
        }
    }

    /// Cube-averaged kernel of a cell at the lattice nodes, in lexicographic order.
    pub fn cell_nodes(&self, cell: &Cell) -> Nodes {
        let mut out = Vec::new();
        if !self.kernel.is_off() {
            self.model.table().for_each_node(cell, |g, v| out.push((g, v)));
        }
        out
    }

    /// `phi2 = -(J2(q_i, q_j) - J~2(x_i, x_j))` from node lists.
    pub fn phi2(&self, a: &Nodes, b: &Nodes, coarse: f64) -> f64 {
        -(self.weight * dot(a, b) - coarse)
    }

    /// `phi4 = J4 - J~4` from node lists.
    pub fn phi4(&self, n: [&Nodes; 4], coarse: f64) -> f64 {
        self.weight * product4(n) - coarse
    }

    /// `J~2` of two cells.
    pub fn coarse2(&self, a: &Cell, b: &Cell) -> f64 {
        self.weight * dot(&self.cell_nodes(a), &self.cell_nodes(b))
    }

    /// `J~4` of four cells.
    pub fn coarse4(&self, c: [&Cell; 4]) -> f64 {
        let n: Vec<Nodes> = c.iter().map(|x| self.cell_nodes(x)).collect();
        self.weight * product4([&n[0], &n[1], &n[2], &n[3]])
    }
}

fn dot(a: &Nodes, b: &Nodes) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn product4(n: [&Nodes; 4]) -> f64 {
    let find = |v: &Nodes, g: &[i64; 3]| v.binary_search_by(|x| x.0.cmp(g)).ok().map(|i| v[i].1);
    let mut s = 0.0;
    for (g, a) in n[0] {
        let (Some(b), Some(c), Some(d)) = (find(n[1], g), find(n[2], g), find(n[3], g)) else {
            continue;
        };
        s += a * b * c * d;
    }
    s
}

/// Smallest distance between two `ell` cubes.
fn cube_gap(a: &Cell, b: &Cell, d: usize, ell: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        let g = ((a[k] - b[k]).abs() - 1).max(0) as f64 * ell;
        s += g * g;
    }
    s.sqrt()
}

/// A diagram compiled for sampling: labels are positions `0..m`.
struct CompiledShape {
    cells: Vec<Cell>,
    r: Vec<[usize; 2]>,
    gamma: Vec<([usize; 2], f64)>,
    four: Vec<([usize; 4], f64)>,
    pen: Vec<[usize; 2]>,
    kac_labels: Vec<bool>,
    /// Some factor vanishes identically.
    zero: bool,
}

impl CompiledShape {
    fn new(theta: &Diagram, pot: &LinkPotentials) -> Self {
        let p = &pot.model.params;
        let (d, ell, radius, reach) = (p.d, pot.model.ell(), p.hc_radius, 2.0 * pot.kernel.range());
        let labels: Vec<Label> = theta.labels.iter().copied().collect();
        let pos = |l: &Label| labels.binary_search(l).unwrap_or(0);
        let cells: Vec<Cell> = labels.iter().map(|l| l.cell).collect();
        let gap = |a: usize, b: usize| cube_gap(&cells[a], &cells[b], d, ell);
        let mut zero = false;
        let r: Vec<[usize; 2]> = theta.links_r.iter().map(|q| [pos(&q[0]), pos(&q[1])]).collect();
        for e in &r {
            zero |= radius <= 0.0 || gap(e[0], e[1]) >= radius;
        }
        let mut kac_labels = vec![false; labels.len()];
        let kac_off = pot.kernel.is_off();
        let mut gamma = Vec::new();
        for q in &theta.links_gamma {
            let e = [pos(&q[0]), pos(&q[1])];
            zero |= kac_off || gap(e[0], e[1]) >= reach;
            for &i in &e {
                kac_labels[i] = true;
            }
            let coarse = if zero { 0.0 } else { pot.coarse2(&cells[e[0]], &cells[e[1]]) };
            gamma.push((e, coarse));
        }
        let mut four = Vec::new();
        for q in &theta.links_4 {
            let e = q.map(|l| pos(&l));
            for a in 0..4 {
                for b in a + 1..4 {
                    zero |= kac_off || gap(e[a], e[b]) >= reach;
                }
            }
            for &i in &e {
                kac_labels[i] = true;
            }
            let coarse = if zero {
                0.0
            } else {
                pot.coarse4([&cells[e[0]], &cells[e[1]], &cells[e[2]], &cells[e[3]]])
            };
            four.push((e, coarse));
        }
        let pen = theta.penrose_pairs().iter().map(|q| [pos(&q[0]), pos(&q[1])]).collect();
        CompiledShape {
            cells,
            r,
            gamma,
            four,
            pen,
            kac_labels,
            zero,
        }
    }

    fn sample<R: Rng>(&self, pot: &LinkPotentials, rng: &mut R, q: &mut Vec<Point>) -> f64 {
        let p = &pot.model.params;
        let (d, ell, beta) = (p.d, pot.model.ell(), p.beta);
        let r2 = p.hc_radius * p.hc_radius;
        q.clear();
        for c in &self.cells {
            let lo = cube_lo(c, d, ell);
            let mut x = [0.0; 3];
            for k in 0..d {
                x[k] = lo[k] + rng.random::<f64>() * ell;
            }
            q.push(x);
        }
        let close = |a: usize, b: usize| pot.model.metric.dist2(&q[a], &q[b]) <= r2;
        let mut w = 1.0;
        for e in &self.r {
            if !close(e[0], e[1]) {
                return 0.0;
            }
            w = -w;
        }
        for e in &self.pen {
            if close(e[0], e[1]) {
                return 0.0;
            }
        }
        for (e, _) in &self.gamma {
            if r2 > 0.0 && close(e[0], e[1]) {
                return 0.0;
            }
        }
        let nodes: Vec<Nodes> = q
            .iter()
            .zip(&self.kac_labels)
            .map(|(x, &used)| if used { pot.particle_nodes(x) } else { Vec::new() })
            .collect();
        for (e, coarse) in &self.gamma {
            w *= (-beta * pot.phi2(&nodes[e[0]], &nodes[e[1]], *coarse)).exp_m1();
        }
        for (e, coarse) in &self.four {
            w *= (-beta * pot.phi4([&nodes[e[0]], &nodes[e[1]], &nodes[e[2]], &nodes[e[3]]], *coarse)).exp_m1();
        }
        w
    }
}

/// Integrand of a diagram's activity at given label positions: the product of
/// its link factors and the resummed `(1 + f_R)` factors.
pub fn diagram_integrand(theta: &Diagram, positions: &BTreeMap<Label, Point>, pot: &LinkPotentials) -> Result<f64> {
    let p = &pot.model.params;
    if p.beta == 0.0 {
        return Ok(0.0);
    }
    let shape = CompiledShape::new(theta, pot);
    let labels: Vec<Label> = theta.labels.iter().copied().collect();
    let q: Vec<Point> = labels
        .iter()
        .map(|l| positions.get(l).copied().ok_or_else(|| Error::param("positions", "missing label position")))
        .collect::<Result<_>>()?;
    let r2 = p.hc_radius * p.hc_radius;
    let close = |a: usize, b: usize| pot.model.metric.dist2(&q[a], &q[b]) <= r2 && r2 > 0.0;
    let mut w = 1.0;
    for e in &shape.r {
        w *= if close(e[0], e[1]) { -1.0 } else { 0.0 };
    }
    for e in &shape.pen {
        w *= if close(e[0], e[1]) { 0.0 } else { 1.0 };
    }
    let nodes: Vec<Nodes> = q.iter().map(|x| pot.particle_nodes(x)).collect();
    for (e, _) in &shape.gamma {
        let coarse = pot.coarse2(&shape.cells[e[0]], &shape.cells[e[1]]);
        let hc = if close(e[0], e[1]) { 0.0 } else { 1.0 };
        w *= hc * (-p.beta * pot.phi2(&nodes[e[0]], &nodes[e[1]], coarse)).exp_m1();
    }
    for (e, _) in &shape.four {
        let coarse = pot.coarse4([&shape.cells[e[0]], &shape.cells[e[1]], &shape.cells[e[2]], &shape.cells[e[3]]]);
        w *= (-p.beta * pot.phi4([&nodes[e[0]], &nodes[e[1]], &nodes[e[2]], &nodes[e[3]]], coarse)).exp_m1();
    }
    Ok(w)
}

fn check_decoupled(model: &CoarseModel, rho: &DensityConfig, q_bar: &[Point]) -> Result<()> {
    let p = &model.params;
    let ell = model.ell();
    let reach = 2.0 / p.gamma + p.hc_radius + (p.d as f64).sqrt() * ell;
    for (c, &n) in rho.iter() {
        if n == 0 {
            continue;
        }
        let lo = cube_lo(c, p.d, ell);
        if q_bar.iter().any(|b| dist2_to_cube(b, &lo, ell, p.d) < reach * reach) {
            return Err(Error::param(
                "q_bar",
                "boundary particles within interaction reach of the occupied cubes; the expansion covers decoupled boundaries only",
            ));
        }
    }
    Ok(())
}

/// Activity of a pruned diagram: the reference expectation of its integrand,
/// estimated from `budget` independent uniform placements of its labels.
pub fn diagram_activity(theta: &Diagram, model: &CoarseModel, q_bar: &[Point], budget: usize, seed: u64) -> Result<Estimate> {
    theta.validate()?;
    if !theta.is_bar() {
        return Err(Error::param("theta", "activities are defined on pruned diagrams"));
    }
    let rho = DensityConfig::from_counts(theta.labels.iter().map(|l| (l.cell, 1)));
    check_decoupled(model, &rho, q_bar)?;
    let pot = LinkPotentials::new(model)?;
    let shape = CompiledShape::new(theta, &pot);
    Ok(estimate_shape(&shape, &pot, budget, seed))
}

fn estimate_shape(shape: &CompiledShape, pot: &LinkPotentials, budget: usize, seed: u64) -> Estimate {
    if shape.zero || pot.model.params.beta == 0.0 {
        return Estimate {
            value: 0.0,
            stderr: 0.0,
            samples: 0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::with_capacity(shape.cells.len());
    let n = budget.max(2);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = shape.sample(pot, &mut rng, &mut q);
        s += v;
        s2 += v * v;
    }
    mean_estimate(s, s2, n)
}

/// One distinct activity used by the expansion.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeActivity {
    pub representative: Diagram,
    pub activity: Estimate,
}

/// One aggregated cluster term.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionTerm {
    pub id: usize,
    /// Total link count of the clusters in this term.
    pub order: usize,
    /// Shape indices of the cluster members.
    pub shapes: Vec<usize>,
    /// Sum of cluster coefficients over the clusters with these shapes.
    pub coefficient: f64,
    /// Contribution to `h^p`.
    pub contribution: f64,
}

/// Truncated cluster expansion of `h^p`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedHp {
    pub value: f64,
    pub stderr: f64,
    /// Root-test estimate of the omitted orders: with `r = max_m a_m^{1/m}`
    /// over the order norms `a_m`, the tail `r^{k+1} / (1 - r)`; infinite
    /// when `r >= 1`. Not a rigorous bound.
    pub discarded_bound: f64,
    pub order: usize,
    /// `sum |coefficient| prod |z|` per order `1..=order`.
    pub order_norms: Vec<f64>,
    pub shapes: Vec<ShapeActivity>,
    pub terms: Vec<ExpansionTerm>,
}

impl TruncatedHp {
    /// CSV report: term id, order, contribution, cumulative sum.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,order,activity,cumulative\n");
        let mut cum = 0.0;
        for t in &self.terms {
            cum += t.contribution;
            out.push_str(&format!("{},{},{:e},{:e}\n", t.id, t.order, t.contribution, cum));
        }
        out
    }
}

/// `h^p(rho | q_bar)` from all clusters of total link count at most `order`,
/// with standard cluster coefficients over the label-overlap graph.
pub fn truncated_hp(
    model: &CoarseModel,
    rho: &DensityConfig,
    q_bar: &[Point],
    order: usize,
    budget: usize,
    seed: u64,
) -> Result<TruncatedHp> {
    if order == 0 || order > MAX_TRUNCATION_ORDER {
        return Err(Error::Guard(format!("truncation order {order} outside 1..={MAX_TRUNCATION_ORDER}")));
    }
    let total = rho.total() as usize;
    if total > MAX_EXPANSION_PARTICLES {
        return Err(Error::Guard(format!("{total} particles exceed the expansion limit {MAX_EXPANSION_PARTICLES}")));
    }
    check_decoupled(model, rho, q_bar)?;
    let pot = LinkPotentials::new(model)?;
    let labels: BTreeSet<Label> = rho.iter().flat_map(|(c, &n)| (0..n).map(move |i| Label::new(*c, i))).collect();

    // Polymers: connected pruned diagrams, grouped into shapes.
    let mut shape_ids: BTreeMap<ShapeKey, usize> = BTreeMap::new();
    let mut reps: Vec<(Diagram, u64)> = Vec::new();
    let mut polymers: Vec<(Diagram, usize)> = Vec::new();
    for theta in DiagramIter::new(&labels, order, LinkKinds::ALL) {
        if !theta.is_connected() {
            continue;
        }
        let key = shape_key(&theta, &theta.penrose_pairs());
        let digest = key.digest();
        let next = reps.len();
        let id = *shape_ids.entry(key).or_insert(next);
        if id == next {
            reps.push((theta.clone(), digest));
        }
        polymers.push((theta, id));
    }

    // Clusters: multisets of polymers with connected overlap graph.
    let mut terms: BTreeMap<Vec<usize>, (usize, f64)> = BTreeMap::new();
    let mut chosen: Vec<usize> = Vec::new();
    collect_clusters(&polymers, order, 0, 0, &mut chosen, &mut terms);

    let shapes: Vec<ShapeActivity> = reps
        .into_par_iter()
        .map(|(rep, digest)| {
            let compiled = CompiledShape::new(&rep, &pot);
            let activity = estimate_shape(&compiled, &pot, budget, derive_seed(seed, digest));
            ShapeActivity {
                representative: rep,
                activity,
            }
        })
        .collect();

    let z: Vec<f64> = shapes.iter().map(|s| s.activity.value).collect();
    let se: Vec<f64> = shapes.iter().map(|s| s.activity.stderr).collect();
    let mut grad = vec![0.0; z.len()];
    let mut norms = vec![0.0; order];
    let mut log_xi = 0.0;
    let mut out_terms = Vec::new();
    for (id, (members, (ord, coef))) in terms.into_iter().enumerate() {
        let prod: f64 = members.iter().map(|&s| z[s]).product();
        log_xi += coef * prod;
        norms[ord - 1] += coef.abs() * prod.abs();
        for (k, &s) in members.iter().enumerate() {
            let others: f64 = members.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &t)| z[t]).product();
            grad[s] += coef * others;
        }
        out_terms.push(ExpansionTerm {
            id,
            order: ord,
            shapes: members,
            coefficient: coef,
            contribution: -coef * prod,
        });
    }
    let var: f64 = grad.iter().zip(&se).map(|(g, s)| (g * s).powi(2)).sum();
    let rate = norms
        .iter()
        .enumerate()
        .map(|(m, a)| a.powf(1.0 / (m + 1) as f64))
        .fold(0.0, f64::max);
    let discarded_bound = if rate == 0.0 {
        0.0
    } else if rate < 1.0 {
        rate.powi(order as i32 + 1) / (1.0 - rate)
    } else {
        f64::INFINITY
    };
    Ok(TruncatedHp {
        value: -log_xi,
        stderr: var.sqrt(),
        discarded_bound,
        order,
        order_norms: norms,
        shapes,
        terms: out_terms,
    })
}

fn collect_clusters(
    polymers: &[(Diagram, usize)],
    order: usize,
    start: usize,
    links: usize,
    chosen: &mut Vec<usize>,
    terms: &mut BTreeMap<Vec<usize>, (usize, f64)>,
) {
    for i in start..polymers.len() {
        let l = links + polymers[i].0.link_count();
        if l > order {
            continue;
        }
        chosen.push(i);
        let members: Vec<&Diagram> = chosen.iter().map(|&j| &polymers[j].0).collect();
        let coef = ursell_coefficient(&members, |a, b| !super::compatible(a, b));
        if coef != 0.0 {
            let mut key: Vec<usize> = chosen.iter().map(|&j| polymers[j].1).collect();
            key.sort_unstable();
            let e = terms.entry(key).or_insert((l, 0.0));
            e.1 += coef;
        }
        collect_clusters(polymers, order, i, l, chosen, terms);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HamiltonianForm, Metric, ModelParams};

    fn model(d: usize, r: f64, beta: f64) -> CoarseModel {
        let params = ModelParams {
            d,
            gamma: 0.3,
            hc_radius: r,
            beta,
            lambda: 0.0,
            form: HamiltonianForm::Multibody,
            ..ModelParams::default()
        };
        CoarseModel::build(&params, Metric::free(d), None).unwrap()
    }

    #[test]
    fn pair_and_quadruple_parts_rebuild_delta_h() {
        let m = model(1, 0.2, 1.0);
        let pot = LinkPotentials::new(&m).unwrap();
        let ell = m.ell();
        let q: Vec<Point> = [0.3, 1.7, 2.2, ell + 0.4, ell + 1.9].iter().map(|&x| [x, 0.0, 0.0]).collect();
        let cells: Vec<Cell> = q.iter().map(|x| crate::model::cell_of(x, 1, ell)).collect();
        let nodes: Vec<Nodes> = q.iter().map(|x| pot.particle_nodes(x)).collect();
        let n = q.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += pot.phi2(&nodes[i], &nodes[j], pot.coarse2(&cells[i], &cells[j]));
                for k in j + 1..n {
                    for l in k + 1..n {
                        let c = pot.coarse4([&cells[i], &cells[j], &cells[k], &cells[l]]);
                        sum += pot.phi4([&nodes[i], &nodes[j], &nodes[k], &nodes[l]], c);
                    }
                }
            }
        }
        let dh = m.delta_h(&q, &[]).unwrap();
        assert!((sum - dh).abs() < 1e-10 * (1.0 + dh.abs()), "{sum} vs {dh}");
    }

    #[test]
    fn pruned_diagrams_resum_to_the_boltzmann_weight() {
        // Pointwise: sum over all pruned diagrams of the integrand equals
        // e^{-beta dH} 1_hc for every configuration.
        let m = model(1, 0.6, 1.3);
        let pot = LinkPotentials::new(&m).unwrap();
        let ell = m.ell();
        let labels: BTreeSet<Label> = [([0i64, 0, 0], 0), ([0, 0, 0], 1), ([0, 0, 0], 2), ([1, 0, 0], 0)]
            .iter()
            .map(|&(c, i)| Label::new(c, i))
            .collect();
        let all: Vec<Diagram> = DiagramIter::new(&labels, 16, LinkKinds::ALL).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let mut pos = BTreeMap::new();
            for l in &labels {
                pos.insert(*l, [(l.cell[0] as f64 + rng.random::<f64>()) * ell, 0.0, 0.0]);
            }
            let mut total = 1.0;
            for theta in &all {
                total += diagram_integrand(theta, &pos, &pot).unwrap();
            }
            let q: Vec<Point> = pos.values().copied().collect();
            let w = if crate::model::hardcore_admissible(&q, 0.6, m.metric) {
                (-1.3 * m.delta_h(&q, &[]).unwrap()).exp()
            } else {
                0.0
            };
            assert!((total - w).abs() < 1e-9, "{total} vs {w}");
        }
    }

    #[test]
    fn zero_temperature_limit_and_far_links_vanish() {
        let m = model(1, 0.5, 0.0);
        let a = Label::new([0, 0, 0], 0);
        let b = Label::new([0, 0, 0], 1);
        let theta = Diagram::from_links([super::super::Link::R([a, b])]);
        assert_eq!(diagram_activity(&theta, &m, &[], 100, 1).unwrap().value, 0.0);
        let m = model(1, 0.5, 1.0);
        let far = Label::new([3, 0, 0], 0);
        let theta = Diagram::from_links([super::super::Link::R([a, far])]);
        let e = diagram_activity(&theta, &m, &[], 100, 1).unwrap();
        assert_eq!((e.value, e.samples), (0.0, 0));
    }

    #[test]
    fn truncation_order_is_guarded() {
        let m = model(1, 0.5, 1.0);
        let rho = DensityConfig::from_counts([([0, 0, 0], 2)]);
        assert!(matches!(truncated_hp(&m, &rho, &[], 3, 10, 1), Err(Error::Guard(_))));
        let rho = DensityConfig::from_counts([([0, 0, 0], 11)]);
        assert!(matches!(truncated_hp(&m, &rho, &[], 2, 10, 1), Err(Error::Guard(_))));
    }
}
