use std::collections::BTreeSet;

use lmphc_core::cluster_exp::{candidate_links, pair, Diagram, Label, Link, LinkKinds};
use lmphc_core::effective_ham::CoarseModel;
use lmphc_core::model::{HamiltonianForm, KernelSpec, Metric, ModelParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn labels_in(cells: &[(i64, u32)]) -> Vec<Label> {
    cells
        .iter()
        .flat_map(|&(c, n)| (0..n).map(move |i| Label::new([c, 0, 0], i)))
        .collect()
}

/// Every subset of the candidate links with 1..=max links, filtered by the
/// pruning predicates.
pub fn brute_force(labels: &[Label], max: usize) -> BTreeSet<Diagram> {
    let set: BTreeSet<Label> = labels.iter().copied().collect();
    let cands = candidate_links(&set, LinkKinds::ALL);
    let mut out = BTreeSet::new();
    let mut idx: Vec<usize> = Vec::new();
    fn rec(c: &[Link], max: usize, start: usize, idx: &mut Vec<usize>, out: &mut BTreeSet<Diagram>) {
        for i in start..c.len() {
            idx.push(i);
            let d = Diagram::from_links(idx.iter().map(|&k| c[k]));
            if d.is_hat() && d.redundant_r_links().is_empty() {
                out.insert(d);
            }
            if idx.len() < max {
                rec(c, max, i + 1, idx, out);
            }
            idx.pop();
        }
    }
    rec(&cands, max, 0, &mut idx, &mut out);
    out
}

/// Label layouts `(cube, count)` used for the enumeration oracle.
pub const LAYOUTS: [&[(i64, u32)]; 5] = [&[(0, 2)], &[(0, 3)], &[(0, 2), (1, 2)], &[(0, 4)], &[(0, 3), (2, 2)]];

pub fn random_diagram(rng: &mut ChaCha8Rng) -> Diagram {
    let n = rng.random_range(2..=8u32);
    let labels: Vec<Label> = (0..n).map(|i| Label::new([i as i64 % 2, 0, 0], i)).collect();
    let mut d = Diagram::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let p = pair(labels[i], labels[j]).unwrap();
            if rng.random_bool(0.45) {
                d.insert(Link::R(p));
            }
            if rng.random_bool(0.2) {
                d.insert(Link::Gamma(p));
            }
        }
    }
    if n >= 4 && rng.random_bool(0.5) {
        d.insert(Link::Four([labels[0], labels[1], labels[2], labels[3]]));
    }
    d
}

/// Vertices touched by R-links and the number of R-connected components.
pub fn r_components(d: &Diagram) -> (usize, usize) {
    let verts: BTreeSet<Label> = d.links_r.iter().flat_map(|p| p.iter().copied()).collect();
    let mut seen = BTreeSet::new();
    let mut comps = 0;
    for &v in &verts {
        if !seen.insert(v) {
            continue;
        }
        comps += 1;
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for p in &d.links_r {
                let y = if p[0] == x {
                    p[1]
                } else if p[1] == x {
                    p[0]
                } else {
                    continue;
                };
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    (verts.len(), comps)
}

/// First violated property of the pruned form of `d`, if any.
pub fn forest_violation(d: &Diagram) -> Option<&'static str> {
    let p = d.pruned();
    let (verts, comps) = r_components(&p);
    if p.links_r.len() + comps > verts {
        return Some("R-links of the pruned diagram contain a cycle");
    }
    if !p.is_bar() {
        return Some("pruned diagram is not in the barred class");
    }
    if p.pruned() != p {
        return Some("pruning is not idempotent");
    }
    if p.links_gamma != d.links_gamma || !p.links_r.is_subset(&d.links_r) {
        return Some("pruning changed non-R links or added R-links");
    }
    if comps != r_components(&d.prune_double_links()).1 {
        return Some("pruning changed the R-components");
    }
    None
}

pub fn multibody_model(d: usize, gamma: f64, r: f64, beta: f64, kernel: KernelSpec) -> CoarseModel {
    let params = ModelParams {
        d,
        gamma,
        hc_radius: r,
        beta,
        lambda: 0.0,
        kernel,
        form: HamiltonianForm::Multibody,
        ..ModelParams::default()
    };
    CoarseModel::build(&params, Metric::free(d), None).unwrap()
}

/// Small system: (d, gamma, R, beta, cube counts).
pub type CorpusCase = (usize, f64, f64, f64, Vec<([i64; 3], u32)>);

pub fn corpus() -> Vec<CorpusCase> {
    let c0 = [0i64, 0, 0];
    let c1 = [1i64, 0, 0];
    let c2 = [2i64, 0, 0];
    let e1 = [0i64, 1, 0];
    vec![
        (1, 0.3, 0.3, 1.0, vec![(c0, 2)]),
        (1, 0.3, 0.3, 1.0, vec![(c0, 3)]),
        (1, 0.3, 0.2, 2.0, vec![(c0, 4)]),
        (1, 0.3, 0.0, 2.0, vec![(c0, 4)]),
        (1, 0.3, 0.0, 1.0, vec![(c0, 2), (c1, 2)]),
        (1, 0.3, 0.2, 1.5, vec![(c0, 2), (c1, 2)]),
        (1, 0.3, 0.3, 1.0, vec![(c0, 1), (c1, 3)]),
        (1, 0.3, 0.2, 0.5, vec![(c0, 3), (c1, 3)]),
        (1, 0.3, 0.1, 1.0, vec![(c0, 2), (c2, 2)]),
        (1, 0.3, 0.4, 1.0, vec![(c0, 2)]),
        (1, 0.1, 0.3, 1.9, vec![(c0, 2)]),
        (1, 0.1, 0.3, 1.9, vec![(c0, 3)]),
        (1, 0.1, 0.2, 1.9, vec![(c0, 2), (c1, 2)]),
        (1, 0.1, 0.0, 1.9, vec![(c0, 4), (c1, 1)]),
        (1, 0.1, 0.5, 1.0, vec![(c0, 2), (c1, 1)]),
        (2, 0.3, 0.3, 1.0, vec![(c0, 2)]),
        (2, 0.3, 0.3, 1.0, vec![(c0, 3)]),
        (2, 0.3, 0.2, 1.5, vec![(c0, 2), (c1, 2)]),
        (2, 0.3, 0.0, 2.0, vec![(c0, 2), (e1, 2)]),
        (2, 0.3, 0.4, 1.0, vec![(c0, 1), (c1, 2)]),
    ]
}
