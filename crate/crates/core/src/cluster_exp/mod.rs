//! Cluster expansion of the position correction `h^p` and the polymer
//! structure of the contour correction `h^c`.
//!
//! Every pair of particles carries an R-link factor `f_R = -1{|q_i - q_j| <= R}`
//! and a gamma-link factor `f_g = e^{-beta phi2} - 1`; every quadruple carries a
//! 4-link factor `f_4 = e^{-beta phi4} - 1`, where `phi2` and `phi4` are the pair
//! and quadruple parts of `dH` (point kernels minus cube-averaged kernels).
//! Expanding the products gives a sum over diagrams. R-links on pairs that
//! carry a gamma-link are resummed into the gamma factor, and the R-graph of
//! each diagram is reduced to a breadth-first tree whose discarded links are
//! resummed into `(1 + f_R)` factors. Connected pruned diagrams are the
//! polymers of a gas with label-overlap incompatibility, and `h^p` is minus the
//! logarithm of its partition function.

mod activity;
mod diagram;
mod polymer;

pub use activity::{
    diagram_activity, diagram_integrand, truncated_hp, ExpansionTerm, LinkPotentials, ShapeActivity, TruncatedHp,
    MAX_EXPANSION_PARTICLES, MAX_TRUNCATION_ORDER,
};
pub use diagram::{
    candidate_links, compatible, enumerate_diagrams, enumerate_diagrams_with, pair, prune_redundant, quad, Diagram,
    DiagramIter, Label, Link, LinkKinds, OrderedDiagram, Pair, Quad, MAX_ENUM_LABELS, MAX_ENUM_LINKS,
};
pub use polymer::{
    build_polymers, convergence_check, truncated_hc, ContourFrames, ConvergenceReport, KpPolymer, Polymer,
    PolymerActivity, PolymerSet, Witness, MAX_POLYMER_CLUSTER,
};

/// Largest cluster handled by [`ursell_coefficient`].
pub const MAX_URSELL: usize = 6;

/// Cluster coefficient of a multiset of polymers: the signed count of connected
/// spanning subgraphs of the incompatibility graph, divided by the factorials
/// of the multiplicities. Zero for disconnected clusters or more than
/// [`MAX_URSELL`] members.
pub fn ursell_coefficient<T: PartialEq>(members: &[&T], incompatible: impl Fn(&T, &T) -> bool) -> f64 {
    let n = members.len();
    if n == 0 || n > MAX_URSELL {
        return 0.0;
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if incompatible(members[i], members[j]) {
                edges.push((i, j));
            }
        }
    }
    let mut total = 0i64;
    for mask in 0u32..(1u32 << edges.len()) {
        if (mask.count_ones() as usize) + 1 < n {
            continue;
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
        let mut comps = n;
        for (k, &(a, b)) in edges.iter().enumerate() {
            if mask & (1 << k) != 0 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    comps -= 1;
                }
            }
        }
        if comps == 1 {
            total += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
        }
    }
    let mut denom = 1.0;
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut m = 0;
        for j in i..n {
            if !seen[j] && members[j] == members[i] {
                seen[j] = true;
                m += 1;
                denom *= m as f64;
            }
        }
    }
    total as f64 / denom
}
