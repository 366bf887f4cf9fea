//! Diagrams over particle labels and the pruning pipeline.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Cell;

/// A particle label: the `ell_minus` cube and the index of the particle in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub cell: Cell,
    pub index: u32,
}

impl Label {
    pub fn new(cell: Cell, index: u32) -> Self {
        Label { cell, index }
    }
}

/// Unordered pair stored sorted.
pub type Pair = [Label; 2];
/// Unordered quadruple stored sorted.
pub type Quad = [Label; 4];

/// Sorted pair of two distinct labels.
pub fn pair(a: Label, b: Label) -> Result<Pair> {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok([a, b]),
        std::cmp::Ordering::Greater => Ok([b, a]),
        std::cmp::Ordering::Equal => Err(Error::param("link", "a 2-link needs two distinct labels")),
    }
}

/// Sorted quadruple of four distinct labels.
pub fn quad(labels: [Label; 4]) -> Result<Quad> {
    let mut q = labels;
    q.sort_unstable();
    if q.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("link", "a 4-link needs four distinct labels"));
    }
    Ok(q)
}

/// A typed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Link {
    R(Pair),
    Gamma(Pair),
    Four(Quad),
}

impl Link {
    pub fn labels(&self) -> &[Label] {
        match self {
            Link::R(p) | Link::Gamma(p) => p,
            Link::Four(q) => q,
        }
    }
}

/// Which link types an enumeration may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkKinds {
    pub r: bool,
    pub gamma: bool,
    pub four: bool,
}

impl LinkKinds {
    pub const ALL: LinkKinds = LinkKinds {
        r: true,
        gamma: true,
        four: true,
    };
}

/// A collection of R-links, gamma-links and 4-links over particle labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagram {
    pub labels: BTreeSet<Label>,
    pub links_r: BTreeSet<Pair>,
    pub links_gamma: BTreeSet<Pair>,
    pub links_4: BTreeSet<Quad>,
}

impl Diagram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_links(links: impl IntoIterator<Item = Link>) -> Self {
        let mut d = Diagram::new();
        for l in links {
            d.insert(l);
        }
        d
    }

    /// Adds a link and its endpoints.
    pub fn insert(&mut self, link: Link) {
        self.labels.extend(link.labels().iter().copied());
        match link {
            Link::R(p) => {
                self.links_r.insert(p);
            }
            Link::Gamma(p) => {
                self.links_gamma.insert(p);
            }
            Link::Four(q) => {
                self.links_4.insert(q);
            }
        }
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.links_r
            .iter()
            .map(|&p| Link::R(p))
            .chain(self.links_gamma.iter().map(|&p| Link::Gamma(p)))
            .chain(self.links_4.iter().map(|&q| Link::Four(q)))
    }

    pub fn link_count(&self) -> usize {
        self.links_r.len() + self.links_gamma.len() + self.links_4.len()
    }

    /// Endpoints are labels, pairs and quadruples are sorted with distinct entries.
    pub fn validate(&self) -> Result<()> {
        for l in self.links() {
            let ls = l.labels();
            if ls.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("diagram", "links must hold sorted distinct labels"));
            }
            if ls.iter().any(|x| !self.labels.contains(x)) {
                return Err(Error::param("diagram", "link endpoint missing from the label set"));
            }
        }
        Ok(())
    }

    /// No pair carries both an R-link and a gamma-link.
    pub fn is_hat(&self) -> bool {
        self.links_r.is_disjoint(&self.links_gamma)
    }

    /// Drops every R-link whose pair also carries a gamma-link.
    pub fn prune_double_links(&self) -> Diagram {
        let mut out = self.clone();
        out.links_r = self.links_r.difference(&self.links_gamma).copied().collect();
        out
    }

    /// Breadth-first depth of every R-link vertex, each R-component rooted at
    /// its smallest label.
    pub fn r_depths(&self) -> BTreeMap<Label, usize> {
        let adj = adjacency(&self.links_r);
        let mut depth = BTreeMap::new();
        for &root in adj.keys() {
            if depth.contains_key(&root) {
                continue;
            }
            depth.insert(root, 0);
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                let dv = depth[&v];
                for &w in &adj[&v] {
                    if let std::collections::btree_map::Entry::Vacant(e) = depth.entry(w) {
                        e.insert(dv + 1);
                        queue.push_back(w);
                    }
                }
            }
        }
        depth
    }

    /// The redundant R-links: equal-depth links, and every link into a vertex
    /// from the previous level other than the least one.
    pub fn redundant_r_links(&self) -> BTreeSet<Pair> {
        let depth = self.r_depths();
        let mut out = BTreeSet::new();
        let mut parent: BTreeMap<Label, Pair> = BTreeMap::new();
        for &p in &self.links_r {
            let (da, db) = (depth[&p[0]], depth[&p[1]]);
            if da == db {
                out.insert(p);
                continue;
            }
            let child = if da > db { p[0] } else { p[1] };
            match parent.get(&child) {
                Some(&best) if best < p => {
                    out.insert(p);
                }
                Some(&best) => {
                    out.insert(best);
                    parent.insert(child, p);
                }
                None => {
                    parent.insert(child, p);
                }
            }
        }
        out
    }

    /// Member of the pruned class: no double 2-links and no redundant R-links.
    pub fn is_bar(&self) -> bool {
        self.is_hat() && self.redundant_r_links().is_empty()
    }

    /// Both pruning steps.
    pub fn pruned(&self) -> Diagram {
        prune_redundant(&OrderedDiagram::new(self.prune_double_links()))
    }

    /// Connected as a hypergraph on its labels.
    pub fn is_connected(&self) -> bool {
        let Some(&first) = self.labels.iter().next() else {
            return true;
        };
        let mut uf = UnionFind::new(self.labels.iter().copied());
        for l in self.links() {
            let ls = l.labels();
            for w in ls.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        self.labels.iter().all(|&x| uf.same(x, first))
    }

    /// Pairs whose `(1 + f_R)` factor belongs to this diagram after the tree
    /// resummation: the R-links that pruning would discard if added, minus
    /// the pairs that carry a gamma-link. Requires an R-forest.
    pub fn penrose_pairs(&self) -> BTreeSet<Pair> {
        let depth = self.r_depths();
        let adj = adjacency(&self.links_r);
        let mut parent: BTreeMap<Label, Label> = BTreeMap::new();
        let mut root: BTreeMap<Label, Label> = BTreeMap::new();
        for (&v, &dv) in &depth {
            if dv == 0 {
                root.insert(v, v);
            }
            if let Some(&p) = adj[&v].iter().filter(|w| depth[w] + 1 == dv).min() {
                parent.insert(v, p);
            }
        }
        let find_root = |mut v: Label| {
            while let Some(&p) = parent.get(&v) {
                v = p;
            }
            v
        };
        let verts: Vec<Label> = depth.keys().copied().collect();
        let mut out = BTreeSet::new();
        for (a, &u) in verts.iter().enumerate() {
            for &v in &verts[a + 1..] {
                let p = [u, v];
                if self.links_r.contains(&p) || self.links_gamma.contains(&p) || find_root(u) != find_root(v) {
                    continue;
                }
                let (du, dv) = (depth[&u], depth[&v]);
                let admissible = if du == dv {
                    true
                } else if du + 1 == dv {
                    parent[&v] < u
                } else if dv + 1 == du {
                    parent[&u] < v
                } else {
                    false
                };
                if admissible {
                    out.insert(p);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// A diagram with its R-links in lexicographic order and the depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedDiagram {
    pub diagram: Diagram,
    pub order: Vec<Pair>,
    pub depth: BTreeMap<Label, usize>,
}

impl OrderedDiagram {
    pub fn new(diagram: Diagram) -> Self {
        let order = diagram.links_r.iter().copied().collect();
        let depth = diagram.r_depths();
        OrderedDiagram { diagram, order, depth }
    }
}

/// Removes the redundant R-links of an ordered diagram.
pub fn prune_redundant(theta: &OrderedDiagram) -> Diagram {
    let redundant = theta.diagram.redundant_r_links();
    let mut out = theta.diagram.clone();
    out.links_r.retain(|p| !redundant.contains(p));
    out
}

/// Two diagrams are compatible iff they share no label.
pub fn compatible(a: &Diagram, b: &Diagram) -> bool {
    a.labels.is_disjoint(&b.labels)
}

fn adjacency(links: &BTreeSet<Pair>) -> BTreeMap<Label, BTreeSet<Label>> {
    let mut adj: BTreeMap<Label, BTreeSet<Label>> = BTreeMap::new();
    for p in links {
        adj.entry(p[0]).or_default().insert(p[1]);
        adj.entry(p[1]).or_default().insert(p[0]);
    }
    adj
}

pub(crate) struct UnionFind {
    parent: BTreeMap<Label, Label>,
}

impl UnionFind {
    pub(crate) fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        UnionFind {
            parent: labels.into_iter().map(|l| (l, l)).collect(),
        }
    }

    pub(crate) fn find(&mut self, x: Label) -> Label {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let r = self.find(p);
        self.parent.insert(x, r);
        r
    }

    /// Joins two classes; false if they were already joined.
    pub(crate) fn union(&mut self, a: Label, b: Label) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent.insert(ra.max(rb), ra.min(rb));
        true
    }

    pub(crate) fn same(&mut self, a: Label, b: Label) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Largest label set accepted by [`enumerate_diagrams`].
pub const MAX_ENUM_LABELS: usize = 8;
/// Largest link count accepted by [`enumerate_diagrams`].
pub const MAX_ENUM_LINKS: usize = 4;

/// All pruned diagrams over subsets of `labels` with 1 to `max_total_links` links.
pub fn enumerate_diagrams(labels: &[Label], max_total_links: usize) -> Result<DiagramIter> {
    enumerate_diagrams_with(labels, max_total_links, LinkKinds::ALL)
}

/// As [`enumerate_diagrams`], restricted to the given link types.
pub fn enumerate_diagrams_with(labels: &[Label], max_total_links: usize, kinds: LinkKinds) -> Result<DiagramIter> {
    let set: BTreeSet<Label> = labels.iter().copied().collect();
    if set.len() > MAX_ENUM_LABELS || max_total_links > MAX_ENUM_LINKS {
        return Err(Error::Guard(format!(
            "enumeration limited to {MAX_ENUM_LABELS} labels and {MAX_ENUM_LINKS} links (got {} and {max_total_links})",
            set.len()
        )));
    }
    Ok(DiagramIter::new(&set, max_total_links, kinds))
}

/// Candidate links in a fixed order: R pairs, gamma pairs, quadruples.
pub fn candidate_links(labels: &BTreeSet<Label>, kinds: LinkKinds) -> Vec<Link> {
    let ls: Vec<Label> = labels.iter().copied().collect();
    let n = ls.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push([ls[i], ls[j]]);
        }
    }
    let mut out = Vec::new();
    if kinds.r {
        out.extend(pairs.iter().map(|&p| Link::R(p)));
    }
    if kinds.gamma {
        out.extend(pairs.iter().map(|&p| Link::Gamma(p)));
    }
    if kinds.four {
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        out.push(Link::Four([ls[a], ls[b], ls[c], ls[d]]));
                    }
                }
            }
        }
    }
    out
}

/// Depth-first enumeration of link combinations. A combination stays
/// admissible iff its R-links form a forest and no pair carries both an R-link
/// and a gamma-link; neither property can be restored by adding links, so
/// inadmissible branches are cut.
#[derive(Debug, Clone)]
pub struct DiagramIter {
    cands: Vec<Link>,
    max: usize,
    stack: Vec<usize>,
    next_start: usize,
}

impl DiagramIter {
    pub(crate) fn new(labels: &BTreeSet<Label>, max: usize, kinds: LinkKinds) -> Self {
        DiagramIter {
            cands: candidate_links(labels, kinds),
            max,
            stack: Vec::new(),
            next_start: 0,
        }
    }

    fn admissible_with(&self, c: usize) -> bool {
        match self.cands[c] {
            Link::R(p) => {
                let mut uf = UnionFind::new(std::iter::empty());
                for &i in &self.stack {
                    match self.cands[i] {
                        Link::R(q) => {
                            uf.union(q[0], q[1]);
                        }
                        Link::Gamma(q) if q == p => return false,
                        _ => {}
                    }
                }
                !uf.same(p[0], p[1])
            }
            Link::Gamma(p) => !self.stack.iter().any(|&i| self.cands[i] == Link::R(p)),
            Link::Four(_) => true,
        }
    }

    fn build(&self) -> Diagram {
        Diagram::from_links(self.stack.iter().map(|&i| self.cands[i]))
    }
}

impl Iterator for DiagramIter {
    type Item = Diagram;

    fn next(&mut self) -> Option<Diagram> {
        loop {
            if self.stack.len() < self.max {
                let mut c = self.next_start;
                while c < self.cands.len() && !self.admissible_with(c) {
                    c += 1;
                }
                if c < self.cands.len() {
                    self.stack.push(c);
                    self.next_start = c + 1;
                    return Some(self.build());
                }
            }
            let c = self.stack.pop()?;
            self.next_start = c + 1;
        }
    }
}

/// Relabelling-invariant key of a diagram together with its resummed pairs.
/// Labels are grouped by cube; the key is the least encoding over all
/// permutations inside each group, so diagrams with equal keys have equal
/// activities under any measure exchangeable within cubes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct ShapeKey {
    pub cells: Vec<Cell>,
    pub r: Vec<[u8; 2]>,
    pub gamma: Vec<[u8; 2]>,
    pub four: Vec<[u8; 4]>,
    pub pen: Vec<[u8; 2]>,
}

impl ShapeKey {
    /// Stable 64-bit digest, used to seed the activity estimate of a shape.
    pub(crate) fn digest(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in &self.cells {
            for x in c {
                h.update(x.to_le_bytes());
            }
        }
        for (tag, part) in [(b'r', &self.r), (b'g', &self.gamma), (b'p', &self.pen)] {
            h.update([tag]);
            for e in part {
                h.update(e);
            }
        }
        h.update(b"f");
        for e in &self.four {
            h.update(e);
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().unwrap_or([0; 8]))
    }
}

pub(crate) fn shape_key(theta: &Diagram, pen: &BTreeSet<Pair>) -> ShapeKey {
    let labels: Vec<Label> = theta.labels.iter().copied().collect();
    let cells: Vec<Cell> = labels.iter().map(|l| l.cell).collect();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for i in 0..labels.len() {
        if i == 0 || cells[i] != cells[i - 1] {
            groups.push((i, i + 1));
        } else if let Some(g) = groups.last_mut() {
            g.1 = i + 1;
        }
    }
    let pos = |l: &Label| labels.binary_search(l).unwrap_or(0);
    let r: Vec<[usize; 2]> = theta.links_r.iter().map(|p| [pos(&p[0]), pos(&p[1])]).collect();
    let g: Vec<[usize; 2]> = theta.links_gamma.iter().map(|p| [pos(&p[0]), pos(&p[1])]).collect();
    let f: Vec<[usize; 4]> = theta.links_4.iter().map(|q| [pos(&q[0]), pos(&q[1]), pos(&q[2]), pos(&q[3])]).collect();
    let pp: Vec<[usize; 2]> = pen.iter().map(|p| [pos(&p[0]), pos(&p[1])]).collect();

    let group_perms: Vec<Vec<Vec<usize>>> = groups.iter().map(|&(a, b)| permutations((a..b).collect())).collect();
    let mut odo = vec![0usize; groups.len()];
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    let mut best: Option<ShapeKey> = None;
    loop {
        for (gi, &(a, _)) in groups.iter().enumerate() {
            for (k, &v) in group_perms[gi][odo[gi]].iter().enumerate() {
                perm[a + k] = v;
            }
        }
        let map2 = |links: &[[usize; 2]]| {
            let mut v: Vec<[u8; 2]> = links
                .iter()
                .map(|l| {
                    let (x, y) = (perm[l[0]] as u8, perm[l[1]] as u8);
                    [x.min(y), x.max(y)]
                })
                .collect();
            v.sort_unstable();
            v
        };
        let mut four: Vec<[u8; 4]> = f
            .iter()
            .map(|q| {
                let mut m = q.map(|i| perm[i] as u8);
                m.sort_unstable();
                m
            })
            .collect();
        four.sort_unstable();
        let key = ShapeKey {
            cells: cells.clone(),
            r: map2(&r),
            gamma: map2(&g),
            four,
            pen: map2(&pp),
        };
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
        let mut gi = 0;
        loop {
            if gi == odo.len() {
                return best.unwrap_or(ShapeKey {
                    cells,
                    r: vec![],
                    gamma: vec![],
                    four: vec![],
                    pen: vec![],
                });
            }
            odo[gi] += 1;
            if odo[gi] < group_perms[gi].len() {
                break;
            }
            odo[gi] = 0;
            gi += 1;
        }
    }
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let x = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}
