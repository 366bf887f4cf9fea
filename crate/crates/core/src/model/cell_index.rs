use std::collections::HashMap;

use super::geometry::{Metric, Point};

type Key = [i64; 3];

/// Spatial hash mapping cubic cells to the particle ids they contain.
///
/// Cells have side at least `min_cell`, so every point within `min_cell` of a
/// query lies in the query's cell or one of its `3^d - 1` neighbours.
#[derive(Debug, Clone)]
pub struct CellIndex {
    d: usize,
    cell: f64,
    wrap: Option<i64>,
    map: HashMap<Key, Vec<usize>>,
    key_of: Vec<Key>,
}

impl CellIndex {
    pub fn new(metric: Metric, min_cell: f64) -> Self {
        let min_cell = if min_cell > 0.0 { min_cell } else { 1.0 };
        let (cell, wrap) = match metric.period {
            Some(l) => {
                let n = ((l / min_cell).floor() as i64).max(1);
                (l / n as f64, Some(n))
            }
            None => (min_cell, None),
        };
        CellIndex {
            d: metric.d,
            cell,
            wrap,
            map: HashMap::new(),
            key_of: Vec::new(),
        }
    }

    pub fn build(metric: Metric, min_cell: f64, points: &[Point]) -> Self {
        let mut idx = Self::new(metric, min_cell);
        for (i, p) in points.iter().enumerate() {
            idx.push(i, p);
        }
        idx
    }

    pub fn cell_side(&self) -> f64 {
        self.cell
    }

    fn key(&self, p: &Point) -> Key {
        let mut k = [0i64; 3];
        for a in 0..self.d {
            let mut c = (p[a] / self.cell).floor() as i64;
            if let Some(n) = self.wrap {
                c = c.rem_euclid(n);
            }
            k[a] = c;
        }
        k
    }

    /// Registers particle `id` (ids must be pushed in order `0, 1, 2, ...`).
    pub fn push(&mut self, id: usize, p: &Point) {
        debug_assert_eq!(id, self.key_of.len());
        let k = self.key(p);
        self.map.entry(k).or_default().push(id);
        self.key_of.push(k);
    }

    /// Removes particle `id` and renames the last id to `id` (mirrors `Vec::swap_remove`).
    pub fn swap_remove(&mut self, id: usize) {
        let k = self.key_of[id];
        self.detach(k, id);
        let last = self.key_of.len() - 1;
        if id != last {
            let lk = self.key_of[last];
            if let Some(v) = self.map.get_mut(&lk) {
                if let Some(slot) = v.iter_mut().find(|x| **x == last) {
                    *slot = id;
                }
            }
            self.key_of[id] = lk;
        }
        self.key_of.pop();
    }

    pub fn relocate(&mut self, id: usize, p: &Point) {
        let new = self.key(p);
        let old = self.key_of[id];
        if new != old {
            self.detach(old, id);
            self.map.entry(new).or_default().push(id);
            self.key_of[id] = new;
        }
    }

    fn detach(&mut self, k: Key, id: usize) {
        if let Some(v) = self.map.get_mut(&k) {
            if let Some(pos) = v.iter().position(|x| *x == id) {
                v.swap_remove(pos);
            }
            if v.is_empty() {
                self.map.remove(&k);
            }
        }
    }

    /// Calls `f` with every id in the cells neighbouring `p` (each id once).
    pub fn for_each_near(&self, p: &Point, mut f: impl FnMut(usize)) {
        let base = self.key(p);
        let span = |a: usize| if a < self.d { -1..=1 } else { 0..=0 };
        let mut seen: [Key; 27] = [[i64::MIN; 3]; 27];
        let mut n_seen = 0;
        for dx in span(0) {
            for dy in span(1) {
                for dz in span(2) {
                    let mut k = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if let Some(n) = self.wrap {
                        for c in k.iter_mut().take(self.d) {
                            *c = c.rem_euclid(n);
                        }
                    }
                    if seen[..n_seen].contains(&k) {
                        continue;
                    }
                    seen[n_seen] = k;
                    n_seen += 1;
                    if let Some(v) = self.map.get(&k) {
                        for &id in v {
                            f(id);
                        }
                    }
                }
            }
        }
    }

    /// Checks that the index describes exactly `points`.
    pub fn audit(&self, points: &[Point]) -> bool {
        if self.key_of.len() != points.len() {
            return false;
        }
        let mut total = 0;
        for (k, ids) in &self.map {
            total += ids.len();
            for &id in ids {
                if id >= points.len() || self.key_of[id] != *k || self.key(&points[id]) != *k {
                    return false;
                }
            }
        }
        total == points.len()
    }
}
