//! Distributions on integer occupation numbers, the 1-D Vaserstein distance
//! and the boundary discrepancy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Point;

/// Normalisation tolerance of [`DiscreteDistribution`].
pub const NORMALISATION_TOLERANCE: f64 = 1e-12;

/// Probability vector on the contiguous range `n_min ..= n_min + probs.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    pub n_min: i64,
    pub probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(n_min: i64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::param("probs", "empty support"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("probs", "weights must be finite and non-negative"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > NORMALISATION_TOLERANCE {
            return Err(Error::param("probs", format!("sum {s} differs from 1")));
        }
        Ok(DiscreteDistribution { n_min, probs })
    }

    /// Normalises `exp(log_w)` after shifting by the largest finite log-weight.
    pub fn from_log_weights(n_min: i64, log_w: &[f64]) -> Result<Self> {
        if log_w.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Numerical("log-weight is NaN or +inf".into()));
        }
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::Numerical("all weights vanish".into()));
        }
        let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|x| x / s).collect();
        let err = 1.0 - probs.iter().sum::<f64>();
        let k = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        probs[k] += err;
        Self::new(n_min, probs)
    }

    pub fn point_mass(n: i64) -> Self {
        DiscreteDistribution {
            n_min: n,
            probs: vec![1.0],
        }
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.probs.len() as i64 - 1
    }

    /// Probability of `n` (zero off the support).
    pub fn prob(&self, n: i64) -> f64 {
        if n < self.n_min || n > self.n_max() {
            0.0
        } else {
            self.probs[(n - self.n_min) as usize]
        }
    }

    /// `P(X <= n)`.
    pub fn cdf(&self, n: i64) -> f64 {
        if n < self.n_min {
            return 0.0;
        }
        let top = (n.min(self.n_max()) - self.n_min) as usize;
        self.probs[..=top].iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| (self.n_min + k as i64) as f64 * p).sum()
    }
}

/// `W1(p1, p2) = sum_k |F1(k) - F2(k)|` for the cost `|n1 - n2|`.
pub fn vaserstein_1d(p1: &DiscreteDistribution, p2: &DiscreteDistribution) -> f64 {
    let lo = p1.n_min.min(p2.n_min);
    let hi = p1.n_max().max(p2.n_max());
    let (mut f1, mut f2, mut w) = (0.0, 0.0, 0.0);
    for k in lo..hi {
        f1 += p1.prob(k);
        f2 += p2.prob(k);
        w += (f1 - f2).abs();
    }
    w
}

/// Quantile (monotone) coupling of `p1` and `p2` as `(n1, n2, mass)` triples.
/// Its cost equals [`vaserstein_1d`].
pub fn quantile_coupling(p1: &DiscreteDistribution, p2: &DiscreteDistribution) -> Vec<(i64, i64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut r1 = p1.probs[0];
    let mut r2 = p2.probs[0];
    loop {
        let m = r1.min(r2);
        if m > 0.0 {
            out.push((p1.n_min + i as i64, p2.n_min + j as i64, m));
        }
        r1 -= m;
        r2 -= m;
        let adv1 = r1 <= r2;
        if adv1 {
            i += 1;
            if i == p1.probs.len() {
                break;
            }
            r1 += p1.probs[i];
        } else {
            j += 1;
            if j == p2.probs.len() {
                break;
            }
            r2 += p2.probs[j];
        }
    }
    out
}

/// Expected cost `sum |n1 - n2| mass` of a coupling.
pub fn coupling_cost(coupling: &[(i64, i64, f64)]) -> f64 {
    coupling.iter().map(|(a, b, m)| (a - b).abs() as f64 * m).sum()
}

/// Boundary discrepancy: the number of extra particles plus the least number
/// of mismatches over injections of the smaller configuration into the larger,
/// where a pair matches only if the positions coincide exactly.
pub fn discrepancy(q1: &[Point], q2: &[Point]) -> usize {
    let (small, large) = if q1.len() <= q2.len() { (q1, q2) } else { (q2, q1) };
    let p = large.len() - small.len();
    p + small.len() - max_coincidence_matching(small, large)
}

/// [`discrepancy`] restricted to the particles inside the `ell` cube `cell`.
pub fn discrepancy_in_cube(q1: &[Point], q2: &[Point], cell: &crate::model::Cell, d: usize, ell: f64) -> usize {
    let inside = |q: &[Point]| -> Vec<Point> {
        q.iter()
            .copied()
            .filter(|p| crate::model::cell_of(p, d, ell)[..d] == cell[..d])
            .collect()
    };
    discrepancy(&inside(q1), &inside(q2))
}

/// Maximum matching of the bipartite exact-coincidence graph (augmenting paths).
fn max_coincidence_matching(a: &[Point], b: &[Point]) -> usize {
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|p| (0..b.len()).filter(|&j| b[j] == *p).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; b.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..a.len() {
        let mut seen = vec![false; b.len()];
        if augment(i, &adj, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}
