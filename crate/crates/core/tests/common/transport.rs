use lmphc_core::dobrushin::DiscreteDistribution;
use lmphc_core::model::Point;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_dist(rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    let n = rng.random_range(1..=10);
    let n_min = rng.random_range(-3..=3);
    let w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.2) { f64::NEG_INFINITY } else { rng.random::<f64>().ln() })
        .collect();
    let w = if w.iter().all(|x| *x == f64::NEG_INFINITY) { vec![0.0; n] } else { w };
    DiscreteDistribution::from_log_weights(n_min, &w).unwrap()
}

/// Optimal transport cost with cost `|n1 - n2|` by linear programming.
pub fn lp_transport(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![];
    for i in 0..p.probs.len() {
        let mut row = vec![];
        for j in 0..q.probs.len() {
            let cost = ((p.n_min + i as i64) - (q.n_min + j as i64)).abs() as f64;
            row.push(lp.add_var(cost, (0.0, f64::INFINITY)));
        }
        vars.push(row);
    }
    for (i, row) in vars.iter().enumerate() {
        let terms: Vec<_> = row.iter().map(|v| (*v, 1.0)).collect();
        lp.add_constraint(&terms[..], ComparisonOp::Eq, p.probs[i]);
    }
    for j in 0..q.probs.len() {
        let terms: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
        lp.add_constraint(&terms[..], ComparisonOp::Eq, q.probs[j]);
    }
    lp.solve().unwrap().objective()
}

/// Northwest-corner coupling with the second marginal optionally reversed.
pub fn greedy_coupling(a: &DiscreteDistribution, b: &DiscreteDistribution, reverse: bool) -> Vec<(i64, i64, f64)> {
    let mut bs: Vec<(i64, f64)> = (0..b.probs.len()).map(|j| (b.n_min + j as i64, b.probs[j])).collect();
    if reverse {
        bs.reverse();
    }
    let mut out = vec![];
    let mut j = 0;
    for (i, &pa) in a.probs.iter().enumerate() {
        let mut left = pa;
        while left > 1e-15 && j < bs.len() {
            let m = left.min(bs[j].1);
            out.push((a.n_min + i as i64, bs[j].0, m));
            left -= m;
            bs[j].1 -= m;
            if bs[j].1 <= 1e-15 {
                j += 1;
            }
        }
    }
    out
}

/// Minimum over injections of the smaller set into the larger of the number
/// of unmatched or moved points, by exhaustive search.
pub fn brute_discrepancy(q1: &[Point], q2: &[Point]) -> usize {
    let (s, l) = if q1.len() <= q2.len() { (q1, q2) } else { (q2, q1) };
    fn rec(s: &[Point], l: &[Point], used: &mut Vec<bool>, i: usize) -> usize {
        if i == s.len() {
            return 0;
        }
        let mut best = usize::MAX;
        for j in 0..l.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(usize::from(s[i] != l[j]) + rec(s, l, used, i + 1));
                used[j] = false;
            }
        }
        best
    }
    l.len() - s.len() + rec(s, l, &mut vec![false; l.len()], 0)
}

/// Point sets of sizes `n <= 6` and `n + p`, `p <= 2`, drawing repeatedly
/// from a small pool so that coincidences are common.
pub fn random_point_sets(rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<Point>) {
    let pool: Vec<Point> = (0..5).map(|k| [k as f64 * 0.5, 0.25, 0.0]).collect();
    let n = rng.random_range(0..=6);
    let p = rng.random_range(0..=2);
    let mut pick = || -> Point {
        if rng.random_bool(0.6) {
            pool[rng.random_range(0..pool.len())]
        } else {
            [rng.random(), rng.random(), 0.0]
        }
    };
    let q1: Vec<Point> = (0..n).map(|_| pick()).collect();
    let q2: Vec<Point> = (0..n + p).map(|_| pick()).collect();
    (q1, q2)
}
