//! Regular quadrature lattice with nodes at `(i + 1/2) h`, global integer `i`.

use super::geometry::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    pub d: usize,
    pub h: f64,
    /// Global index of the first node per axis.
    pub lo: [i64; 3],
    pub dims: [usize; 3],
    pub periodic: bool,
}

impl QuadGrid {
    /// Non-periodic grid covering every node whose centre lies in `[min, max]`.
    pub fn window(d: usize, h: f64, min: &Point, max: &Point) -> Self {
        let mut lo = [0i64; 3];
        let mut dims = [1usize; 3];
        for k in 0..d {
            let a = (min[k] / h - 0.5).ceil() as i64;
            let b = (max[k] / h - 0.5).floor() as i64;
            lo[k] = a;
            dims[k] = (b - a + 1).max(0) as usize;
        }
        QuadGrid {
            d,
            h,
            lo,
            dims,
            periodic: false,
        }
    }

    /// Periodic grid on `[0, side)^d`; `side / h` must be (close to) an integer.
    pub fn periodic(d: usize, h: f64, side: f64) -> Result<Self> {
        let n = (side / h).round();
        if (n * h - side).abs() > 1e-9 * side || n < 1.0 {
            return Err(Error::param("side", "torus side is not a multiple of the grid spacing"));
        }
        let h = side / n;
        let mut dims = [1usize; 3];
        for x in dims.iter_mut().take(d) {
            *x = n as usize;
        }
        Ok(QuadGrid {
            d,
            h,
            lo: [0; 3],
            dims,
            periodic: true,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^d` of each node.
    pub fn weight(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn node(&self, flat: usize) -> Point {
        let i2 = flat % self.dims[2];
        let i1 = (flat / self.dims[2]) % self.dims[1];
        let i0 = flat / (self.dims[2] * self.dims[1]);
        let idx = [i0, i1, i2];
        let mut p = [0.0; 3];
        for k in 0..self.d {
            p[k] = ((self.lo[k] + idx[k] as i64) as f64 + 0.5) * self.h;
        }
        p
    }

    /// Flat index of global node `g`, if the grid holds it.
    pub fn flat_of(&self, g: &[i64; 3]) -> Option<usize> {
        let mut flat = 0usize;
        for k in 0..3 {
            let n = self.dims[k] as i64;
            let mut i = if k < self.d { g[k] - self.lo[k] } else { 0 };
            if self.periodic && k < self.d {
                i = i.rem_euclid(n);
            } else if i < 0 || i >= n {
                return None;
            }
            flat = flat * self.dims[k] + i as usize;
        }
        Some(flat)
    }

    /// Visits nodes strictly within `radius` of `centre` as `(flat index, squared distance)`.
    /// On a periodic grid `2 * radius` must not exceed the period.
    pub fn for_each_in_ball(&self, centre: &Point, radius: f64, mut f: impl FnMut(usize, f64)) {
        let mut ranges = [(0i64, 0i64); 3];
        for k in 0..3 {
            if k >= self.d {
                ranges[k] = (0, 0);
                continue;
            }
            let a = ((centre[k] - radius) / self.h - 0.5).ceil() as i64;
            let b = ((centre[k] + radius) / self.h - 0.5).floor() as i64;
            if self.periodic {
                ranges[k] = (a, b);
            } else {
                let lo = self.lo[k];
                let hi = lo + self.dims[k] as i64 - 1;
                ranges[k] = (a.max(lo), b.min(hi));
            }
            if ranges[k].0 > ranges[k].1 {
                return;
            }
        }
        let r2 = radius * radius;
        let coord = |k: usize, g: i64| -> f64 {
            if k < self.d {
                (g as f64 + 0.5) * self.h - centre[k]
            } else {
                0.0
            }
        };
        let local = |k: usize, g: i64| -> usize {
            if k >= self.d {
                0
            } else if self.periodic {
                g.rem_euclid(self.dims[k] as i64) as usize
            } else {
                (g - self.lo[k]) as usize
            }
        };
        for g0 in ranges[0].0..=ranges[0].1 {
            let x0 = coord(0, g0);
            let d0 = x0 * x0;
            if d0 >= r2 {
                continue;
            }
            let f0 = local(0, g0) * self.dims[1];
            for g1 in ranges[1].0..=ranges[1].1 {
                let x1 = coord(1, g1);
                let d1 = d0 + x1 * x1;
                if d1 >= r2 {
                    continue;
                }
                let f1 = (f0 + local(1, g1)) * self.dims[2];
                for g2 in ranges[2].0..=ranges[2].1 {
                    let x2 = coord(2, g2);
                    let d2 = d1 + x2 * x2;
                    if d2 < r2 {
                        f(f1 + local(2, g2), d2);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_visit_matches_brute_force() {
        let g = QuadGrid::window(2, 0.5, &[-3.0, -3.0, 0.0], &[3.0, 3.0, 0.0]);
        let c = [0.3, -0.7, 0.0];
        let mut hits = Vec::new();
        g.for_each_in_ball(&c, 1.7, |i, d2| hits.push((i, d2)));
        let mut brute = Vec::new();
        for i in 0..g.len() {
            let p = g.node(i);
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d2 < 1.7 * 1.7 {
                brute.push(i);
            }
        }
        let mut got: Vec<usize> = hits.iter().map(|x| x.0).collect();
        got.sort();
        assert_eq!(got, brute);
    }

    #[test]
    fn periodic_ball_wraps_once() {
        let g = QuadGrid::periodic(1, 1.0, 10.0).unwrap();
        let mut seen = Vec::new();
        g.for_each_in_ball(&[0.2, 0.0, 0.0], 2.0, |i, _| seen.push(i));
        seen.sort();
        assert_eq!(seen, vec![0, 1, 8, 9]);
    }
}
