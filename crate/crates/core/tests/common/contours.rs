use std::collections::BTreeSet;

use lmphc_core::coarse_grain::{Contour, PhaseField, PhaseLevel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Coord = Vec<i64>;

pub fn all_coords(n: usize, d: usize) -> Vec<Coord> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|c| (0..n as i64).map(move |v| [c.clone(), vec![v]].concat()))
            .collect();
    }
    out
}

pub fn flat_of(c: &[i64], n: usize) -> usize {
    c.iter().fold(0, |acc, &v| acc * n + v as usize)
}

pub fn coord_of(x: usize, n: usize, d: usize) -> Coord {
    let mut rest = x;
    let mut v = vec![0i64; d];
    for k in (0..d).rev() {
        v[k] = (rest % n) as i64;
        rest /= n;
    }
    v
}

pub fn neighbours(c: &[i64], n: usize, faces: bool) -> Vec<Coord> {
    let d = c.len();
    let mut out = Vec::new();
    for off in all_coords(3, d) {
        let off: Vec<i64> = off.iter().map(|v| v - 1).collect();
        let nz = off.iter().filter(|&&v| v != 0).count();
        if nz == 0 || (faces && nz != 1) {
            continue;
        }
        let y: Coord = c.iter().zip(&off).map(|(a, b)| a + b).collect();
        if y.iter().all(|&v| v >= 0 && v < n as i64) {
            out.push(y);
        }
    }
    out
}

/// Depth-first components of `member`, sorted by their smallest cube.
pub fn flood(n: usize, d: usize, member: &dyn Fn(&[i64]) -> bool, faces: bool) -> Vec<BTreeSet<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in all_coords(n, d) {
        if !member(&c) || seen.contains(&flat_of(&c, n)) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![c];
        while let Some(x) = stack.pop() {
            let f = flat_of(&x, n);
            if !seen.insert(f) {
                continue;
            }
            comp.insert(f);
            for y in neighbours(&x, n, faces) {
                if member(&y) && !seen.contains(&flat_of(&y, n)) {
                    stack.push(y);
                }
            }
        }
        out.push(comp);
    }
    out
}

pub struct OracleContour {
    pub sign: i8,
    pub sp: BTreeSet<usize>,
    /// `(sign, cubes, boundary)` per interior component.
    pub interiors: Vec<(i8, BTreeSet<usize>, BTreeSet<usize>)>,
    pub a_ext: BTreeSet<usize>,
}

fn uniform_sign(values: &[i8], set: &BTreeSet<usize>) -> i8 {
    let v: BTreeSet<i8> = set.iter().map(|&x| values[x]).collect();
    if v.len() == 1 {
        *v.iter().next().unwrap()
    } else {
        0
    }
}

pub fn oracle_contours(values: &[i8], n: usize, d: usize) -> Vec<OracleContour> {
    let at = |c: &[i64]| values[flat_of(c, n)];
    let on_frame = |c: &[i64]| c.iter().any(|&v| v == 0 || v == n as i64 - 1);
    let supports = flood(n, d, &|c| at(c) == 0, false);
    let mut out = Vec::new();
    for sp in supports {
        let comps = flood(n, d, &|c| !sp.contains(&flat_of(c, n)), true);
        let mut c_gamma = sp.clone();
        let mut interiors = Vec::new();
        for comp in comps {
            let touches = all_coords(n, d).into_iter().any(|c| on_frame(&c) && comp.contains(&flat_of(&c, n)));
            if touches {
                continue;
            }
            c_gamma.extend(comp.iter().copied());
            let boundary: BTreeSet<usize> = all_coords(n, d)
                .into_iter()
                .filter(|c| comp.contains(&flat_of(c, n)))
                .filter(|c| neighbours(c, n, false).iter().any(|y| sp.contains(&flat_of(y, n))))
                .map(|c| flat_of(&c, n))
                .collect();
            interiors.push((uniform_sign(values, &boundary), comp, boundary));
        }
        let a_ext: BTreeSet<usize> = all_coords(n, d)
            .into_iter()
            .filter(|c| !c_gamma.contains(&flat_of(c, n)))
            .filter(|c| neighbours(c, n, false).iter().any(|y| c_gamma.contains(&flat_of(y, n))))
            .map(|c| flat_of(&c, n))
            .collect();
        out.push(OracleContour {
            sign: uniform_sign(values, &a_ext),
            sp,
            interiors,
            a_ext,
        });
    }
    out
}

/// Random `eta` on `n * ratio` fine cubes per axis: each coarse cube is
/// uniformly plus, uniformly minus or mixed; the outer two layers are plus.
pub fn random_eta(rng: &mut ChaCha8Rng, d: usize, n: usize, ratio: usize) -> PhaseField {
    let fine = n * ratio;
    let kinds: Vec<u8> = (0..n.pow(d as u32)).map(|_| rng.random_range(0..10u8)).collect();
    let mut values = vec![1i8; fine.pow(d as u32)];
    for c in all_coords(fine, d) {
        let coarse: Vec<i64> = c.iter().map(|&v| v / ratio as i64).collect();
        if coarse.iter().any(|&v| v < 2 || v >= n as i64 - 2) {
            continue;
        }
        values[flat_of(&c, fine)] = match kinds[flat_of(&coarse, n)] {
            0..=5 => 1,
            6..=7 => -1,
            _ => rng.random_range(-1..=1i8),
        };
    }
    PhaseField::new(PhaseLevel::Eta, d, 1.0, fine, false, values).unwrap()
}

/// Uniform random `eta` with a few undecided and minus fine cubes.
pub fn sparse_random_eta(rng: &mut ChaCha8Rng, d: usize, fine: usize) -> PhaseField {
    let values: Vec<i8> = (0..fine.pow(d as u32))
        .map(|_| match rng.random_range(0..20u8) {
            0 => 0,
            1..=3 => -1,
            _ => 1,
        })
        .collect();
    PhaseField::new(PhaseLevel::Eta, d, 1.0, fine, false, values).unwrap()
}

pub fn sets(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

/// First difference between extracted contours and the oracle, if any.
pub fn contour_mismatch(got: &[Contour], want: &[OracleContour], ratio: usize) -> Option<String> {
    if got.len() != want.len() {
        return Some(format!("{} contours vs {}", got.len(), want.len()));
    }
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        let d = g.d;
        let same_interiors = g.interiors.len() == w.interiors.len()
            && g.interiors
                .iter()
                .zip(&w.interiors)
                .all(|(gi, wi)| gi.sign == wi.0 && sets(&gi.cubes) == wi.1 && sets(&gi.boundary) == wi.2);
        let c = sets(&g.c_gamma());
        let ok = sets(&g.sp) == w.sp
            && g.sign == w.sign
            && g.n_gamma == w.sp.len()
            && sets(&g.a_ext) == w.a_ext
            && same_interiors
            && sets(&g.a()).iter().all(|x| c.contains(x) && !g.sp.contains(x))
            && g.a_ext.iter().all(|x| !c.contains(x))
            && g.eta.len() == g.n_gamma * ratio.pow(d as u32);
        if !ok {
            return Some(format!("contour {k} differs"));
        }
    }
    None
}

/// Supports of distinct oracle contours never touch.
pub fn supports_separated(want: &[OracleContour], n: usize, d: usize) -> bool {
    want.iter().enumerate().all(|(i, a)| {
        want[i + 1..].iter().all(|b| {
            a.sp
                .iter()
                .all(|&x| neighbours(&coord_of(x, n, d), n, false).iter().all(|y| !b.sp.contains(&flat_of(y, n))))
        })
    })
}

/// First violation of `Theta != 0 => theta = Theta` and
/// `theta != 0 => eta = theta` on every sub-cube.
pub fn strictness_violation(eta: &PhaseField, theta: &PhaseField, big: &PhaseField, n: usize, ratio: usize) -> Option<String> {
    let d = eta.d;
    let fine = n * ratio;
    for c in all_coords(n, d) {
        let x = flat_of(&c, n);
        if big.values[x] != 0 && theta.values[x] != big.values[x] {
            return Some(format!("Theta without theta at {c:?}"));
        }
        if theta.values[x] != 0 {
            for sub in all_coords(ratio, d) {
                let f: Vec<i64> = c.iter().zip(&sub).map(|(a, b)| a * ratio as i64 + b).collect();
                if eta.values[flat_of(&f, fine)] != theta.values[x] {
                    return Some(format!("theta without eta at {c:?}"));
                }
            }
        }
    }
    None
}

/// Plus background on 11 x 11 coarse cubes, two fine cubes per coarse
/// axis, with a minus block of 3 x 3 coarse cubes at the centre.
pub fn annulus_eta() -> (PhaseField, usize, usize) {
    let (n, ratio, d) = (11usize, 2usize, 2usize);
    let fine = n * ratio;
    let mut values = vec![1i8; fine * fine];
    for c in all_coords(fine, d) {
        if c.iter().all(|&v| (8..14).contains(&v)) {
            values[flat_of(&c, fine)] = -1;
        }
    }
    (PhaseField::new(PhaseLevel::Eta, d, 1.0, fine, false, values).unwrap(), n, ratio)
}
