//! Coarse-graining into cube counts, the phase indicators `eta`, `theta` and
//! `Theta`, contour extraction, correlation observables and empirical contour
//! weights.
//!
//! Connectivity follows the common-vertex rule (`3^d - 1` neighbours) for the
//! incorrect set; complement components use face adjacency so that interiors
//! of vertex-connected supports are well defined.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::MeanFieldSolution;
use crate::model::{cell_of, multibody_integral, Cell, Domain, Metric, ModelParams, ParticleConfiguration, Point};
use crate::sampler::{lattice_fill, phase_configuration, SamplerConfig, SamplerState};
use crate::stats::{integrated_autocorrelation, wilson_interval};

/// Occupation counts on a partition of the domain into cubes of side `ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub d: usize,
    pub ell: f64,
    /// Cubes per axis.
    pub n: usize,
    pub periodic: bool,
    pub counts: Vec<u32>,
}

impl CoarseGrid {
    pub fn new(domain: &Domain, ell: f64) -> Result<Self> {
        let ratio = domain.side / ell;
        let n = ratio.round();
        if n < 1.0 || (n - ratio).abs() > 1e-9 * ratio {
            return Err(Error::param("ell", "cube side does not divide the domain side"));
        }
        let n = n as usize;
        Ok(CoarseGrid {
            d: domain.d,
            ell,
            n,
            periodic: domain.kind == crate::model::DomainKind::Torus,
            counts: vec![0; n.pow(domain.d as u32)],
        })
    }

    /// Counts of `points` (points outside the box are ignored).
    pub fn from_points<'a>(domain: &Domain, ell: f64, points: impl IntoIterator<Item = &'a Point>) -> Result<Self> {
        let mut g = Self::new(domain, ell)?;
        for p in points {
            if let Some(i) = g.index_of(p) {
                g.counts[i] += 1;
            }
        }
        Ok(g)
    }

    /// Counts of the configuration together with boundary particles inside the box.
    pub fn of_configuration(q: &ParticleConfiguration, ell: f64) -> Result<Self> {
        Self::from_points(q.domain(), ell, q.positions().iter().chain(q.domain().boundary()))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        let side = self.n as f64 * self.ell;
        let mut flat = 0;
        for k in 0..self.d {
            if !(p[k] >= 0.0 && p[k] < side) {
                return None;
            }
            let c = ((p[k] / self.ell) as usize).min(self.n - 1);
            flat = flat * self.n + c;
        }
        Some(flat)
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        unflatten(flat, self.n, self.d)
    }

    pub fn density(&self, flat: usize) -> f64 {
        self.counts[flat] as f64 / self.ell.powi(self.d as i32)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn centre(&self, flat: usize) -> Point {
        let c = self.coords(flat);
        let mut p = [0.0; 3];
        for k in 0..self.d {
            p[k] = (c[k] as f64 + 0.5) * self.ell;
        }
        p
    }
}

/// `|C ∩ q| / ell^d` for the cube with integer coordinates `cube`.
pub fn empirical_density(q: &ParticleConfiguration, ell: f64, cube: [usize; 3]) -> Result<f64> {
    let g = CoarseGrid::of_configuration(q, ell)?;
    if cube[..g.d].iter().any(|&c| c >= g.n) {
        return Err(Error::param("cube", "outside the domain"));
    }
    let mut flat = 0;
    for &c in &cube[..g.d] {
        flat = flat * g.n + c;
    }
    Ok(g.density(flat))
}

fn unflatten(flat: usize, n: usize, d: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut rest = flat;
    for k in (0..d).rev() {
        out[k] = rest % n;
        rest /= n;
    }
    out
}

fn flatten(c: &[usize; 3], n: usize, d: usize) -> usize {
    c[..d].iter().fold(0, |acc, &x| acc * n + x)
}

/// Acceptance windows `|rho - rho_pm| <= zeta` of the phase indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseWindows {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub zeta: f64,
}

impl PhaseWindows {
    pub fn new(rho_minus: f64, rho_plus: f64, zeta: f64) -> Result<Self> {
        if !(rho_minus >= 0.0 && rho_plus > rho_minus) {
            return Err(Error::param("rho", "need 0 <= rho_minus < rho_plus"));
        }
        if !(zeta > 0.0) {
            return Err(Error::param("zeta", "must be positive"));
        }
        if zeta >= 0.5 * (rho_plus - rho_minus) {
            return Err(Error::param(
                "zeta",
                format!(
                    "{zeta} >= (rho_plus - rho_minus)/2 = {}: the phase windows overlap",
                    0.5 * (rho_plus - rho_minus)
                ),
            ));
        }
        Ok(PhaseWindows {
            rho_minus,
            rho_plus,
            zeta,
        })
    }

    /// Windows at the coexisting densities with `zeta = gamma^a`.
    pub fn from_solution(sol: &MeanFieldSolution, params: &ModelParams) -> Result<Self> {
        Self::new(sol.rho_minus, sol.rho_plus, params.scales().zeta)
    }

    pub fn classify(&self, rho: f64) -> i8 {
        if (rho - self.rho_plus).abs() <= self.zeta {
            1
        } else if (rho - self.rho_minus).abs() <= self.zeta {
            -1
        } else {
            0
        }
    }

    pub fn density(&self, sign: i8) -> f64 {
        if sign > 0 {
            self.rho_plus
        } else {
            self.rho_minus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLevel {
    Eta,
    Theta,
    BigTheta,
}

/// A `{-1, 0, 1}` field on a cubic partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub level: PhaseLevel,
    pub d: usize,
    pub ell: f64,
    pub n: usize,
    pub periodic: bool,
    pub values: Vec<i8>,
}

impl PhaseField {
    pub fn new(level: PhaseLevel, d: usize, ell: f64, n: usize, periodic: bool, values: Vec<i8>) -> Result<Self> {
        if values.len() != n.pow(d as u32) {
            return Err(Error::param("values", "length does not match the cube grid"));
        }
        if values.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::param("values", "entries must be -1, 0 or 1"));
        }
        Ok(PhaseField {
            level,
            d,
            ell,
            n,
            periodic,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        unflatten(flat, self.n, self.d)
    }

    pub fn flat(&self, c: &[usize; 3]) -> usize {
        flatten(c, self.n, self.d)
    }

    /// Neighbour with the given offset, wrapped on periodic fields.
    fn offset(&self, flat: usize, off: &[i64; 3]) -> Option<usize> {
        let c = self.coords(flat);
        let mut out = [0usize; 3];
        for k in 0..self.d {
            let mut x = c[k] as i64 + off[k];
            if self.periodic {
                x = x.rem_euclid(self.n as i64);
            } else if x < 0 || x >= self.n as i64 {
                return None;
            }
            out[k] = x as usize;
        }
        Some(self.flat(&out))
    }

    /// Visits the common-vertex neighbours of `flat` (each at most once).
    pub fn for_each_neighbour(&self, flat: usize, mut f: impl FnMut(usize)) {
        let mut seen: Vec<usize> = Vec::with_capacity(26);
        for off in vertex_offsets(self.d) {
            if let Some(j) = self.offset(flat, &off) {
                if j != flat && !seen.contains(&j) {
                    seen.push(j);
                    f(j);
                }
            }
        }
    }

    /// Visits the face neighbours of `flat`.
    pub fn for_each_face_neighbour(&self, flat: usize, mut f: impl FnMut(usize)) {
        let mut seen: Vec<usize> = Vec::with_capacity(6);
        for k in 0..self.d {
            for s in [-1i64, 1] {
                let mut off = [0i64; 3];
                off[k] = s;
                if let Some(j) = self.offset(flat, &off) {
                    if j != flat && !seen.contains(&j) {
                        seen.push(j);
                        f(j);
                    }
                }
            }
        }
    }

    /// Whether the cube touches the outer face of a non-periodic grid.
    pub fn on_frame(&self, flat: usize) -> bool {
        !self.periodic && self.coords(flat)[..self.d].iter().any(|&c| c == 0 || c + 1 == self.n)
    }

    /// Writes `index,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cube,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }
}

fn vertex_offsets(d: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    let r = |k: usize| if k < d { -1..=1 } else { 0..=0 };
    for a in r(0) {
        for b in r(1) {
            for c in r(2) {
                if (a, b, c) != (0, 0, 0) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

/// `eta` on the `ell_minus` partition from counts.
pub fn eta_from_counts(grid: &CoarseGrid, windows: &PhaseWindows) -> PhaseField {
    let values = (0..grid.len()).map(|i| windows.classify(grid.density(i))).collect();
    PhaseField {
        level: PhaseLevel::Eta,
        d: grid.d,
        ell: grid.ell,
        n: grid.n,
        periodic: grid.periodic,
        values,
    }
}

/// `eta` of a configuration (boundary particles inside the box included).
pub fn eta_field(q: &ParticleConfiguration, params: &ModelParams, windows: &PhaseWindows) -> Result<PhaseField> {
    PhaseWindows::new(windows.rho_minus, windows.rho_plus, windows.zeta)?;
    let grid = CoarseGrid::of_configuration(q, params.scales().ell_minus)?;
    Ok(eta_from_counts(&grid, windows))
}

/// `theta` and `Theta` on the partition coarser by `ratio` per axis.
pub fn theta_fields(eta: &PhaseField, ratio: usize) -> Result<(PhaseField, PhaseField)> {
    if eta.level != PhaseLevel::Eta {
        return Err(Error::param("eta", "expects an eta field"));
    }
    if ratio == 0 || !eta.n.is_multiple_of(ratio) {
        return Err(Error::param("ratio", "must divide the number of fine cubes per axis"));
    }
    let n = eta.n / ratio;
    let d = eta.d;
    let mut theta = PhaseField {
        level: PhaseLevel::Theta,
        d,
        ell: eta.ell * ratio as f64,
        n,
        periodic: eta.periodic,
        values: vec![0; n.pow(d as u32)],
    };
    for x in 0..theta.len() {
        let c = theta.coords(x);
        let mut sign: Option<i8> = None;
        let mut agree = true;
        for_each_subcube(&c, ratio, d, |fine| {
            let v = eta.values[flatten(&fine, eta.n, d)];
            match sign {
                None => sign = Some(v),
                Some(s) if s != v => agree = false,
                _ => {}
            }
        });
        theta.values[x] = if agree { sign.unwrap_or(0) } else { 0 };
    }
    let mut big = theta.clone();
    big.level = PhaseLevel::BigTheta;
    for x in 0..theta.len() {
        let s = theta.values[x];
        if s == 0 {
            continue;
        }
        let mut ok = true;
        theta.for_each_neighbour(x, |y| ok &= theta.values[y] == s);
        if !ok {
            big.values[x] = 0;
        }
    }
    Ok((theta, big))
}

/// Fine-cube coordinates inside the coarse cube `c`.
fn for_each_subcube(c: &[usize; 3], ratio: usize, d: usize, mut f: impl FnMut([usize; 3])) {
    let r = |k: usize| if k < d { ratio } else { 1 };
    for a in 0..r(0) {
        for b in 0..r(1) {
            for e in 0..r(2) {
                let mut fine = [a, b, e];
                for k in 0..d {
                    fine[k] += c[k] * ratio;
                }
                for x in fine.iter_mut().skip(d) {
                    *x = 0;
                }
                f(fine);
            }
        }
    }
}

/// A bounded component of the complement of a contour support.
#[derive(Debug, Clone, PartialEq)]
pub struct Interior {
    /// Sign of `Theta` on `boundary`; 0 if it is not constant.
    pub sign: i8,
    pub cubes: Vec<usize>,
    /// `A_i`: cubes of this component next to the support.
    pub boundary: Vec<usize>,
}

/// A maximal connected component of `{Theta = 0}` with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Sign of `Theta` on `a_ext`; 0 if it is not constant.
    pub sign: i8,
    pub d: usize,
    /// Cubes per axis of the `ell_plus` partition.
    pub n: usize,
    pub sp: Vec<usize>,
    /// `eta` on the fine cubes of `sp`, cube by cube in lexicographic order.
    pub eta: Vec<i8>,
    pub interiors: Vec<Interior>,
    /// `A_ext`: cubes outside `c(Gamma)` next to it.
    pub a_ext: Vec<usize>,
    /// Number of `ell_plus` cubes in the support.
    pub n_gamma: usize,
}

#[derive(Serialize)]
struct InteriorDump {
    sign: i8,
    cubes: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct ContourDump {
    sign: i8,
    cubes: Vec<Vec<usize>>,
    eta: Vec<i8>,
    interiors: Vec<InteriorDump>,
    #[serde(rename = "N_gamma")]
    n_gamma: usize,
}

impl Contour {
    /// `c(Gamma) = sp ∪ int`, sorted.
    pub fn c_gamma(&self) -> Vec<usize> {
        let mut v = self.sp.clone();
        for i in &self.interiors {
            v.extend_from_slice(&i.cubes);
        }
        v.sort_unstable();
        v
    }

    /// `A(Gamma)`: the union of the interior boundaries.
    pub fn a(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.interiors.iter().flat_map(|i| i.boundary.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    pub fn coords(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, self.n, self.d)[..self.d].to_vec()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = ContourDump {
            sign: self.sign,
            cubes: self.sp.iter().map(|&c| self.coords(c)).collect(),
            eta: self.eta.clone(),
            interiors: self
                .interiors
                .iter()
                .map(|i| InteriorDump {
                    sign: i.sign,
                    cubes: i.cubes.iter().map(|&c| self.coords(c)).collect(),
                })
                .collect(),
            n_gamma: self.n_gamma,
        };
        serde_json::to_value(dump).expect("contour dump is plain data")
    }
}

fn components(field: &PhaseField, member: impl Fn(usize) -> bool, faces: bool) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; field.len()];
    let mut out = Vec::new();
    for start in 0..field.len() {
        if label[start] != usize::MAX || !member(start) {
            continue;
        }
        let id = out.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            let mut visit = |y: usize| {
                if label[y] == usize::MAX && member(y) {
                    label[y] = id;
                    comp.push(y);
                    queue.push_back(y);
                }
            };
            if faces {
                field.for_each_face_neighbour(x, &mut visit);
            } else {
                field.for_each_neighbour(x, &mut visit);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn constant_sign(field: &PhaseField, cubes: &[usize]) -> i8 {
    let mut it = cubes.iter().map(|&c| field.values[c]);
    match it.next() {
        None => 0,
        Some(s) if it.all(|v| v == s) => s,
        Some(_) => 0,
    }
}

/// Contours of a `Theta` field; `eta` (on the refining partition) supplies the
/// decoration and may be omitted.
///
/// On a box the outermost layer must be free of `Theta = 0`, and the exterior
/// is the union of complement components touching it. On a periodic field the
/// exterior is the largest complement component.
pub fn extract_contours(theta: &PhaseField, eta: Option<&PhaseField>) -> Result<Vec<Contour>> {
    if !theta.periodic {
        if let Some(x) = (0..theta.len()).find(|&x| theta.on_frame(x) && theta.values[x] == 0) {
            let c = theta.coords(x);
            return Err(Error::ContourReachesBoundary(c[..theta.d].iter().map(|&v| v as i64).collect()));
        }
    }
    let ratio = match eta {
        Some(e) => {
            if e.d != theta.d || e.n % theta.n != 0 {
                return Err(Error::param("eta", "does not refine the Theta partition"));
            }
            e.n / theta.n
        }
        None => 0,
    };
    let supports = components(theta, |x| theta.values[x] == 0, false);
    let mut out = Vec::with_capacity(supports.len());
    for sp in supports {
        let mut in_sp = vec![false; theta.len()];
        for &x in &sp {
            in_sp[x] = true;
        }
        let comps = components(theta, |x| !in_sp[x], true);
        let ext_ids: Vec<usize> = if theta.periodic {
            let best = comps
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            best.into_iter().collect()
        } else {
            (0..comps.len())
                .filter(|&i| comps[i].iter().any(|&x| theta.on_frame(x)))
                .collect()
        };
        let mut in_c = in_sp.clone();
        let mut interiors = Vec::new();
        for (i, comp) in comps.iter().enumerate() {
            if ext_ids.contains(&i) {
                continue;
            }
            for &x in comp {
                in_c[x] = true;
            }
            let boundary: Vec<usize> = comp
                .iter()
                .copied()
                .filter(|&x| {
                    let mut near = false;
                    theta.for_each_neighbour(x, |y| near |= in_sp[y]);
                    near
                })
                .collect();
            interiors.push(Interior {
                sign: constant_sign(theta, &boundary),
                cubes: comp.clone(),
                boundary,
            });
        }
        let a_ext: Vec<usize> = (0..theta.len())
            .filter(|&x| {
                if in_c[x] {
                    return false;
                }
                let mut near = false;
                theta.for_each_neighbour(x, |y| near |= in_c[y]);
                near
            })
            .collect();
        let mut eta_r = Vec::new();
        if let Some(e) = eta {
            for &x in &sp {
                for_each_subcube(&theta.coords(x), ratio, theta.d, |fine| {
                    eta_r.push(e.values[flatten(&fine, e.n, e.d)]);
                });
            }
        }
        out.push(Contour {
            sign: constant_sign(theta, &a_ext),
            d: theta.d,
            n: theta.n,
            n_gamma: sp.len(),
            sp,
            eta: eta_r,
            interiors,
            a_ext,
        });
    }
    Ok(out)
}

/// Plus contour made of `length` consecutive `ell_plus` cubes along the first
/// axis, its fine cubes decorated with `pattern` repeated cyclically.
pub fn segment_contour(d: usize, ratio: usize, length: usize, pattern: &[i8]) -> Result<Contour> {
    if length == 0 || pattern.is_empty() || ratio == 0 {
        return Err(Error::param("length", "segment, pattern and ratio must be non-empty"));
    }
    if pattern.iter().any(|v| !(-1..=1).contains(v)) {
        return Err(Error::param("pattern", "values must lie in {-1, 0, 1}"));
    }
    let n = length + 4;
    let mid = n / 2;
    let on_segment = |c: &[usize; 3]| (2..2 + length).contains(&c[0]) && c[1..d].iter().all(|&v| v == mid);
    let coarse = n.pow(d as u32);
    let theta: Vec<i8> = (0..coarse).map(|x| if on_segment(&unflatten(x, n, d)) { 0 } else { 1 }).collect();
    let fine_n = n * ratio;
    let mut eta = vec![1i8; fine_n.pow(d as u32)];
    let mut k = 0;
    for x in 0..coarse {
        let c = unflatten(x, n, d);
        if !on_segment(&c) {
            continue;
        }
        for_each_subcube(&c, ratio, d, |fine| {
            eta[flatten(&fine, fine_n, d)] = pattern[k % pattern.len()];
            k += 1;
        });
    }
    let theta = PhaseField::new(PhaseLevel::BigTheta, d, ratio as f64, n, false, theta)?;
    let eta = PhaseField::new(PhaseLevel::Eta, d, 1.0, fine_n, false, eta)?;
    let mut cs = extract_contours(&theta, Some(&eta))?;
    match cs.len() {
        1 => Ok(cs.pop().expect("one contour")),
        k => Err(Error::Numerical(format!("segment produced {k} contours"))),
    }
}

/// True if `cubes` is vertex-connected and its complement, padded by one layer
/// of empty cubes around a non-periodic grid, is face-connected.
pub fn simply_connected(cubes: &[usize], n: usize, d: usize) -> bool {
    if cubes.is_empty() {
        return true;
    }
    let padded = n + 2;
    let mut member = vec![false; padded.pow(d as u32)];
    for &c in cubes {
        let mut p = unflatten(c, n, d);
        for x in p.iter_mut().take(d) {
            *x += 1;
        }
        member[flatten(&p, padded, d)] = true;
    }
    let field = PhaseField {
        level: PhaseLevel::BigTheta,
        d,
        ell: 1.0,
        n: padded,
        periodic: false,
        values: vec![0; member.len()],
    };
    components(&field, |x| member[x], false).len() == 1 && components(&field, |x| !member[x], true).len() == 1
}

/// `f_{x_1..x_n}`: sum over particle tuples with `q_{i_k}` in cube `x_k` of
/// `J^(n)(q_{i_1}, ..., q_{i_n}) / n!`; for `n = 1` the particle count.
pub fn correlation_observable(points: &[Point], metric: Metric, cells: &[Cell], params: &ModelParams) -> Result<f64> {
    let n = cells.len();
    if ![1, 2, 4].contains(&n) {
        return Err(Error::param("cells", "observable order must be 1, 2 or 4"));
    }
    for i in 0..n {
        for j in 0..i {
            if cells[i] == cells[j] {
                return Err(Error::param("cells", "cells must be distinct"));
            }
        }
    }
    let d = params.d;
    let ell = params.scales().ell_minus;
    let members: Vec<Vec<Point>> = cells
        .iter()
        .map(|c| points.iter().copied().filter(|p| cell_of(p, d, ell) == *c).collect())
        .collect();
    if n == 1 {
        return Ok(members[0].len() as f64);
    }
    if members.iter().any(|m| m.is_empty()) {
        return Ok(0.0);
    }
    let reach = 2.0 * params.range() + (d as f64).sqrt() * ell;
    let centre = |c: &Cell| -> Point {
        let mut p = [0.0; 3];
        for k in 0..d {
            p[k] = (c[k] as f64 + 0.5) * ell;
        }
        p
    };
    for i in 0..n {
        for j in 0..i {
            if metric.dist(&centre(&cells[i]), &centre(&cells[j])) > reach {
                return Ok(0.0);
            }
        }
    }
    let fact = if n == 2 { 2.0 } else { 24.0 };
    let mut total = 0.0;
    let mut idx = vec![0usize; n];
    let mut tuple = vec![[0.0; 3]; n];
    loop {
        for k in 0..n {
            tuple[k] = members[k][idx[k]];
        }
        total += multibody_integral(&tuple, metric, params);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < members[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == n {
                return Ok(total / fact);
            }
        }
    }
}

/// Settings of an empirical contour-weight estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeierlsConfig {
    pub steps: u64,
    pub burn_in: u64,
    /// Steps between indicator evaluations.
    pub every: u64,
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Largest support size accepted.
    pub max_support: usize,
    /// Margin of boundary cubes around `c(Gamma)`; `None` means the smallest
    /// number of `ell_plus` cubes covering twice the Kac range.
    pub margin: Option<usize>,
    /// Constant `c` of the cutoff `exp(-beta c / 100 zeta^2 ell_minus^d N_Gamma)`.
    pub cutoff_constant: Option<f64>,
    /// Standard errors of the confidence intervals.
    pub z: f64,
}

impl Default for PeierlsConfig {
    fn default() -> Self {
        PeierlsConfig {
            steps: 1_000_000,
            burn_in: 100_000,
            every: 100,
            seed: 0,
            sampler: SamplerConfig {
                trace_every: 0,
                ..Default::default()
            },
            max_support: 8,
            margin: None,
            cutoff_constant: None,
            z: 1.96,
        }
    }
}

/// Indicator counts of the two constrained events and the resulting ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeierlsEstimate {
    pub samples: u64,
    pub numerator_hits: u64,
    pub denominator_hits: u64,
    /// Larger integrated autocorrelation time of the two indicator series.
    pub tau_int: f64,
    pub effective_samples: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub numerator_ci: (f64, f64),
    pub denominator_ci: (f64, f64),
    pub ratio: f64,
    /// Interval from combining the two Wilson intervals.
    pub ratio_ci: (f64, f64),
    pub cutoff: Option<f64>,
    /// `min(ratio, cutoff)` when a cutoff is requested.
    pub capped_ratio: Option<f64>,
}

/// Geometry of a contour re-embedded in a box with a boundary margin.
struct Embedding {
    domain: Domain,
    /// `ell_plus` cubes per axis of the box.
    n: usize,
    sp: Vec<usize>,
    /// `A^pm` cubes with the sign `Theta` must take in the numerator event.
    a_signed: Vec<(usize, i8)>,
}

fn embed(contour: &Contour, sign: i8, windows: &PhaseWindows, params: &ModelParams, margin: usize) -> Result<Embedding> {
    let d = contour.d;
    let c_gamma = contour.c_gamma();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &x in &c_gamma {
        let c = unflatten(x, contour.n, d);
        for k in 0..d {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let extent = (0..d).map(|k| hi[k] - lo[k] + 1).max().unwrap_or(1);
    let n = extent + 2 * margin;
    let map = |x: usize| {
        let mut c = unflatten(x, contour.n, d);
        for k in 0..d {
            c[k] = c[k] - lo[k] + margin;
        }
        flatten(&c, n, d)
    };
    let base = Domain::boxed(params, n, Vec::new())?;
    let mut allowed = vec![false; base.cube_count()];
    for &x in &c_gamma {
        allowed[map(x)] = true;
    }
    let scales = params.scales();
    let ratio = scales.plus_ratio;
    let mut cells = Vec::new();
    for (x, &inside) in allowed.iter().enumerate() {
        if inside {
            continue;
        }
        let c = unflatten(x, n, d);
        for_each_subcube(&c, ratio, d, |fine| {
            let mut cell = [0i64; 3];
            for k in 0..d {
                cell[k] = fine[k] as i64;
            }
            cells.push(cell);
        });
    }
    let rho = windows.density(sign);
    let boundary = lattice_fill(d, scales.ell_minus, &cells, |_| rho, params.hc_radius)?;
    let domain = base.with_region(allowed)?.with_boundary(boundary, params)?;
    let mut a_signed: Vec<(usize, i8)> = Vec::new();
    for int in &contour.interiors {
        for &x in &int.boundary {
            a_signed.push((map(x), int.sign));
        }
    }
    Ok(Embedding {
        domain,
        n,
        sp: contour.sp.iter().map(|&x| map(x)).collect(),
        a_signed,
    })
}

/// Empirical contour weight: the probability of the contour event divided by
/// the probability of the all-`sign` event, both under the Gibbs measure on
/// `c(Gamma)` with a lattice boundary condition at the `sign` phase density.
pub fn peierls_statistics(
    contour: &Contour,
    sign: i8,
    windows: &PhaseWindows,
    params: &ModelParams,
    cfg: &PeierlsConfig,
) -> Result<PeierlsEstimate> {
    if sign != 1 && sign != -1 {
        return Err(Error::param("sign", "must be +1 or -1"));
    }
    if contour.n_gamma > cfg.max_support {
        return Err(Error::Guard(format!(
            "support of {} cubes exceeds the limit {}",
            contour.n_gamma, cfg.max_support
        )));
    }
    if contour.interiors.iter().any(|i| i.sign == 0) {
        return Err(Error::param("contour", "Theta is not constant on an interior boundary"));
    }
    let scales = params.scales();
    let ratio = scales.plus_ratio;
    let d = contour.d;
    let per_cube = ratio.pow(d as u32);
    if contour.eta.len() != contour.n_gamma * per_cube {
        return Err(Error::param("contour", "eta decoration does not match the fine partition"));
    }
    if cfg.every == 0 || cfg.steps < cfg.every {
        return Err(Error::param("every", "must be positive and at most the step count"));
    }
    let margin = cfg
        .margin
        .unwrap_or_else(|| ((2.0 * scales.range / scales.ell_plus).ceil() as usize).max(1));
    let emb = embed(contour, sign, windows, params, margin)?;
    let q = phase_configuration(&emb.domain, params, |_| windows.density(sign))?;
    let mut state = SamplerState::new(q, params, cfg.sampler, None, cfg.seed)?;
    state.run_observed(cfg.burn_in, 0, |_| {})?;

    let fine_n = emb.n * ratio;
    let mut num = Vec::new();
    let mut den = Vec::new();
    let mut failure = None;
    state.run_observed(cfg.steps, cfg.every, |st| {
        let eta = eta_from_counts(st.fine_counts(), windows);
        let theta = match theta_fields(&eta, ratio) {
            Ok((_, big)) => big,
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        let mut hit_num = true;
        let mut hit_den = true;
        let mut k = 0;
        for &x in &emb.sp {
            for_each_subcube(&unflatten(x, emb.n, d), ratio, d, |fine| {
                let v = eta.values[flatten(&fine, fine_n, d)];
                hit_num &= v == contour.eta[k];
                hit_den &= v == sign;
                k += 1;
            });
        }
        for &(x, s) in &emb.a_signed {
            let v = theta.values[x];
            hit_num &= v == s;
            hit_den &= v == sign;
        }
        num.push(hit_num as u8 as f64);
        den.push(hit_den as u8 as f64);
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let samples = num.len() as u64;
    let k_num = num.iter().sum::<f64>() as u64;
    let k_den = den.iter().sum::<f64>() as u64;
    if k_den == 0 {
        return Err(Error::InsufficientStatistics(format!(
            "denominator event never observed ({k_num} numerator hits in {samples} samples)"
        )));
    }
    let tau = [&num, &den]
        .iter()
        .map(|s| integrated_autocorrelation(s))
        .filter(|t| t.is_finite())
        .fold(0.5, f64::max);
    let n_eff = (samples as f64 / (2.0 * tau)).max(1.0);
    let scaled = |k: u64| -> (u64, u64) {
        let n = n_eff.round().max(1.0) as u64;
        ((k as f64 * n as f64 / samples as f64).round() as u64, n)
    };
    let (kn, nn) = scaled(k_num);
    let (kd, nd) = scaled(k_den);
    let numerator_ci = wilson_interval(kn, nn, cfg.z);
    let denominator_ci = wilson_interval(kd.max(1), nd, cfg.z);
    let numerator = k_num as f64 / samples as f64;
    let denominator = k_den as f64 / samples as f64;
    let ratio_est = numerator / denominator;
    let ratio_ci = (numerator_ci.0 / denominator_ci.1, numerator_ci.1 / denominator_ci.0);
    let cutoff = cfg.cutoff_constant.map(|c| {
        (-params.beta * c / 100.0 * windows.zeta.powi(2) * scales.ell_minus.powi(d as i32) * contour.n_gamma as f64).exp()
    });
    Ok(PeierlsEstimate {
        samples,
        numerator_hits: k_num,
        denominator_hits: k_den,
        tau_int: tau,
        effective_samples: n_eff,
        numerator,
        denominator,
        numerator_ci,
        denominator_ci,
        ratio: ratio_est,
        ratio_ci,
        cutoff,
        capped_ratio: cutoff.map(|c| ratio_est.min(c)),
    })
}
