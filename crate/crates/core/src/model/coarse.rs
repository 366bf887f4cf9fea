//! Cube-averaged kernels and coarse-grained potentials.
//!
//! `K_x(r) = l^{-d} int_{C_x} J_gamma(r, q) dq` is tabulated once on the
//! quadrature lattice relative to a cube corner; since the lattice spacing
//! divides `ell_minus`, every cube sees the same stencil. The coarse potential
//! of `n` cubes is `int prod_k K_{x_k}(r) dr`, summed over stencil nodes.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::geometry::Point;
use super::kernel::KacKernel;
use super::params::{KernelSpec, ModelParams};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Environment variable naming the directory for cached tables.
pub const CACHE_ENV: &str = "LMPHC_CACHE_DIR";

/// Outer-axis rule of the cube average: 4 panels of 8 Gauss points per axis;
/// the innermost axis uses 4 points, exact for the degree-6 chord polynomial.
const CUBE_PANELS: usize = 4;
const CUBE_ORDER: usize = 8;
const INNER_ORDER: usize = 4;

const MAGIC: &[u8; 8] = b"LMPJTAB1";

/// Integer coordinates of an `ell_minus` cube.
pub type Cell = [i64; 3];

/// Tabulated cube-averaged kernel on the quadrature lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeAverageTable {
    pub d: usize,
    pub h: f64,
    pub cell: f64,
    /// Nodes per cube edge.
    pub m: usize,
    /// Stencil extent beyond the cube, in nodes.
    pub margin: usize,
    pub values: Vec<f64>,
    pub key: String,
}

impl CubeAverageTable {
    pub fn key_for(params: &ModelParams) -> String {
        let s = params.scales();
        format!(
            "d={};gamma={:016x};ell={:016x};h={:016x};kernel={};rule={}x{}+{}",
            params.d,
            params.gamma.to_bits(),
            s.ell_minus.to_bits(),
            s.spacing.to_bits(),
            params.kernel.id(),
            CUBE_PANELS,
            CUBE_ORDER,
            INNER_ORDER
        )
    }

    pub fn build(params: &ModelParams) -> Self {
        let s = params.scales();
        let h = s.spacing;
        let m = s.nodes_per_cell;
        let kernel = KacKernel::new(params);
        let margin = (s.range / h).ceil() as usize + 1;
        let side = m + 2 * margin;
        let d = params.d;
        let total = side.pow(d as u32);
        let ell = s.ell_minus;
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut r = [0.0; 3];
                let mut rest = flat;
                for k in (0..d).rev() {
                    let j = (rest % side) as f64 - margin as f64;
                    rest /= side;
                    r[k] = (j + 0.5) * h;
                }
                cube_average(&kernel, &r, ell)
            })
            .collect();
        CubeAverageTable {
            d,
            h,
            cell: ell,
            m,
            margin,
            values,
            key: Self::key_for(params),
        }
    }

    /// Loads from the cache directory (argument, else `LMPHC_CACHE_DIR`) or builds and stores.
    pub fn load_or_build(params: &ModelParams, dir: Option<&Path>) -> Result<Self> {
        let dir: Option<PathBuf> = dir
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from));
        let Some(dir) = dir else {
            return Ok(Self::build(params));
        };
        let key = Self::key_for(params);
        let path = dir.join(cache_file_name(&key));
        if let Ok(t) = Self::read_from(&path) {
            if t.key == key {
                return Ok(t);
            }
        }
        let t = Self::build(params);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        t.write_to(&path)?;
        Ok(t)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        buf.extend_from_slice(MAGIC);
        let key = self.key.as_bytes();
        buf.extend_from_slice(&(key.len() as u64).to_le_bytes());
        buf.extend_from_slice(key);
        for v in [self.d as u64, self.m as u64, self.margin as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.h.to_le_bytes());
        buf.extend_from_slice(&self.cell.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| Error::io(path, e))?;
        let bad = || Error::MissingTable(format!("{}: malformed cache file", path.display()));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = raw.get(pos..pos + n).ok_or_else(bad)?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad());
        }
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let klen = u64_at(take(8)?) as usize;
        let key = String::from_utf8(take(klen)?.to_vec()).map_err(|_| bad())?;
        let d = u64_at(take(8)?) as usize;
        let m = u64_at(take(8)?) as usize;
        let margin = u64_at(take(8)?) as usize;
        let h = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let cell = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let n = u64_at(take(8)?) as usize;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        Ok(CubeAverageTable {
            d,
            h,
            cell,
            m,
            margin,
            values,
            key,
        })
    }

    fn side(&self) -> usize {
        self.m + 2 * self.margin
    }

    /// `K_x` at global node `g` (zero outside the stencil).
    #[inline]
    pub fn value(&self, cell: &Cell, g: &[i64; 3]) -> f64 {
        let side = self.side() as i64;
        let mut flat = 0i64;
        for k in 0..self.d {
            let j = g[k] - cell[k] * self.m as i64 + self.margin as i64;
            if j < 0 || j >= side {
                return 0.0;
            }
            flat = flat * side + j;
        }
        self.values[flat as usize]
    }

    /// Global node index range `[lo, hi)` of a cube's stencil along each axis.
    pub fn stencil(&self, cell: &Cell) -> ([i64; 3], [i64; 3]) {
        let mut lo = [0i64; 3];
        let mut hi = [1i64; 3];
        for k in 0..self.d {
            lo[k] = cell[k] * self.m as i64 - self.margin as i64;
            hi[k] = lo[k] + self.side() as i64;
        }
        (lo, hi)
    }

    /// Visits the stencil of `cell` as `(global node, K value)`, skipping zeros.
    pub fn for_each_node(&self, cell: &Cell, mut f: impl FnMut([i64; 3], f64)) {
        let side = self.side();
        let (lo, _) = self.stencil(cell);
        let span = |k: usize| if k < self.d { side } else { 1 };
        let mut flat = 0usize;
        for a in 0..span(0) {
            for b in 0..span(1) {
                for c in 0..span(2) {
                    let v = self.values[flat];
                    flat += 1;
                    if v != 0.0 {
                        let mut g = [lo[0] + a as i64, lo[1] + b as i64, lo[2] + c as i64];
                        for x in g.iter_mut().skip(self.d) {
                            *x = 0;
                        }
                        f(g, v);
                    }
                }
            }
        }
    }

    /// `J~^(n)` of the listed cubes (cells given in one unwrapped frame).
    pub fn coarse_potential(&self, cells: &[Cell]) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let mut lo = [i64::MIN; 3];
        let mut hi = [i64::MAX; 3];
        for c in cells {
            let (a, b) = self.stencil(c);
            for k in 0..3 {
                lo[k] = lo[k].max(a[k]);
                hi[k] = hi[k].min(b[k]);
            }
        }
        if (0..self.d).any(|k| lo[k] >= hi[k]) {
            return 0.0;
        }
        let mut s = 0.0;
        let span = |k: usize| if k < self.d { lo[k]..hi[k] } else { 0..1 };
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let g = [a, b, c];
                    let mut prod = 1.0;
                    for cell in cells {
                        prod *= self.value(cell, &g);
                        if prod == 0.0 {
                            break;
                        }
                    }
                    s += prod;
                }
            }
        }
        s * self.h.powi(self.d as i32)
    }
}

fn cache_file_name(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
    format!("jtab-{hex}.bin")
}

/// `l^{-d} int_{cube} J(r, q) dq`, with the cube `[0, l)^d` and the kernel's centre rule.
fn cube_average(kernel: &KacKernel, r: &Point, ell: f64) -> f64 {
    match kernel.spec {
        KernelSpec::Off => 0.0,
        KernelSpec::Polynomial => box_integral(kernel, r, &[0.0; 3], ell) / ell.powi(kernel.d as i32),
        KernelSpec::CubeSnapped { blend } => {
            let mid = 0.5 * ell;
            if blend == 0.0 {
                let d2: f64 = (0..kernel.d).map(|k| (r[k] - mid).powi(2)).sum();
                return kernel.profile(d2);
            }
            let s = blend * ell;
            let lo = [mid - 0.5 * s; 3];
            box_integral(kernel, r, &lo, s) / s.powi(kernel.d as i32)
        }
    }
}

/// `int_{lo + [0,side]^d} J(r, q) dq`, clipped to the kernel support.
pub(crate) fn box_integral(kernel: &KacKernel, r: &Point, lo: &Point, side: f64) -> f64 {
    let mut q = [0.0; 3];
    box_axis(kernel, r, lo, side, 0, kernel.range(), &mut q)
}

fn box_axis(kernel: &KacKernel, r: &Point, lo: &Point, side: f64, axis: usize, rad: f64, q: &mut Point) -> f64 {
    let a = lo[axis].max(r[axis] - rad);
    let b = (lo[axis] + side).min(r[axis] + rad);
    if a >= b {
        return 0.0;
    }
    if axis + 1 == kernel.d {
        let gl = GaussLegendre::cached(INNER_ORDER);
        let mut s = 0.0;
        for (x, w) in gl.mapped(a, b) {
            q[axis] = x;
            let d2: f64 = (0..kernel.d).map(|k| (r[k] - q[k]).powi(2)).sum();
            s += w * kernel.profile(d2);
        }
        return s;
    }
    let gl = GaussLegendre::cached(CUBE_ORDER);
    let h = (b - a) / CUBE_PANELS as f64;
    let mut s = 0.0;
    for p in 0..CUBE_PANELS {
        let lo_p = a + h * p as f64;
        for (x, w) in gl.mapped(lo_p, lo_p + h) {
            let t = rad * rad - (x - r[axis]).powi(2);
            if t <= 0.0 {
                continue;
            }
            q[axis] = x;
            s += w * box_axis(kernel, r, lo, side, axis + 1, t.sqrt(), q);
        }
    }
    s
}

/// Cube coordinates of the `ell_minus` cube containing `p`.
pub fn cell_of(p: &Point, d: usize, ell: f64) -> Cell {
    let mut c = [0i64; 3];
    for k in 0..d {
        c[k] = (p[k] / ell).floor() as i64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize) -> ModelParams {
        let mut p = ModelParams::new(d, 0.2, 0.0, 1.0, 0.0).unwrap();
        p.alpha = 0.3;
        p
    }

    #[test]
    fn table_roundtrips_bit_identically_through_cache() {
        let p = params(2);
        let dir = tempfile::tempdir().unwrap();
        let a = CubeAverageTable::load_or_build(&p, Some(dir.path())).unwrap();
        let b = CubeAverageTable::load_or_build(&p, Some(dir.path())).unwrap();
        let c = CubeAverageTable::build(&p);
        assert_eq!(a, b);
        assert_eq!(b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   c.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn cube_average_integrates_to_one() {
        let p = params(2);
        let t = CubeAverageTable::build(&p);
        let s: f64 = t.values.iter().sum::<f64>() * t.h * t.h;
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn coarse_potential_is_symmetric_and_finite_range() {
        let t = CubeAverageTable::build(&params(1));
        let x = [0, 0, 0];
        let y = [2, 0, 0];
        assert_eq!(t.coarse_potential(&[x, y]), t.coarse_potential(&[y, x]));
        assert_eq!(t.coarse_potential(&[x, [100, 0, 0]]), 0.0);
    }

    #[test]
    fn snapped_kernel_gives_point_values() {
        let mut p = params(1);
        p.kernel = KernelSpec::CubeSnapped { blend: 0.0 };
        let t = CubeAverageTable::build(&p);
        let k = KacKernel::new(&p);
        let ell = p.scales().ell_minus;
        let g = [3i64, 0, 0];
        let r = (3.0 + 0.5) * t.h;
        let want = k.profile((r - 0.5 * ell).powi(2));
        assert_eq!(t.value(&[0, 0, 0], &g), want);
    }
}
