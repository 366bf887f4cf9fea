use lmphc_core::meanfield::{phi, FreeEnergySpec};

pub const BETA_LMP: f64 = 1.837_117_307_087_384; // (3/2)^{3/2}

/// Local minima of `f` on a uniform grid, refined by golden-section search.
pub fn grid_minima(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + h * i as f64)).collect();
    let mut out = Vec::new();
    for i in 1..n {
        if vals[i] < vals[i - 1] && vals[i] <= vals[i + 1] {
            let (mut a, mut b) = (lo + h * (i - 1) as f64, lo + h * (i + 1) as f64);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..100 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

/// Sign changes of `f` on a uniform grid, refined by bisection.
pub fn grid_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut prev = f(lo);
    for i in 1..=n {
        let x = lo + h * i as f64;
        let v = f(x);
        if prev.signum() != v.signum() {
            let (mut a, mut b) = (x - h, x);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(m).signum() == f(a).signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = v;
    }
    out
}

pub fn phi_at(rho: f64, d: usize, beta: f64, r: f64, lambda: f64) -> f64 {
    phi(rho, &FreeEnergySpec::new(d, beta, r).with_lambda(lambda)).unwrap()
}

/// Central difference in `lambda` of the gap between the two grid minima of
/// `phi`; `None` when the grid does not show exactly two minima.
pub fn minima_gap_slope(d: usize, beta: f64, r: f64, lambda: f64, dl: f64) -> Option<f64> {
    let g = |lam: f64| {
        let mins = grid_minima(|x| phi_at(x, d, beta, r, lam), 1e-3, 3.0, 6000);
        (mins.len() == 2).then(|| phi_at(mins[1], d, beta, r, lam) - phi_at(mins[0], d, beta, r, lam))
    };
    Some((g(lambda + dl)? - g(lambda - dl)?) / (2.0 * dl))
}

/// Dense-scan minimum over `rho` of `(1 + eps rho) / (rho - rho^3 / 2)`, the
/// critical inverse temperature at second virial order in `d = 2`.
pub fn dense_beta_c(r: f64) -> f64 {
    let eps = FreeEnergySpec::new(2, 1.0, r).epsilon();
    (1..200_000)
        .map(|i| {
            let rho = i as f64 * 7e-6;
            (1.0 + eps * rho) / (rho - rho.powi(3) / 2.0)
        })
        .fold(f64::INFINITY, f64::min)
}
