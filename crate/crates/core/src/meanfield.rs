//! Mean-field thermodynamics: free energy, fixed-point map, coexistence,
//! spinodals and the critical and contraction temperatures.
//!
//! The hard-sphere free energy is the truncated virial series
//! `beta f_hc = rho (ln rho - 1) + B2 rho^2 + (B3/2) rho^3` with `B2 = eps/2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ball_volume;

/// Largest exclusion volume accepted by the temperature solvers.
pub const EPSILON_GUARD: f64 = 0.1;
/// Upper end of the contraction-temperature scan.
pub const BETA_SCAN_CAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergySpec {
    pub d: usize,
    pub beta: f64,
    pub hc_radius: f64,
    /// 2 keeps `B2` only, 3 adds the third virial coefficient.
    pub virial_order: usize,
    pub lambda: Option<f64>,
}

impl FreeEnergySpec {
    pub fn new(d: usize, beta: f64, hc_radius: f64) -> Self {
        FreeEnergySpec {
            d,
            beta,
            hc_radius,
            virial_order: 2,
            lambda: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.virial_order = order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::param("d", "must be 1, 2 or 3"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be positive"));
        }
        if self.hc_radius < 0.0 {
            return Err(Error::param("hc_radius", "must be non-negative"));
        }
        if !(2..=3).contains(&self.virial_order) {
            return Err(Error::param("virial_order", "must be 2 or 3"));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        ball_volume(self.d, self.hc_radius)
    }

    fn coefficients(&self) -> Virial {
        Virial::new(self.d, self.epsilon(), self.virial_order)
    }

    /// Close-packing proxy `0.8 / eps^{1/d}` (infinite for point particles).
    pub fn density_guard(&self) -> f64 {
        let eps = self.epsilon();
        if eps > 0.0 {
            0.8 / eps.powf(1.0 / self.d as f64)
        } else {
            f64::INFINITY
        }
    }

    fn lambda_value(&self) -> f64 {
        self.lambda.unwrap_or(0.0)
    }
}

/// Coefficients of `beta psi = b2 rho^2 + c3 rho^3`.
#[derive(Debug, Clone, Copy)]
struct Virial {
    b2: f64,
    c3: f64,
}

impl Virial {
    fn new(d: usize, eps: f64, order: usize) -> Self {
        let b2 = eps / 2.0;
        let c3 = if order >= 3 { 0.5 * b3_ratio(d) * b2 * b2 } else { 0.0 };
        Virial { b2, c3 }
    }
}

/// `B3 / B2^2` for hard rods, discs and spheres.
pub fn b3_ratio(d: usize) -> f64 {
    match d {
        1 => 1.0,
        2 => 4.0 / 3.0 - 3f64.sqrt() / std::f64::consts::PI,
        3 => 5.0 / 8.0,
        _ => panic!("dimension {d} unsupported"),
    }
}

/// `e_lambda(rho) = -lambda rho - rho^2/2 + rho^4/24`.
pub fn e_lambda(rho: f64, lambda: f64) -> f64 {
    -lambda * rho - rho * rho / 2.0 + rho.powi(4) / 24.0
}

fn check_rho(rho: f64, spec: &FreeEnergySpec) -> Result<()> {
    if !(rho > 0.0) || rho > spec.density_guard() {
        return Err(Error::param(
            "rho",
            format!("{rho} outside (0, {}]", spec.density_guard()),
        ));
    }
    Ok(())
}

/// `phi(rho) = e_0(rho) + f_hc(rho) [- lambda rho]`.
pub fn phi(rho: f64, spec: &FreeEnergySpec) -> Result<f64> {
    spec.validate()?;
    check_rho(rho, spec)?;
    Ok(phi_raw(rho, spec))
}

fn phi_raw(rho: f64, spec: &FreeEnergySpec) -> f64 {
    let v = spec.coefficients();
    let bf = rho * (rho.ln() - 1.0) + v.b2 * rho * rho + v.c3 * rho.powi(3);
    e_lambda(rho, spec.lambda_value()) + bf / spec.beta
}

/// `d phi / d rho`.
pub fn phi_prime(rho: f64, spec: &FreeEnergySpec) -> f64 {
    let v = spec.coefficients();
    -spec.lambda_value() - rho + rho.powi(3) / 6.0
        + (rho.ln() + 2.0 * v.b2 * rho + 3.0 * v.c3 * rho * rho) / spec.beta
}

/// `d^2 phi / d rho^2`.
pub fn phi_second(rho: f64, spec: &FreeEnergySpec) -> f64 {
    let v = spec.coefficients();
    -1.0 + rho * rho / 2.0 + (1.0 / rho + 2.0 * v.b2 + 6.0 * v.c3 * rho) / spec.beta
}

/// `K(rho) = exp{beta (lambda + rho - rho^3/6) - 2 B2 rho - 3 c3 rho^2}`; its fixed
/// points are the critical points of `phi`.
pub fn k_map(rho: f64, spec: &FreeEnergySpec) -> f64 {
    let v = spec.coefficients();
    (spec.beta * (spec.lambda_value() + rho - rho.powi(3) / 6.0) - 2.0 * v.b2 * rho - 3.0 * v.c3 * rho * rho).exp()
}

/// Analytic `K'(rho)`.
pub fn k_map_prime(rho: f64, spec: &FreeEnergySpec) -> f64 {
    let v = spec.coefficients();
    k_map(rho, spec) * (spec.beta * (1.0 - rho * rho / 2.0) - 2.0 * v.b2 - 6.0 * v.c3 * rho)
}

/// Bisection to `tol` on a sign-changing bracket, then up to five Newton steps
/// kept inside the bracket.
fn solve(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    what: &str,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Bracketing(format!(
            "{what}: no sign change on [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid.abs().max(1e-300) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..5 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let nx = x - f(x) / d;
        if !(nx > lo - (hi - lo) && nx < hi + (hi - lo)) {
            break;
        }
        x = nx;
    }
    Ok(x)
}

/// Critical inverse temperature and density, where `phi''` has a double root.
pub fn find_critical_point(d: usize, hc_radius: f64, virial_order: usize) -> Result<(f64, f64)> {
    let spec = FreeEnergySpec::new(d, 1.0, hc_radius).with_order(virial_order);
    spec.validate()?;
    if spec.epsilon() > EPSILON_GUARD {
        return Err(Error::param("hc_radius", "exclusion volume above the solver guard 0.1"));
    }
    let v = spec.coefficients();
    // beta(rho) = N / D on the line phi'' = 0
    let n = |r: f64| 1.0 + 2.0 * v.b2 * r + 6.0 * v.c3 * r * r;
    let dn = |r: f64| 2.0 * v.b2 + 12.0 * v.c3 * r;
    let den = |r: f64| r - r.powi(3) / 2.0;
    let dden = |r: f64| 1.0 - 1.5 * r * r;
    let g = |r: f64| dn(r) * den(r) - n(r) * dden(r);
    let top = 2f64.sqrt();
    let rho_c = solve(1e-9, top * (1.0 - 1e-12), g, |r| {
        let h = 1e-7 * r;
        (g(r + h) - g(r - h)) / (2.0 * h)
    }, "critical density")?;
    Ok((n(rho_c) / den(rho_c), rho_c))
}

/// `beta_c(R)`; equals `(3/2)^{3/2}` for `R = 0`.
pub fn find_beta_c(d: usize, hc_radius: f64, virial_order: usize) -> Result<f64> {
    Ok(find_critical_point(d, hc_radius, virial_order)?.0)
}

/// Roots `s_- <= s_+` of `phi'' = 0`.
pub fn inflection_points(spec: &FreeEnergySpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let v = spec.coefficients();
    let b = spec.beta;
    // beta rho phi'' = p(rho), a cubic with one positive critical point
    let p = |r: f64| 0.5 * b * r.powi(3) + 6.0 * v.c3 * r * r + (2.0 * v.b2 - b) * r + 1.0;
    let dp = |r: f64| 1.5 * b * r * r + 12.0 * v.c3 * r + 2.0 * v.b2 - b;
    let (qa, qb, qc) = (1.5 * b, 12.0 * v.c3, 2.0 * v.b2 - b);
    let disc = qb * qb - 4.0 * qa * qc;
    if qc >= 0.0 || disc < 0.0 {
        let beta_c = find_beta_c(spec.d, spec.hc_radius, spec.virial_order).unwrap_or(f64::NAN);
        return Err(Error::NoTransition { beta: b, beta_c });
    }
    let star = (-qb + disc.sqrt()) / (2.0 * qa);
    let pmin = p(star);
    // a double root at beta_c may round to a tiny positive minimum
    if pmin > 0.0 && pmin <= 1e-12 {
        return Ok((star, star));
    }
    if pmin > 0.0 {
        let beta_c = find_beta_c(spec.d, spec.hc_radius, spec.virial_order).unwrap_or(f64::NAN);
        return Err(Error::NoTransition { beta: b, beta_c });
    }
    if pmin == 0.0 {
        return Ok((star, star));
    }
    let mut hi = 2.0 * star.max(1.0);
    while p(hi) <= 0.0 {
        hi *= 2.0;
    }
    let s_minus = solve(1e-12, star, p, dp, "lower spinodal")?;
    let s_plus = solve(star, hi, p, dp, "upper spinodal")?;
    Ok((s_minus, s_plus))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldSolution {
    pub d: usize,
    pub beta: f64,
    pub hc_radius: f64,
    pub epsilon: f64,
    pub virial_order: usize,
    pub lambda_coex: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub rho_zero: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub kprime_minus: f64,
    pub kprime_plus: f64,
}

impl MeanFieldSolution {
    pub fn spec(&self) -> FreeEnergySpec {
        FreeEnergySpec::new(self.d, self.beta, self.hc_radius)
            .with_order(self.virial_order)
            .with_lambda(self.lambda_coex)
    }
}

/// The three critical points `rho_- < rho_0 < rho_+` of `phi_lambda` for
/// `lambda` strictly inside the spinodal window.
fn critical_points(spec: &FreeEnergySpec, s: (f64, f64)) -> Result<(f64, f64, f64)> {
    let f = |r: f64| phi_prime(r, spec);
    let df = |r: f64| phi_second(r, spec);
    let mut hi = 2.0 * s.1;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Bracketing("dense root of phi' not bracketed".into()));
        }
    }
    let lo = solve(1e-300, s.0, f, df, "rho_minus")?;
    let mid = solve(s.0, s.1, f, df, "rho_zero")?;
    let high = solve(s.1, hi, f, df, "rho_plus")?;
    Ok((lo, mid, high))
}

/// Coexistence chemical potential and densities at inverse temperature `beta`.
pub fn find_coexistence(d: usize, beta: f64, hc_radius: f64, virial_order: usize) -> Result<MeanFieldSolution> {
    let base = FreeEnergySpec::new(d, beta, hc_radius).with_order(virial_order);
    base.validate()?;
    let beta_c = find_beta_c(d, hc_radius, virial_order)?;
    if beta <= beta_c {
        return Err(Error::NoTransition { beta, beta_c });
    }
    let s = inflection_points(&base)?;
    if s.1 - s.0 < 1e-9 {
        return Err(Error::NoTransition { beta, beta_c });
    }
    let spec0 = base.with_lambda(0.0);
    let lam_lo = phi_prime(s.1, &spec0);
    let lam_hi = phi_prime(s.0, &spec0);
    let width = lam_hi - lam_lo;
    let g = |lam: f64| -> Result<(f64, f64, f64, f64)> {
        let spec = base.with_lambda(lam);
        let (a, z, b) = critical_points(&spec, s)?;
        Ok((phi_raw(b, &spec) - phi_raw(a, &spec), a, z, b))
    };
    let mut lo = lam_lo + 1e-6 * width;
    let mut hi = lam_hi - 1e-6 * width;
    let glo = g(lo)?.0;
    let ghi = g(hi)?.0;
    if !(glo > 0.0 && ghi < 0.0) {
        return Err(Error::Bracketing(format!(
            "equal-minima condition not bracketed: g({lo}) = {glo}, g({hi}) = {ghi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-15 * width.max(1.0) {
            break;
        }
        if g(mid)?.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lam = 0.5 * (lo + hi);
    // dg/dlambda = rho_- - rho_+
    for _ in 0..3 {
        let (gv, a, _, b) = g(lam)?;
        let next = lam + gv / (b - a);
        if !(next > lam_lo && next < lam_hi) {
            break;
        }
        lam = next;
    }
    let spec = base.with_lambda(lam);
    let (a, z, b) = critical_points(&spec, s)?;
    Ok(MeanFieldSolution {
        d,
        beta,
        hc_radius,
        epsilon: base.epsilon(),
        virial_order,
        lambda_coex: lam,
        rho_minus: a,
        rho_plus: b,
        rho_zero: z,
        s_minus: s.0,
        s_plus: s.1,
        kprime_minus: k_map_prime(a, &spec),
        kprime_plus: k_map_prime(b, &spec),
    })
}

/// Global minimiser of `phi_lambda` (unique away from coexistence).
pub fn global_minimizer(spec: &FreeEnergySpec) -> Result<f64> {
    spec.validate()?;
    let f = |r: f64| phi_prime(r, spec);
    let df = |r: f64| phi_second(r, spec);
    let candidates: Vec<f64> = match inflection_points(spec) {
        Ok(s) if s.1 > s.0 => {
            let mut out = Vec::new();
            let mut hi = 2.0 * s.1;
            while f(hi) <= 0.0 {
                hi *= 2.0;
            }
            if f(s.0) > 0.0 {
                out.push(solve(1e-300, s.0, f, df, "lower minimiser")?);
            }
            if f(s.1) < 0.0 {
                out.push(solve(s.1, hi, f, df, "upper minimiser")?);
            }
            out
        }
        _ => {
            let mut hi = 1.0;
            while f(hi) <= 0.0 {
                hi *= 2.0;
            }
            vec![solve(1e-300, hi, f, df, "minimiser")?]
        }
    };
    candidates
        .into_iter()
        .min_by(|a, b| phi_raw(*a, spec).total_cmp(&phi_raw(*b, spec)))
        .ok_or_else(|| Error::Numerical("no minimiser found".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaZero {
    pub beta_0: f64,
    /// True when the scan reached [`BETA_SCAN_CAP`] without crossing.
    pub capped: bool,
}

/// `min(K'(rho_-), K'(rho_+)) + 1` at coexistence.
fn contraction_margin(d: usize, beta: f64, hc_radius: f64, order: usize) -> Result<f64> {
    let s = find_coexistence(d, beta, hc_radius, order)?;
    Ok(s.kprime_minus.min(s.kprime_plus) + 1.0)
}

/// Supremum of `beta > beta_c` with `K'(rho_pm) > -1` all along `(beta_c, beta]`.
pub fn find_beta_0(d: usize, hc_radius: f64, virial_order: usize) -> Result<BetaZero> {
    let beta_c = find_beta_c(d, hc_radius, virial_order)?;
    let step = 0.01 * beta_c;
    let mut prev = beta_c * (1.0 + 1e-6);
    let mut beta = prev + step;
    while beta <= BETA_SCAN_CAP {
        if contraction_margin(d, beta, hc_radius, virial_order)? <= 0.0 {
            let f = |b: f64| contraction_margin(d, b, hc_radius, virial_order).unwrap_or(f64::NAN);
            let root = solve(prev, beta, f, |_| f64::NAN, "beta_0")?;
            return Ok(BetaZero {
                beta_0: root,
                capped: false,
            });
        }
        prev = beta;
        beta += step;
    }
    Ok(BetaZero {
        beta_0: BETA_SCAN_CAP,
        capped: true,
    })
}

/// One row of the phase-diagram table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRow {
    pub beta: f64,
    #[serde(rename = "R")]
    pub hc_radius: f64,
    pub epsilon: f64,
    pub lambda_coex: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub beta_c: f64,
    pub beta_0: f64,
    pub kprime_minus: f64,
    pub kprime_plus: f64,
}

pub fn phase_row(d: usize, beta: f64, hc_radius: f64, virial_order: usize, beta_c: f64, beta_0: f64) -> Result<PhaseRow> {
    let s = find_coexistence(d, beta, hc_radius, virial_order)?;
    Ok(PhaseRow {
        beta,
        hc_radius,
        epsilon: s.epsilon,
        lambda_coex: s.lambda_coex,
        rho_minus: s.rho_minus,
        rho_plus: s.rho_plus,
        s_minus: s.s_minus,
        s_plus: s.s_plus,
        beta_c,
        beta_0,
        kprime_minus: s.kprime_minus,
        kprime_plus: s.kprime_plus,
    })
}

/// Least-squares slope and intercept of `beta_c(eps) - beta_c(0)` against `eps`,
/// with the coefficient of determination.
pub fn epsilon_slope(d: usize, eps_values: &[f64], virial_order: usize) -> Result<(f64, f64, f64)> {
    let b0 = find_beta_c(d, 0.0, virial_order)?;
    let mut xs = Vec::with_capacity(eps_values.len());
    let mut ys = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let r = radius_for_volume(d, eps);
        xs.push(eps);
        ys.push(find_beta_c(d, r, virial_order)? - b0);
    }
    Ok(crate::stats::linear_fit(&xs, &ys))
}

/// Radius whose `d`-ball has volume `eps`.
pub fn radius_for_volume(d: usize, eps: f64) -> f64 {
    let unit = ball_volume(d, 1.0);
    (eps / unit).powf(1.0 / d as f64)
}
