//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are errors. [`RunConfig::echo`] renders every key in
//! canonical order, followed by the derived length scales as comments, and
//! parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lmphc_core::meanfield::{find_beta_c, find_coexistence, MeanFieldSolution};
use lmphc_core::model::{HamiltonianForm, KernelSpec, ModelParams};
use lmphc_core::{Error, Result};

/// Chemical potential setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Value(f64),
    /// The mean-field coexistence value at `(beta, R)`.
    Coexistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainShape {
    Box,
    Torus,
}

/// Boundary condition of a box, or a phase selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseChoice {
    Empty,
    Plus,
    Minus,
    Density(f64),
}

/// Density choice with an automatic default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityChoice {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub gamma: f64,
    pub hc_radius: f64,
    pub beta: f64,
    pub lambda: Lambda,
    pub alpha: f64,
    pub a: f64,
    pub quad_factor: usize,
    pub kernel: KernelSpec,
    pub form: HamiltonianForm,
    pub virial_order: usize,
    /// Half-width of the phase windows; `None` means `gamma^a`.
    pub zeta: Option<f64>,
    pub domain: DomainShape,
    /// Domain side in `ell_plus` cubes.
    pub cubes: usize,
    pub boundary: PhaseChoice,
    pub initial_density: DensityChoice,
    pub steps: u64,
    pub burn_in: u64,
    pub every: u64,
    pub seed: u64,
    pub snapshot_every: u64,
    pub trace_every: u64,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    pub beta_points: usize,
    /// Hard-core radii of the phase-diagram sweep; empty means `[R]`.
    pub radii: Vec<f64>,
    pub snapshot: Option<String>,
    /// Index of the contour used by `peierls` when a snapshot is given.
    pub contour_index: usize,
    /// Largest segment length of the synthetic `peierls` family.
    pub contour_length: usize,
    pub contour_pattern: Vec<i8>,
    pub contour_sign: i8,
    pub order: usize,
    pub budget: usize,
    pub direct_budget: usize,
    /// Cube occupations of `expand`, as `(cell, count)`.
    pub occupation: Vec<([i64; 3], u32)>,
    /// Fine cubes per axis of the Dobrushin probe lattice.
    pub lattice: usize,
    pub probes: usize,
    pub window_phase: PhaseChoice,
    pub torus_factor: usize,
    pub batches: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::default();
        RunConfig {
            d: p.d,
            gamma: p.gamma,
            hc_radius: p.hc_radius,
            beta: p.beta,
            lambda: Lambda::Value(p.lambda),
            alpha: p.alpha,
            a: p.a,
            quad_factor: p.quad_factor,
            kernel: p.kernel,
            form: p.form,
            virial_order: 2,
            zeta: Some(DEFAULT_ZETA),
            domain: DomainShape::Box,
            cubes: 4,
            boundary: PhaseChoice::Empty,
            initial_density: DensityChoice::Auto,
            steps: 100_000,
            burn_in: 10_000,
            every: 100,
            seed: 0,
            snapshot_every: 0,
            trace_every: 1000,
            beta_min: None,
            beta_max: None,
            beta_points: 20,
            radii: Vec::new(),
            snapshot: None,
            contour_index: 0,
            contour_length: 3,
            contour_pattern: vec![0],
            contour_sign: 1,
            order: 2,
            budget: 20_000,
            direct_budget: 0,
            occupation: Vec::new(),
            lattice: 4,
            probes: 3,
            window_phase: PhaseChoice::Plus,
            torus_factor: 3,
            batches: 20,
        }
    }
}

/// Default phase-window half-width. `gamma^a` with the default exponents
/// exceeds half the coexistence gap near the critical point.
pub const DEFAULT_ZETA: f64 = 0.1;

/// Keys in canonical order.
pub const KEYS: &[&str] = &[
    "d",
    "gamma",
    "R",
    "beta",
    "lambda",
    "alpha",
    "a",
    "quad_factor",
    "kernel",
    "form",
    "virial_order",
    "zeta",
    "domain",
    "cubes",
    "boundary",
    "initial_density",
    "steps",
    "burn_in",
    "every",
    "seed",
    "snapshot_every",
    "trace_every",
    "beta_min",
    "beta_max",
    "beta_points",
    "radii",
    "snapshot",
    "contour_index",
    "contour_length",
    "contour_pattern",
    "contour_sign",
    "order",
    "budget",
    "direct_budget",
    "occupation",
    "lattice",
    "probes",
    "window_phase",
    "torus_factor",
    "batches",
];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> String {
    format!("invalid value `{value}` for `{key}`: {why}")
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(key, v, e))
}

fn opt_f64(key: &str, v: &str) -> std::result::Result<Option<f64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn phase(key: &str, v: &str) -> std::result::Result<PhaseChoice, String> {
    Ok(match v {
        "empty" => PhaseChoice::Empty,
        "plus" => PhaseChoice::Plus,
        "minus" => PhaseChoice::Minus,
        _ => PhaseChoice::Density(num(key, v)?),
    })
}

fn fmt_phase(p: &PhaseChoice) -> String {
    match p {
        PhaseChoice::Empty => "empty".into(),
        PhaseChoice::Plus => "plus".into(),
        PhaseChoice::Minus => "minus".into(),
        PhaseChoice::Density(x) => format!("{x:?}"),
    }
}

fn fmt_opt(x: &Option<f64>) -> String {
    x.map_or("auto".into(), |v| format!("{v:?}"))
}

impl RunConfig {
    /// Parses and validates a configuration file.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut lines: BTreeMap<&'static str, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected key=value, found `{t}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(key) = KEYS.iter().find(|&&x| x == k) else {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key `{k}`"),
                });
            };
            if lines.insert(key, line).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{k}`"),
                });
            }
            cfg.set(key, v).map_err(|msg| Error::Parse { line, msg })?;
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => match lines.get(name) {
                Some(&line) => Error::Parse {
                    line,
                    msg: format!("invalid value for `{name}`: {reason}"),
                },
                None => Error::InvalidParameter { name, reason },
            },
            other => other,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "d" => self.d = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "R" => self.hc_radius = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "lambda" => {
                self.lambda = if v == "coex" { Lambda::Coexistence } else { Lambda::Value(num(key, v)?) }
            }
            "alpha" => self.alpha = num(key, v)?,
            "a" => self.a = num(key, v)?,
            "quad_factor" => self.quad_factor = num(key, v)?,
            "kernel" => {
                self.kernel = match v {
                    "polynomial" => KernelSpec::Polynomial,
                    "off" => KernelSpec::Off,
                    _ => match v.strip_prefix("snapped:") {
                        Some(b) => KernelSpec::CubeSnapped { blend: num(key, b)? },
                        None => return Err(bad(key, v, "expected polynomial, off or snapped:<blend>")),
                    },
                }
            }
            "form" => {
                self.form = match v {
                    "functional" => HamiltonianForm::Functional,
                    "multibody" => HamiltonianForm::Multibody,
                    _ => return Err(bad(key, v, "expected functional or multibody")),
                }
            }
            "virial_order" => self.virial_order = num(key, v)?,
            "zeta" => self.zeta = opt_f64(key, v)?,
            "domain" => {
                self.domain = match v {
                    "box" => DomainShape::Box,
                    "torus" => DomainShape::Torus,
                    _ => return Err(bad(key, v, "expected box or torus")),
                }
            }
            "cubes" => self.cubes = num(key, v)?,
            "boundary" => self.boundary = phase(key, v)?,
            "initial_density" => {
                self.initial_density = match opt_f64(key, v)? {
                    None => DensityChoice::Auto,
                    Some(x) => DensityChoice::Value(x),
                }
            }
            "steps" => self.steps = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "every" => self.every = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "snapshot_every" => self.snapshot_every = num(key, v)?,
            "trace_every" => self.trace_every = num(key, v)?,
            "beta_min" => self.beta_min = opt_f64(key, v)?,
            "beta_max" => self.beta_max = opt_f64(key, v)?,
            "beta_points" => self.beta_points = num(key, v)?,
            "radii" => {
                self.radii = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|x| num(key, x.trim())).collect::<std::result::Result<_, _>>()?
                }
            }
            "snapshot" => self.snapshot = if v.is_empty() { None } else { Some(v.to_string()) },
            "contour_index" => self.contour_index = num(key, v)?,
            "contour_length" => self.contour_length = num(key, v)?,
            "contour_pattern" => {
                self.contour_pattern = v.split(',').map(|x| num(key, x.trim())).collect::<std::result::Result<_, _>>()?
            }
            "contour_sign" => self.contour_sign = num(key, v)?,
            "order" => self.order = num(key, v)?,
            "budget" => self.budget = num(key, v)?,
            "direct_budget" => self.direct_budget = num(key, v)?,
            "occupation" => self.occupation = parse_occupation(key, v)?,
            "lattice" => self.lattice = num(key, v)?,
            "probes" => self.probes = num(key, v)?,
            "window_phase" => {
                self.window_phase = match v {
                    "auto" => PhaseChoice::Empty,
                    _ => phase(key, v)?,
                }
            }
            "torus_factor" => self.torus_factor = num(key, v)?,
            "batches" => self.batches = num(key, v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Model parameters with `lambda = 0` in place of a coexistence request.
    fn raw_params(&self) -> ModelParams {
        ModelParams {
            d: self.d,
            gamma: self.gamma,
            hc_radius: self.hc_radius,
            beta: self.beta,
            lambda: match self.lambda {
                Lambda::Value(x) => x,
                Lambda::Coexistence => 0.0,
            },
            alpha: self.alpha,
            a: self.a,
            quad_factor: self.quad_factor,
            kernel: self.kernel,
            form: self.form,
        }
    }

    /// Model parameters with the chemical potential resolved.
    pub fn params(&self) -> Result<ModelParams> {
        let mut p = self.raw_params();
        if self.lambda == Lambda::Coexistence {
            p.lambda = self.coexistence()?.lambda_coex;
        }
        p.validate()?;
        Ok(p)
    }

    /// Mean-field coexistence at `(beta, R)`.
    pub fn coexistence(&self) -> Result<MeanFieldSolution> {
        find_coexistence(self.d, self.beta, self.hc_radius, self.virial_order)
    }

    /// Half-width of the phase windows.
    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or_else(|| self.raw_params().scales().zeta)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.raw_params();
        p.validate()?;
        if !(1..=3).contains(&self.virial_order) {
            return Err(Error::InvalidParameter {
                name: "virial_order",
                reason: format!("{} not in 1..=3", self.virial_order),
            });
        }
        let positive = |name: &'static str, ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                })
            }
        };
        positive("cubes", self.cubes > 0)?;
        positive("every", self.every > 0)?;
        positive("beta_points", self.beta_points > 0)?;
        positive("contour_length", self.contour_length > 0)?;
        positive("lattice", self.lattice > 0)?;
        positive("probes", self.probes >= 2)?;
        positive("batches", self.batches >= 2)?;
        positive("budget", self.budget > 0)?;
        positive("order", self.order > 0)?;
        if let Some(z) = self.zeta {
            positive("zeta", z > 0.0)?;
        }
        if let DensityChoice::Value(x) = self.initial_density {
            positive("initial_density", x >= 0.0 && x.is_finite())?;
        }
        for (name, ph) in [("boundary", self.boundary), ("window_phase", self.window_phase)] {
            if let PhaseChoice::Density(x) = ph {
                positive(name, x >= 0.0 && x.is_finite())?;
            }
        }
        if self.contour_sign != 1 && self.contour_sign != -1 {
            return Err(Error::InvalidParameter {
                name: "contour_sign",
                reason: "must be 1 or -1".into(),
            });
        }
        if self.contour_pattern.is_empty() || self.contour_pattern.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::InvalidParameter {
                name: "contour_pattern",
                reason: "values must lie in {-1, 0, 1}".into(),
            });
        }
        if self.radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "radii",
                reason: "radii must be non-negative".into(),
            });
        }
        if self.domain == DomainShape::Torus && self.boundary != PhaseChoice::Empty {
            return Err(Error::InvalidParameter {
                name: "boundary",
                reason: "a torus takes no boundary condition".into(),
            });
        }
        if self.occupation.iter().any(|(c, _)| c[self.d..].iter().any(|&x| x != 0)) {
            return Err(Error::InvalidParameter {
                name: "occupation",
                reason: format!("cells need exactly {} coordinates", self.d),
            });
        }
        // The mean-field solver has a density guard; outside it only an
        // explicit coexistence request needs the phase diagram.
        let beta_c = match find_beta_c(self.d, self.hc_radius, self.virial_order) {
            Ok(b) => b,
            Err(e) if self.lambda == Lambda::Coexistence => return Err(e),
            Err(_) => return Ok(()),
        };
        if self.beta > beta_c {
            let sol = self.coexistence()?;
            let half = 0.5 * (sol.rho_plus - sol.rho_minus);
            if self.zeta() >= half {
                return Err(Error::InvalidParameter {
                    name: "zeta",
                    reason: format!(
                        "{} >= (rho_plus - rho_minus)/2 = {half} at beta={}, R={}",
                        self.zeta(),
                        self.beta,
                        self.hc_radius
                    ),
                });
            }
        } else if self.lambda == Lambda::Coexistence {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("no coexistence at beta={} <= beta_c={beta_c}", self.beta),
            });
        }
        Ok(())
    }

    /// Canonical rendering of every key, with the derived scales as comments.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key}={}", self.value_of(key));
        }
        let sc = self.raw_params().scales();
        let _ = writeln!(s, "# ell_minus={:?}", sc.ell_minus);
        let _ = writeln!(s, "# ell_plus={:?}", sc.ell_plus);
        let _ = writeln!(s, "# plus_ratio={}", sc.plus_ratio);
        let _ = writeln!(s, "# zeta_effective={:?}", self.zeta());
        s
    }

    fn value_of(&self, key: &str) -> String {
        let join = |v: Vec<String>| v.join(",");
        match key {
            "d" => self.d.to_string(),
            "gamma" => format!("{:?}", self.gamma),
            "R" => format!("{:?}", self.hc_radius),
            "beta" => format!("{:?}", self.beta),
            "lambda" => match self.lambda {
                Lambda::Value(x) => format!("{x:?}"),
                Lambda::Coexistence => "coex".into(),
            },
            "alpha" => format!("{:?}", self.alpha),
            "a" => format!("{:?}", self.a),
            "quad_factor" => self.quad_factor.to_string(),
            "kernel" => match self.kernel {
                KernelSpec::Polynomial => "polynomial".into(),
                KernelSpec::Off => "off".into(),
                KernelSpec::CubeSnapped { blend } => format!("snapped:{blend:?}"),
            },
            "form" => match self.form {
                HamiltonianForm::Functional => "functional".into(),
                HamiltonianForm::Multibody => "multibody".into(),
            },
            "virial_order" => self.virial_order.to_string(),
            "zeta" => fmt_opt(&self.zeta),
            "domain" => match self.domain {
                DomainShape::Box => "box".into(),
                DomainShape::Torus => "torus".into(),
            },
            "cubes" => self.cubes.to_string(),
            "boundary" => fmt_phase(&self.boundary),
            "initial_density" => match self.initial_density {
                DensityChoice::Auto => "auto".into(),
                DensityChoice::Value(x) => format!("{x:?}"),
            },
            "steps" => self.steps.to_string(),
            "burn_in" => self.burn_in.to_string(),
            "every" => self.every.to_string(),
            "seed" => self.seed.to_string(),
            "snapshot_every" => self.snapshot_every.to_string(),
            "trace_every" => self.trace_every.to_string(),
            "beta_min" => fmt_opt(&self.beta_min),
            "beta_max" => fmt_opt(&self.beta_max),
            "beta_points" => self.beta_points.to_string(),
            "radii" => join(self.radii.iter().map(|r| format!("{r:?}")).collect()),
            "snapshot" => self.snapshot.clone().unwrap_or_default(),
            "contour_index" => self.contour_index.to_string(),
            "contour_length" => self.contour_length.to_string(),
            "contour_pattern" => join(self.contour_pattern.iter().map(|v| v.to_string()).collect()),
            "contour_sign" => self.contour_sign.to_string(),
            "order" => self.order.to_string(),
            "budget" => self.budget.to_string(),
            "direct_budget" => self.direct_budget.to_string(),
            "occupation" => self
                .occupation
                .iter()
                .map(|(c, n)| {
                    let coords: Vec<String> = c[..self.d].iter().map(|x| x.to_string()).collect();
                    format!("{}:{n}", coords.join(","))
                })
                .collect::<Vec<_>>()
                .join(";"),
            "lattice" => self.lattice.to_string(),
            "probes" => self.probes.to_string(),
            "window_phase" => match self.window_phase {
                PhaseChoice::Empty => "auto".into(),
                other => fmt_phase(&other),
            },
            "torus_factor" => self.torus_factor.to_string(),
            "batches" => self.batches.to_string(),
            _ => unreachable!("unknown key `{key}`"),
        }
    }
}

/// `i,j:n;k,l:m` with up to three coordinates per cell.
fn parse_occupation(key: &str, v: &str) -> std::result::Result<Vec<([i64; 3], u32)>, String> {
    let mut out = Vec::new();
    for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (cell, n) = item.split_once(':').ok_or_else(|| bad(key, item, "expected coords:count"))?;
        let coords: Vec<i64> = cell.split(',').map(|x| num(key, x.trim())).collect::<std::result::Result<_, _>>()?;
        if coords.is_empty() || coords.len() > 3 {
            return Err(bad(key, item, "cells take one to three coordinates"));
        }
        let mut c = [0i64; 3];
        c[..coords.len()].copy_from_slice(&coords);
        out.push((c, num(key, n.trim())?));
    }
    Ok(out)
}
