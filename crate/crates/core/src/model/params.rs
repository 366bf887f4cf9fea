use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How a particle's position enters the Kac kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// The smooth polynomial kernel at the true position.
    #[default]
    Polynomial,
    /// Position pulled towards the centre of its `ell_minus` cube:
    /// `c + blend * (q - c)`. With `blend = 0` the kernel is constant over each
    /// cube, so coarse potentials equal the exact ones.
    CubeSnapped { blend: f64 },
    /// Kac interactions switched off (hard core and chemical potential only).
    Off,
}

impl KernelSpec {
    /// Stable identifier used for cache keys and manifests.
    pub fn id(&self) -> String {
        match self {
            KernelSpec::Polynomial => "poly".into(),
            KernelSpec::CubeSnapped { blend } => format!("snap{:016x}", blend.to_bits()),
            KernelSpec::Off => "off".into(),
        }
    }
}

/// Which algebraic form of the Kac energy is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianForm {
    /// `int e_lambda(J * q) dr`, which contains coincident-index terms.
    #[default]
    Functional,
    /// Pair and quadruple sums over distinct particle indices only.
    Multibody,
}

/// Physical and scale parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub gamma: f64,
    pub hc_radius: f64,
    pub beta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub a: f64,
    pub quad_factor: usize,
    pub kernel: KernelSpec,
    pub form: HamiltonianForm,
}

/// Length scales derived from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scales {
    /// Kac range `1/gamma`.
    pub range: f64,
    pub ell_minus: f64,
    /// `ell_plus` after snapping to `plus_ratio * ell_minus`.
    pub ell_plus: f64,
    pub plus_ratio: usize,
    pub zeta: f64,
    /// Quadrature spacing, an exact divisor of `ell_minus`.
    pub spacing: f64,
    pub nodes_per_cell: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d: 2,
            gamma: 0.1,
            hc_radius: 0.0,
            beta: 2.0,
            lambda: 0.0,
            alpha: 0.25,
            a: 0.05,
            quad_factor: 8,
            kernel: KernelSpec::Polynomial,
            form: HamiltonianForm::Functional,
        }
    }
}

impl ModelParams {
    pub fn new(d: usize, gamma: f64, hc_radius: f64, beta: f64, lambda: f64) -> Result<Self> {
        let p = ModelParams {
            d,
            gamma,
            hc_radius,
            beta,
            lambda,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::param("d", format!("{} not in {{1,2,3}}", self.d)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", format!("{} not in (0,1)", self.gamma)));
        }
        if !(self.hc_radius >= 0.0 && self.hc_radius < 1.0 / self.gamma) {
            return Err(Error::param(
                "hc_radius",
                format!("{} not in [0, 1/gamma)", self.hc_radius),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("{} must be finite and >= 0", self.beta)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", format!("{} not in (0,1)", self.alpha)));
        }
        if !(self.a > 0.0 && self.a < self.alpha) {
            return Err(Error::param("a", format!("{} not in (0, alpha)", self.a)));
        }
        if self.quad_factor < 2 {
            return Err(Error::param("quad_factor", "must be at least 2"));
        }
        if let KernelSpec::CubeSnapped { blend } = self.kernel {
            if !(0.0..=1.0).contains(&blend) {
                return Err(Error::param("kernel", format!("blend {blend} not in [0,1]")));
            }
        }
        Ok(())
    }

    /// Kac range `1/gamma`.
    pub fn range(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Hard-sphere exclusion volume `V_d(R)`.
    pub fn epsilon(&self) -> f64 {
        ball_volume(self.d, self.hc_radius)
    }

    pub fn scales(&self) -> Scales {
        let range = self.range();
        let ell_minus = self.gamma.powf(-(1.0 - self.alpha));
        let raw_plus = self.gamma.powf(-(1.0 + self.alpha));
        let plus_ratio = ((raw_plus / ell_minus).round() as usize).max(1);
        let nodes_per_cell = ((ell_minus * self.quad_factor as f64 / range).ceil() as usize).max(1);
        Scales {
            range,
            ell_minus,
            ell_plus: plus_ratio as f64 * ell_minus,
            plus_ratio,
            zeta: self.gamma.powf(self.a),
            spacing: ell_minus / nodes_per_cell as f64,
            nodes_per_cell,
        }
    }

    /// Exact `ell_minus^d`.
    pub fn cell_volume(&self) -> f64 {
        self.scales().ell_minus.powi(self.d as i32)
    }

    pub fn kernel_off(&self) -> bool {
        matches!(self.kernel, KernelSpec::Off)
    }
}

/// Normalisation `C_d` with `C_d * int_{|u|<1} (1-|u|^2)^3 du = 1`.
pub fn kernel_constant(d: usize) -> f64 {
    match d {
        1 => 35.0 / 32.0,
        2 => 4.0 / PI,
        3 => 315.0 / (64.0 * PI),
        _ => panic!("dimension {d} unsupported"),
    }
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r * r * r,
        _ => panic!("dimension {d} unsupported"),
    }
}
