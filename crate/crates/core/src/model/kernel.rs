use super::geometry::Point;
use super::params::{kernel_constant, KernelSpec, ModelParams};

/// The scaled Kac kernel `J_gamma(r, q) = gamma^d C_d (1 - gamma^2 |r - q|^2)^3`.
#[derive(Debug, Clone, Copy)]
pub struct KacKernel {
    pub d: usize,
    pub gamma: f64,
    /// `gamma^d C_d`, the value at zero separation.
    pub peak: f64,
    pub spec: KernelSpec,
    pub cell: f64,
}

impl KacKernel {
    pub fn new(params: &ModelParams) -> Self {
        KacKernel {
            d: params.d,
            gamma: params.gamma,
            peak: params.gamma.powi(params.d as i32) * kernel_constant(params.d),
            spec: params.kernel,
            cell: params.scales().ell_minus,
        }
    }

    pub fn range(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Kernel as a function of squared distance between `r` and an effective centre.
    #[inline]
    pub fn profile(&self, dist2: f64) -> f64 {
        let u = 1.0 - self.gamma * self.gamma * dist2;
        if u <= 0.0 {
            0.0
        } else {
            self.peak * u * u * u
        }
    }

    /// The point that plays the role of `q` inside the kernel.
    pub fn centre(&self, q: &Point) -> Point {
        match self.spec {
            KernelSpec::CubeSnapped { blend } => {
                let mut c = [0.0; 3];
                for k in 0..self.d {
                    let mid = ((q[k] / self.cell).floor() + 0.5) * self.cell;
                    c[k] = mid + blend * (q[k] - mid);
                }
                c
            }
            _ => *q,
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self.spec, KernelSpec::Off)
    }
}

/// `J_gamma(r, r')` with the parameters' kernel specification (free space).
pub fn kac_kernel(r: &Point, r_prime: &Point, params: &ModelParams) -> f64 {
    let k = KacKernel::new(params);
    if k.is_off() {
        return 0.0;
    }
    let c = k.centre(r_prime);
    let d2: f64 = (0..params.d).map(|i| (r[i] - c[i]).powi(2)).sum();
    k.profile(d2)
}
