use lmphc_core::model::{energy, Domain, KernelSpec, Metric, ModelParams, ParticleConfiguration, Point};
use lmphc_core::quadrature::GaussLegendre;
use lmphc_core::sampler::{SamplerConfig, SamplerState};
use lmphc_core::stats::{batch_means, mean_var};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

pub fn kac_off(d: usize, hc: f64, beta: f64, lambda: f64) -> ModelParams {
    let mut p = ModelParams::new(d, 0.1, hc, beta, lambda).unwrap();
    p.kernel = KernelSpec::Off;
    p
}

pub fn quiet() -> SamplerConfig {
    SamplerConfig {
        trace_every: 0,
        ..Default::default()
    }
}

/// Chi-square p-value of particle-number counts against Poisson(`mean`),
/// pooling bins until every expected count is at least 5.
pub fn poisson_p_value(counts: &[u64], mean: f64) -> (f64, f64, f64) {
    let law = Poisson::new(mean).unwrap();
    let total: f64 = counts.iter().sum::<u64>() as f64;
    let last = counts.len() as u64 - 1;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=last {
        obs += counts[k as usize] as f64;
        exp += if k == last { total * (1.0 - law.cdf(last - 1)) } else { total * law.pmf(k) };
        if exp >= 5.0 && (k == last || total * (1.0 - law.cdf(k)) >= 5.0) {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        let b = bins.last_mut().unwrap();
        b.0 += obs;
        b.1 += exp;
    }
    let chi2: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (bins.len() - 1) as f64;
    (chi2, df, 1.0 - ChiSquared::new(df).unwrap().cdf(chi2))
}

/// Particle-number histogram of the free gas with mean 10 on a one-cube torus.
pub fn free_gas_counts(samples: u64, seed: u64) -> (Vec<u64>, f64) {
    let p0 = kac_off(1, 0.0, 1.0, 0.0);
    let dom = Domain::torus(&p0, 1).unwrap();
    let mean = 10.0;
    let p = ModelParams {
        lambda: (mean / dom.volume()).ln(),
        ..p0
    };
    let q = ParticleConfiguration::empty(dom, &p).unwrap();
    let mut s = SamplerState::new(q, &p, quiet(), None, seed).unwrap();
    s.run_observed(10_000, 0, |_| {}).unwrap();
    let mut counts = vec![0u64; 64];
    s.run_observed(200 * samples, 200, |st| counts[st.len().min(63)] += 1).unwrap();
    (counts, mean)
}

/// Activity of the hard-rod gas at density `rho` and rod length `r`.
pub fn tonks_activity(rho: f64, r: f64) -> f64 {
    let x = rho * r / (1.0 - rho * r);
    rho / (1.0 - rho * r) * x.exp()
}

/// Sampled density of hard rods of length 1 at the Tonks activity for
/// density 0.4: `(target, mean, standard error)`.
pub fn hard_rod_density(seed: u64) -> (f64, f64, f64) {
    let rho = 0.4;
    let r = 1.0;
    let p = kac_off(1, r, 1.0, tonks_activity(rho, r).ln());
    let dom = Domain::torus(&p, 24).unwrap();
    let len = dom.volume();
    let q = ParticleConfiguration::empty(dom, &p).unwrap();
    let cfg = SamplerConfig {
        displacement: Some(0.5),
        ..quiet()
    };
    let mut s = SamplerState::new(q, &p, cfg, None, seed).unwrap();
    s.run_observed(200_000, 0, |_| {}).unwrap();
    let mut dens = Vec::new();
    s.run_observed(4_000_000, 100, |st| dens.push(st.len() as f64 / len)).unwrap();
    let (m, _) = mean_var(&dens);
    let (_, v) = mean_var(&batch_means(&dens, 40));
    (rho, m, (v / 40.0).sqrt())
}

/// Integral over ordered rod positions in `[0, len]` via gap coordinates
/// `x_k = q_k - (k-1) r`, which range over a simplex of side `len - (n-1) r`.
pub fn sector_weight(n: usize, len: f64, r: f64, params: &ModelParams) -> f64 {
    let gl = GaussLegendre::new(8);
    let panels = 8;
    let top = len - (n as f64 - 1.0) * r;
    let weight = |xs: &[f64]| {
        let pts: Vec<Point> = xs.iter().enumerate().map(|(k, x)| [x + k as f64 * r, 0.0, 0.0]).collect();
        (-params.beta * energy(&pts, Metric::free(1), params).unwrap()).exp()
    };
    #[allow(clippy::too_many_arguments)]
    fn nest(level: usize, n: usize, lo: f64, top: f64, xs: &mut Vec<f64>, gl: &GaussLegendre, panels: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        if level == n {
            return f(xs);
        }
        gl.composite(lo, top, panels, |x| {
            xs.push(x);
            let v = nest(level + 1, n, x, top, xs, gl, panels, f);
            xs.pop();
            v
        })
    }
    nest(0, n, 0.0, top, &mut Vec::new(), &gl, panels, &weight)
}

/// Occupation of a two-cube box capped at three rods: per sector
/// `(quadrature probability, sampled frequency, standard error)`.
pub fn capped_box_sectors(seed: u64) -> Vec<(f64, f64, f64)> {
    let r = 1.0;
    let mut p = ModelParams::new(1, 0.3, r, 2.0, 0.0).unwrap();
    let dom = Domain::boxed(&p, 2, Vec::new()).unwrap();
    let len = dom.volume();
    p.lambda = (1.5 / len).ln() / p.beta;
    let weights: Vec<f64> = (0..=3).map(|n| sector_weight(n, len, r, &p)).collect();
    let z: f64 = weights.iter().sum();

    let q = ParticleConfiguration::empty(dom, &p).unwrap();
    let cfg = SamplerConfig {
        max_particles: Some(3),
        ..quiet()
    };
    let mut s = SamplerState::new(q, &p, cfg, None, seed).unwrap();
    s.run_observed(10_000, 0, |_| {}).unwrap();
    let mut ns = Vec::new();
    s.run_observed(4_000_000, 10, |st| ns.push(st.len())).unwrap();
    weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let ind: Vec<f64> = ns.iter().map(|&n| if n == k { 1.0 } else { 0.0 }).collect();
            let means = batch_means(&ind, 50);
            let (m, v) = mean_var(&means);
            (w / z, m, (v / means.len() as f64).sqrt())
        })
        .collect()
}
