//! Subcommand implementations.

use rayon::prelude::*;
use serde::Serialize;

use lmphc_core::cluster_exp::truncated_hp;
use lmphc_core::coarse_grain::{
    eta_field, extract_contours, peierls_statistics, segment_contour, theta_fields, Contour, PeierlsConfig,
    PeierlsEstimate, PhaseWindows,
};
use lmphc_core::dobrushin::{
    compare_geometries, uniqueness_check, ComparisonSetup, EffectiveEnergy, ProbeSettings, Reference, RestrictedWindow,
};
use lmphc_core::effective_ham::{CoarseModel, DensityConfig};
use lmphc_core::meanfield::{find_beta_0, find_beta_c, global_minimizer, phase_row, FreeEnergySpec, PhaseRow};
use lmphc_core::model::{Cell, Domain, Metric, ModelParams, ParticleConfiguration, Point, Snapshot};
use lmphc_core::sampler::{boundary_shell, phase_configuration, SamplerConfig, SamplerState};
use lmphc_core::stats::derive_seed;
use lmphc_core::{Error, Result};

use crate::config::{DensityChoice, DomainShape, PhaseChoice, RunConfig};
use crate::output::Output;

fn csv_error(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

/// Coexisting densities with the configured window half-width.
pub fn phase_windows(cfg: &RunConfig) -> Result<PhaseWindows> {
    let sol = cfg.coexistence()?;
    PhaseWindows::new(sol.rho_minus, sol.rho_plus, cfg.zeta())
}

/// Density of a phase choice; `Empty` selects the mean-field minimiser at `lambda`.
fn phase_density(cfg: &RunConfig, params: &ModelParams, choice: PhaseChoice) -> Result<f64> {
    match choice {
        PhaseChoice::Plus => Ok(cfg.coexistence()?.rho_plus),
        PhaseChoice::Minus => Ok(cfg.coexistence()?.rho_minus),
        PhaseChoice::Density(x) => Ok(x),
        PhaseChoice::Empty => {
            let spec = FreeEnergySpec::new(cfg.d, cfg.beta, cfg.hc_radius)
                .with_order(cfg.virial_order)
                .with_lambda(params.lambda);
            global_minimizer(&spec)
        }
    }
}

fn initial_density(cfg: &RunConfig, params: &ModelParams) -> Result<f64> {
    match cfg.initial_density {
        DensityChoice::Value(x) => Ok(x),
        DensityChoice::Auto => match cfg.boundary {
            PhaseChoice::Plus | PhaseChoice::Minus | PhaseChoice::Density(_) => phase_density(cfg, params, cfg.boundary),
            PhaseChoice::Empty => phase_density(cfg, params, PhaseChoice::Empty),
        },
    }
}

fn boundary_density(cfg: &RunConfig, params: &ModelParams) -> Result<Option<f64>> {
    match cfg.boundary {
        PhaseChoice::Empty => Ok(None),
        other => phase_density(cfg, params, other).map(Some),
    }
}

/// Domain of `simulate`.
pub fn build_domain(cfg: &RunConfig, params: &ModelParams) -> Result<Domain> {
    match cfg.domain {
        DomainShape::Torus => Domain::torus(params, cfg.cubes),
        DomainShape::Box => {
            let n_fine = cfg.cubes * params.scales().plus_ratio;
            let shell = match boundary_density(cfg, params)? {
                None => Vec::new(),
                Some(rho) => boundary_shell(params, n_fine, rho)?,
            };
            Domain::boxed(params, cfg.cubes, shell)
        }
    }
}

pub fn phase_diagram(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let radii = if cfg.radii.is_empty() { vec![cfg.hc_radius] } else { cfg.radii.clone() };
    let mut jobs = Vec::new();
    for &r in &radii {
        let beta_c = find_beta_c(cfg.d, r, cfg.virial_order)?;
        let beta_0 = find_beta_0(cfg.d, r, cfg.virial_order)?.beta_0;
        let lo = cfg.beta_min.unwrap_or(beta_c);
        let hi = cfg.beta_max.unwrap_or(beta_0);
        if !(hi > lo) {
            return Err(Error::InvalidParameter {
                name: "beta_max",
                reason: format!("empty beta range [{lo}, {hi}] at R={r}"),
            });
        }
        for i in 0..cfg.beta_points {
            let beta = lo + (hi - lo) * (i + 1) as f64 / (cfg.beta_points + 1) as f64;
            jobs.push((beta, r, beta_c, beta_0));
        }
    }
    let rows: Vec<PhaseRow> = jobs
        .par_iter()
        .map(|&(beta, r, bc, b0)| phase_row(cfg.d, beta, r, cfg.virial_order, bc, b0))
        .collect::<Result<_>>()?;
    out.write("phase_diagram.csv", &to_csv(&rows)?)
}

#[derive(Serialize)]
struct TraceRow {
    step: u64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "H")]
    energy: f64,
    acc_insert: f64,
    acc_delete: f64,
    acc_displace: f64,
}

pub fn simulate(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    let domain = build_domain(cfg, &params)?;
    let rho = initial_density(cfg, &params)?;
    let init = phase_configuration(&domain, &params, |_| rho)?;
    let settings = SamplerConfig {
        snapshot_every: cfg.snapshot_every,
        trace_every: cfg.trace_every,
        ..Default::default()
    };
    let mut chain = SamplerState::new(init, &params, settings, None, cfg.seed)?;
    let summary = chain.run(cfg.steps)?;
    for snap in &summary.snapshots {
        out.write(&format!("snapshot_{:012}.txt", snap.step), &snap.to_text())?;
    }
    out.write("final.txt", &chain.snapshot().to_text())?;
    let rows: Vec<TraceRow> = summary
        .trace
        .iter()
        .map(|t| TraceRow {
            step: t.step,
            n: t.n,
            energy: t.energy,
            acc_insert: t.acc_insert,
            acc_delete: t.acc_delete,
            acc_displace: t.acc_displace,
        })
        .collect();
    out.write("trace.csv", &to_csv(&rows)?)?;
    #[derive(Serialize)]
    struct Summary {
        steps: u64,
        particles: usize,
        energy: f64,
        tau_int_n: f64,
        max_drift: f64,
        proposed: [u64; 3],
        accepted: [u64; 3],
    }
    out.write_json(
        "summary.json",
        &Summary {
            steps: summary.steps,
            particles: chain.len(),
            energy: chain.energy(),
            tau_int_n: summary.tau_int_n,
            max_drift: summary.max_drift,
            proposed: summary.stats.proposed,
            accepted: summary.stats.accepted,
        },
    )
}

/// Loads the configured snapshot and checks it against the model parameters.
pub fn load_snapshot(cfg: &RunConfig, params: &ModelParams) -> Result<ParticleConfiguration> {
    let Some(path) = &cfg.snapshot else {
        return Err(Error::InvalidParameter {
            name: "snapshot",
            reason: "this command needs a snapshot file".into(),
        });
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let snap = Snapshot::parse(&text)?;
    if snap.d != params.d || snap.gamma != params.gamma || snap.hc_radius != params.hc_radius {
        return Err(Error::InvalidParameter {
            name: "snapshot",
            reason: format!(
                "snapshot has d={}, gamma={}, R={}; the configuration has d={}, gamma={}, R={}",
                snap.d, snap.gamma, snap.hc_radius, params.d, params.gamma, params.hc_radius
            ),
        });
    }
    snap.to_configuration(params)
}

/// Contours of a configuration, with the `eta` and `Theta` fields.
pub fn contours_of(
    q: &ParticleConfiguration,
    params: &ModelParams,
    windows: &PhaseWindows,
) -> Result<(Vec<Contour>, String, String)> {
    let eta = eta_field(q, params, windows)?;
    let (_, big) = theta_fields(&eta, params.scales().plus_ratio)?;
    let contours = extract_contours(&big, Some(&eta))?;
    Ok((contours, eta.to_csv(), big.to_csv()))
}

pub fn coarse_grain(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    let windows = phase_windows(cfg)?;
    let q = load_snapshot(cfg, &params)?;
    let (contours, eta, theta) = contours_of(&q, &params, &windows)?;
    let json: Vec<serde_json::Value> = contours.iter().map(Contour::to_json).collect();
    out.write_json("contours.json", &json)?;
    out.write("eta.csv", &eta)?;
    out.write("theta.csv", &theta)
}

#[derive(Serialize)]
struct PeierlsRow {
    n_gamma: usize,
    samples: u64,
    numerator_hits: u64,
    denominator_hits: u64,
    ratio: f64,
    ratio_lo: f64,
    ratio_hi: f64,
    tau_int: f64,
}

pub fn peierls(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    let windows = phase_windows(cfg)?;
    let ratio = params.scales().plus_ratio;
    let contours: Vec<Contour> = if cfg.snapshot.is_some() {
        let q = load_snapshot(cfg, &params)?;
        let (mut cs, _, _) = contours_of(&q, &params, &windows)?;
        if cfg.contour_index >= cs.len() {
            return Err(Error::InvalidParameter {
                name: "contour_index",
                reason: format!("snapshot has {} contours", cs.len()),
            });
        }
        vec![cs.swap_remove(cfg.contour_index)]
    } else {
        (1..=cfg.contour_length)
            .map(|len| segment_contour(params.d, ratio, len, &cfg.contour_pattern))
            .collect::<Result<_>>()?
    };
    let base = PeierlsConfig {
        steps: cfg.steps,
        burn_in: cfg.burn_in,
        every: cfg.every,
        max_support: contours.iter().map(|c| c.n_gamma).max().unwrap_or(1),
        sampler: SamplerConfig {
            trace_every: 0,
            ..Default::default()
        },
        ..Default::default()
    };
    let estimates: Vec<PeierlsEstimate> = contours
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let pc = PeierlsConfig {
                seed: derive_seed(cfg.seed, k as u64),
                ..base
            };
            peierls_statistics(c, cfg.contour_sign, &windows, &params, &pc)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<PeierlsRow> = contours
        .iter()
        .zip(&estimates)
        .map(|(c, e)| PeierlsRow {
            n_gamma: c.n_gamma,
            samples: e.samples,
            numerator_hits: e.numerator_hits,
            denominator_hits: e.denominator_hits,
            ratio: e.ratio,
            ratio_lo: e.ratio_ci.0,
            ratio_hi: e.ratio_ci.1,
            tau_int: e.tau_int,
        })
        .collect();
    out.write("peierls.csv", &to_csv(&rows)?)?;
    out.write_json("peierls.json", &estimates)
}

fn coarse_model(params: &ModelParams) -> Result<CoarseModel> {
    CoarseModel::build(params, Metric::free(params.d), None)
}

pub fn expand(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    if cfg.occupation.is_empty() {
        return Err(Error::InvalidParameter {
            name: "occupation",
            reason: "expand needs at least one occupied cube".into(),
        });
    }
    let model = coarse_model(&params)?;
    let rho = DensityConfig::from_counts(cfg.occupation.iter().copied());
    let th = truncated_hp(&model, &rho, &[], cfg.order, cfg.budget, cfg.seed)?;
    out.write("truncation.csv", &th.to_csv())?;
    let diagrams: Vec<serde_json::Value> = th
        .shapes
        .iter()
        .map(|s| {
            serde_json::json!({
                "diagram": s.representative.to_json(),
                "activity": s.activity.value,
                "stderr": s.activity.stderr,
            })
        })
        .collect();
    out.write_json("diagrams.json", &diagrams)?;
    let direct = if cfg.direct_budget > 0 {
        Some(model.h_p_direct(&rho, &[], cfg.direct_budget, derive_seed(cfg.seed, 1))?)
    } else {
        None
    };
    out.write_json(
        "expand.json",
        &serde_json::json!({
            "order": th.order,
            "value": th.value,
            "stderr": th.stderr,
            "discarded_bound": th.discarded_bound,
            "order_norms": th.order_norms,
            "direct": direct.map(|e| serde_json::json!({"value": e.value, "stderr": e.stderr, "samples": e.samples})),
        }),
    )
}

fn lattice_cells(d: usize, n: usize) -> Vec<Cell> {
    (0..n.pow(d as u32))
        .map(|flat| {
            let mut c = [0i64; 3];
            let mut rest = flat;
            for k in (0..d).rev() {
                c[k] = (rest % n) as i64;
                rest /= n;
            }
            c
        })
        .collect()
}

pub fn dobrushin(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    let center = phase_density(cfg, &params, cfg.window_phase)?;
    let window = RestrictedWindow::around(center, cfg.zeta(), params.cell_volume())?;
    let energy = EffectiveEnergy::new(coarse_model(&params)?, Vec::<Point>::new());
    let probes = ProbeSettings {
        nz_levels: cfg.probes,
        background_levels: cfg.probes,
    };
    let lattice = lattice_cells(params.d, cfg.lattice);
    let report = uniqueness_check(&lattice, &window, &energy, &probes, params.gamma)?;
    out.write("coupling.json", &(report.to_json()? + "\n"))?;
    #[derive(Serialize)]
    struct Row {
        x: String,
        z: String,
        distance: f64,
        r: f64,
        max_w1: f64,
        probes: usize,
    }
    let d = params.d;
    let fmt = |c: &Cell| c[..d].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let rows: Vec<Row> = report
        .coefficients
        .iter()
        .map(|c| Row {
            x: fmt(&c.x),
            z: fmt(&c.z),
            distance: c.distance,
            r: c.r,
            max_w1: c.max_w1,
            probes: c.probes,
        })
        .collect();
    out.write("coefficients.csv", &to_csv(&rows)?)
}

pub fn compare(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let params = cfg.params()?;
    let stride = cfg.every;
    let samples = (cfg.steps / stride) as usize;
    let setup = ComparisonSetup {
        box_cubes: cfg.cubes,
        reference: Reference::Torus {
            factor: cfg.torus_factor,
        },
        boundary_density: boundary_density(cfg, &params)?,
        initial_density: initial_density(cfg, &params)?,
        burn_in: cfg.burn_in,
        samples,
        stride,
        batches: cfg.batches,
        sampler: SamplerConfig {
            trace_every: 0,
            ..Default::default()
        },
    };
    let curve = compare_geometries(&params, &setup, cfg.seed)?;
    out.write("decay.csv", &curve.to_csv())?;
    out.write_json("decay.json", &curve)
}
