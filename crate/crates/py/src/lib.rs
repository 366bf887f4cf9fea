//! Python bindings for the lmphc toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lmphc_core::cluster_exp;
use lmphc_core::coarse_grain::{eta_field, extract_contours, theta_fields, Contour, PhaseWindows};
use lmphc_core::dobrushin::{self, EffectiveEnergy, ProbeSettings, RestrictedWindow};
use lmphc_core::effective_ham::{CoarseModel, DensityConfig};
use lmphc_core::meanfield;
use lmphc_core::model::{self, Domain, HamiltonianForm, KernelSpec, Metric, Point, Snapshot};
use lmphc_core::sampler::{phase_configuration, SamplerConfig, SamplerState};

fn to_py(e: lmphc_core::Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn point(v: &[f64]) -> PyResult<Point> {
    if v.is_empty() || v.len() > 3 {
        return Err(PyValueError::new_err("points take one to three coordinates"));
    }
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

fn cell(v: &[i64]) -> PyResult<[i64; 3]> {
    if v.is_empty() || v.len() > 3 {
        return Err(PyValueError::new_err("cells take one to three coordinates"));
    }
    let mut c = [0i64; 3];
    c[..v.len()].copy_from_slice(v);
    Ok(c)
}

/// Physical and scale parameters.
#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (d, gamma, hc_radius, beta, lam=0.0, form="functional", kernel="polynomial", alpha=None, a=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        d: usize,
        gamma: f64,
        hc_radius: f64,
        beta: f64,
        lam: f64,
        form: &str,
        kernel: &str,
        alpha: Option<f64>,
        a: Option<f64>,
    ) -> PyResult<Self> {
        let mut p = model::ModelParams {
            d,
            gamma,
            hc_radius,
            beta,
            lambda: lam,
            ..Default::default()
        };
        p.form = match form {
            "functional" => HamiltonianForm::Functional,
            "multibody" => HamiltonianForm::Multibody,
            _ => return Err(PyValueError::new_err("form must be 'functional' or 'multibody'")),
        };
        p.kernel = match kernel {
            "polynomial" => KernelSpec::Polynomial,
            "off" => KernelSpec::Off,
            _ => return Err(PyValueError::new_err("kernel must be 'polynomial' or 'off'")),
        };
        if let Some(x) = alpha {
            p.alpha = x;
        }
        if let Some(x) = a {
            p.a = x;
        }
        p.validate().map_err(to_py)?;
        Ok(PyModelParams { inner: p })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn hc_radius(&self) -> f64 {
        self.inner.hc_radius
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    /// `(ell_minus, ell_plus, plus_ratio, zeta)`.
    fn scales(&self) -> (f64, f64, usize, f64) {
        let s = self.inner.scales();
        (s.ell_minus, s.ell_plus, s.plus_ratio, s.zeta)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(d={}, gamma={}, hc_radius={}, beta={}, lam={})",
            p.d, p.gamma, p.hc_radius, p.beta, p.lambda
        )
    }
}

/// Mean-field critical inverse temperature.
#[pyfunction]
#[pyo3(signature = (d, hc_radius, virial_order=2))]
fn find_beta_c(d: usize, hc_radius: f64, virial_order: usize) -> PyResult<f64> {
    meanfield::find_beta_c(d, hc_radius, virial_order).map_err(to_py)
}

/// Mean-field coexistence point as a dict.
#[pyfunction]
#[pyo3(signature = (d, beta, hc_radius, virial_order=2))]
fn find_coexistence(py: Python<'_>, d: usize, beta: f64, hc_radius: f64, virial_order: usize) -> PyResult<Py<PyAny>> {
    let s = meanfield::find_coexistence(d, beta, hc_radius, virial_order).map_err(to_py)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("lambda_coex", s.lambda_coex)?;
    out.set_item("rho_minus", s.rho_minus)?;
    out.set_item("rho_plus", s.rho_plus)?;
    out.set_item("s_minus", s.s_minus)?;
    out.set_item("s_plus", s.s_plus)?;
    out.set_item("kprime_minus", s.kprime_minus)?;
    out.set_item("kprime_plus", s.kprime_plus)?;
    Ok(out.into_any().unbind())
}

/// Grand-canonical sampler on a box or torus.
#[pyclass(name = "Sampler", unsendable)]
struct PySampler {
    inner: SamplerState,
    params: model::ModelParams,
}

#[pymethods]
impl PySampler {
    #[new]
    #[pyo3(signature = (params, cubes, seed, torus=false, initial_density=0.5))]
    fn new(params: &PyModelParams, cubes: usize, seed: u64, torus: bool, initial_density: f64) -> PyResult<Self> {
        let p = params.inner;
        let domain = if torus { Domain::torus(&p, cubes) } else { Domain::boxed(&p, cubes, Vec::new()) }.map_err(to_py)?;
        let q = phase_configuration(&domain, &p, |_| initial_density).map_err(to_py)?;
        let settings = SamplerConfig {
            trace_every: 0,
            ..Default::default()
        };
        let inner = SamplerState::new(q, &p, settings, None, seed).map_err(to_py)?;
        Ok(PySampler { inner, params: p })
    }

    /// Advances the chain by `steps` moves.
    fn run(&mut self, steps: u64) -> PyResult<()> {
        self.inner.run_observed(steps, 0, |_| {}).map_err(to_py)
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn positions(&self) -> Vec<Vec<f64>> {
        let d = self.params.d;
        self.inner.configuration().positions().iter().map(|p| p[..d].to_vec()).collect()
    }

    /// Snapshot in the text file format.
    fn snapshot(&self) -> String {
        self.inner.snapshot().to_text()
    }
}

/// Contours of a snapshot as JSON strings.
#[pyfunction]
fn contours(snapshot: &str, params: &PyModelParams, rho_minus: f64, rho_plus: f64, zeta: f64) -> PyResult<Vec<String>> {
    let p = params.inner;
    let snap = Snapshot::parse(snapshot).map_err(to_py)?;
    let q = snap.to_configuration(&p).map_err(to_py)?;
    let w = PhaseWindows::new(rho_minus, rho_plus, zeta).map_err(to_py)?;
    let eta = eta_field(&q, &p, &w).map_err(to_py)?;
    let (_, big) = theta_fields(&eta, p.scales().plus_ratio).map_err(to_py)?;
    let cs = extract_contours(&big, Some(&eta)).map_err(to_py)?;
    Ok(cs.iter().map(|c: &Contour| c.to_json().to_string()).collect())
}

/// Truncated cluster expansion of `h^p`: `(value, stderr, discarded_bound)`.
#[pyfunction]
#[pyo3(signature = (params, occupation, order, budget, seed))]
fn truncated_hp(
    params: &PyModelParams,
    occupation: Vec<(Vec<i64>, u32)>,
    order: usize,
    budget: usize,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let p = params.inner;
    let model = CoarseModel::build(&p, Metric::free(p.d), None).map_err(to_py)?;
    let rho = DensityConfig::from_counts(
        occupation
            .iter()
            .map(|(c, n)| cell(c).map(|c| (c, *n)))
            .collect::<PyResult<Vec<_>>>()?,
    );
    let t = cluster_exp::truncated_hp(&model, &rho, &[], order, budget, seed).map_err(to_py)?;
    Ok((t.value, t.stderr, t.discarded_bound))
}

fn distribution(n_min: i64, probs: Vec<f64>) -> PyResult<dobrushin::DiscreteDistribution> {
    dobrushin::DiscreteDistribution::new(n_min, probs).map_err(to_py)
}

/// Vaserstein distance of two distributions on consecutive integers.
#[pyfunction]
fn vaserstein_1d(n_min1: i64, p1: Vec<f64>, n_min2: i64, p2: Vec<f64>) -> PyResult<f64> {
    Ok(dobrushin::vaserstein_1d(&distribution(n_min1, p1)?, &distribution(n_min2, p2)?))
}

/// Boundary discrepancy of two point sets.
#[pyfunction]
fn discrepancy(q1: Vec<Vec<f64>>, q2: Vec<Vec<f64>>) -> PyResult<usize> {
    let a = q1.iter().map(|v| point(v)).collect::<PyResult<Vec<_>>>()?;
    let b = q2.iter().map(|v| point(v)).collect::<PyResult<Vec<_>>>()?;
    Ok(dobrushin::discrepancy(&a, &b))
}

/// Dobrushin check on a cubic lattice of `lattice` cubes per axis; JSON report.
#[pyfunction]
#[pyo3(signature = (params, lattice, center, zeta, probes=3))]
fn uniqueness_check(params: &PyModelParams, lattice: usize, center: f64, zeta: f64, probes: usize) -> PyResult<String> {
    let p = params.inner;
    let d = p.d;
    let window = RestrictedWindow::around(center, zeta, p.cell_volume()).map_err(to_py)?;
    let model = CoarseModel::build(&p, Metric::free(d), None).map_err(to_py)?;
    let energy = EffectiveEnergy::new(model, Vec::new());
    let cells: Vec<[i64; 3]> = (0..lattice.pow(d as u32))
        .map(|flat| {
            let mut c = [0i64; 3];
            let mut rest = flat;
            for k in (0..d).rev() {
                c[k] = (rest % lattice) as i64;
                rest /= lattice;
            }
            c
        })
        .collect();
    let settings = ProbeSettings {
        nz_levels: probes,
        background_levels: probes,
    };
    let report = dobrushin::uniqueness_check(&cells, &window, &energy, &settings, p.gamma).map_err(to_py)?;
    report.to_json().map_err(to_py)
}

#[pymodule]
fn lmphc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", lmphc_core::VERSION)?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PySampler>()?;
    m.add_function(wrap_pyfunction!(find_beta_c, m)?)?;
    m.add_function(wrap_pyfunction!(find_coexistence, m)?)?;
    m.add_function(wrap_pyfunction!(contours, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_hp, m)?)?;
    m.add_function(wrap_pyfunction!(vaserstein_1d, m)?)?;
    m.add_function(wrap_pyfunction!(discrepancy, m)?)?;
    m.add_function(wrap_pyfunction!(uniqueness_check, m)?)?;
    Ok(())
}
