//! Python bindings: run configurations, single-point simulation, the exact
//! oracle comparison and the closed-form ESEEM product.

use hbn_cce::config::{preset, RunConfig, PRESETS};
use hbn_cce::eseem::{eseem_l1, DecayFit, EseemParams};
use hbn_cce::oracle::OracleLimit;
use hbn_cce::sweep::simulate as simulate_point;
use hbn_cce::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::MissingHyperfine { .. } | Error::Json(_) | Error::ClusterTooLarge { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A JSON run configuration.
#[pyclass(name = "Config", module = "hbn_cce_py", skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    /// One of the named presets.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name).map(|inner| Config { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        RunConfig::from_json(text).map(|inner| Config { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        PRESETS.to_vec()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn sha256(&self) -> String {
        self.inner.sha256()
    }

    #[getter]
    fn field_mt(&self) -> f64 {
        self.inner.point.field_mt
    }

    #[setter]
    fn set_field_mt(&mut self, b: f64) {
        self.inner.point.field_mt = b;
    }

    #[getter]
    fn max_order(&self) -> usize {
        self.inner.point.policy.max_order
    }

    #[setter]
    fn set_max_order(&mut self, n: usize) {
        self.inner.point.policy.max_order = n;
    }

    #[getter]
    fn keep_strongest(&self) -> Option<usize> {
        self.inner.keep_strongest
    }

    #[setter]
    fn set_keep_strongest(&mut self, n: Option<usize>) {
        self.inner.keep_strongest = n;
    }

    /// Schema and dataset check; returns the bath preview as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = hbn_cce::runner::validate_config(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("config_sha256", r.config_sha256)?;
        d.set_item("bath_spins", r.bath_spins)?;
        d.set_item("boron", r.boron)?;
        d.set_item("nitrogen", r.nitrogen)?;
        d.set_item("strongest_hyperfine_mhz", r.strongest_hyperfine_mhz)?;
        d.set_item("sweep_points", r.sweep_points)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Config(field_mt={}, max_order={})", self.inner.point.field_mt, self.inner.point.policy.max_order)
    }
}

/// gCCE result of one point.
#[pyclass(name = "Simulation", module = "hbn_cce_py", get_all)]
struct Simulation {
    times: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
    /// Magnitudes of the per-order factors, orders 1, 2, ...
    per_order_abs: Vec<Vec<f64>>,
    /// None when no decay was resolved on the grid.
    t2_us: Option<f64>,
    stretch_n: Option<f64>,
    degraded_fraction: f64,
    clusters_by_order: Vec<usize>,
    raw_l0: f64,
}

#[pymethods]
impl Simulation {
    fn abs(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Simulation(points={}, t2_us={:?})", self.times.len(), self.t2_us)
    }
}

/// Simulates the base point of `config`.
#[pyfunction]
fn simulate(py: Python<'_>, config: PyRef<'_, Config>) -> PyResult<Simulation> {
    let cfg = config.inner.clone();
    let o = py.detach(move || cfg.scenario().and_then(|s| simulate_point(&s, false))).map_err(to_py)?;
    let r = &o.result;
    let fitted = match &o.fit {
        DecayFit::Fitted(f) => Some(*f),
        DecayFit::NoDecayResolved { .. } => None,
    };
    Ok(Simulation {
        times: r.total.times.clone(),
        re: r.total.values.iter().map(|v| v.re).collect(),
        im: r.total.values.iter().map(|v| v.im).collect(),
        per_order_abs: r.per_order.iter().map(|c| c.magnitudes()).collect(),
        t2_us: fitted.map(|f| f.t2_us),
        stretch_n: fitted.map(|f| f.stretch_n),
        degraded_fraction: r.degraded_fraction,
        clusters_by_order: r.census.orders.iter().map(|o| o.kept + o.added_for_closure).collect(),
        raw_l0: r.total.raw_l0_magnitude,
    })
}

/// Per-order comparison of gCCE with exact propagation; returns a dict.
#[pyfunction]
#[pyo3(signature = (config, max_dim = OracleLimit::default().max_dim))]
fn oracle_check<'py>(py: Python<'py>, config: PyRef<'_, Config>, max_dim: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let r = py.detach(move || hbn_cce::runner::oracle_check(&cfg, OracleLimit { max_dim })).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("bath_spins", r.bath_spins)?;
    d.set_item("hilbert_dim", r.hilbert_dim)?;
    d.set_item("max_deviation_by_order", r.max_deviation_by_order)?;
    d.set_item("tolerance", r.tolerance)?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

/// Runs `config` and writes its output files to `output_dir`; returns their
/// paths.
#[pyfunction]
fn run(py: Python<'_>, config: PyRef<'_, Config>, output_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
    let cfg = config.inner.clone();
    py.detach(move || hbn_cce::runner::run_config(&cfg, &output_dir)).map(|s| s.files).map_err(to_py)
}

/// Closed-form first-order echo modulation of one nucleus. Frequencies in
/// MHz, times in μs.
#[pyfunction]
fn eseem_single(twice_spin: u8, larmor_mhz: f64, a_par: f64, a_perp: f64, times: Vec<f64>) -> Vec<f64> {
    eseem_l1(&[EseemParams::new(twice_spin, larmor_mhz, a_par, a_perp)], &times)
}

#[pymodule]
fn hbn_cce_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(eseem_single, m)?)?;
    m.add("CONSTANTS_VERSION", hbn_cce::constants::CONSTANTS_VERSION)?;
    Ok(())
}
