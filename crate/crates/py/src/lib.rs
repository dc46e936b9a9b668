//! Python bindings. Reports come back as plain dicts built from the same
//! canonical JSON the CLI prints.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use kpa_core::changepoint::{detect, DetectOptions, DEFAULT_C0};
use kpa_core::estimation::{estimate_history, estimate_snapshot, summarize_edge_list, summarize_snapshot};
use kpa_core::io::{canonical_json, read_event_log, write_event_log};
use kpa_core::model::{theta_from_mechanistic as collapse, GroupLabel, MechanisticParams};
use kpa_core::probability::{expected_same_group_rate, fisher_information, power_law_exponent as exponent};
use kpa_core::simulator::{run_trials as run_batch, simulate as run_sim, SimConfig, TrialConfig};
use kpa_core::KpaError;

fn py_err(e: KpaError) -> PyErr {
    let msg = format!("{}: {}", e.code(), e);
    match e {
        KpaError::Io(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = canonical_json(value).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "ModelParams", module = "kpa", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: kpa_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (theta, p, q, n0 = 10))]
    fn new(theta: f64, p: Vec<f64>, q: f64, n0: usize) -> PyResult<Self> {
        let inner = kpa_core::ModelParams::new(theta, p, q, n0).map_err(py_err)?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.inner.p.clone()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn n0(&self) -> usize {
        self.inner.n0
    }

    fn initial_group_sizes(&self) -> Vec<u64> {
        self.inner.initial_group_sizes()
    }

    /// Limit of the same-group edge rate.
    fn same_group_rate(&self) -> f64 {
        expected_same_group_rate(&self.inner)
    }

    /// Information matrix over `(theta, p_1..p_{K-1}, q)` as nested lists.
    fn fisher(&self) -> PyResult<Vec<Vec<f64>>> {
        let f = fisher_information(&self.inner).map_err(py_err)?;
        Ok((0..f.dim()).map(|i| (0..f.dim()).map(|j| f.get(i, j)).collect()).collect())
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ModelParams(theta={}, p={:?}, q={}, n0={})", p.theta, p.p, p.q, p.n0)
    }
}

#[pyclass(name = "EventLog", module = "kpa")]
struct PyEventLog {
    inner: kpa_core::EventLog,
}

#[pymethods]
impl PyEventLog {
    /// Reads `events.csv` and `meta.json` from a run directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEventLog { inner: read_event_log(&path).map_err(py_err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        write_event_log(&dir, &self.inner, None).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    #[getter]
    fn per_group_initial(&self) -> Vec<u64> {
        self.inner.per_group_initial.clone()
    }

    /// `(t, v, g_w, g_u)` tuples.
    fn records(&self) -> Vec<(u64, u8, u32, u32)> {
        self.inner.records.iter().map(|r| (r.t, r.v, r.g_w.get(), r.g_u.get())).collect()
    }

    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        Ok(PyEventLog { inner: self.inner.slice(start, end).map_err(py_err)? })
    }

    #[pyo3(signature = (ci_level = 0.95))]
    fn estimate<'py>(&self, py: Python<'py>, ci_level: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = estimate_history(&self.inner, ci_level).map_err(py_err)?;
        to_dict(py, &report)
    }

    #[pyo3(signature = (c0 = DEFAULT_C0, stride = None, keep_curve = false))]
    fn changepoint<'py>(
        &self,
        py: Python<'py>,
        c0: f64,
        stride: Option<usize>,
        keep_curve: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let features = kpa_core::estimation::features_from_log(&self.inner).map_err(py_err)?;
        let report = py
            .detach(|| detect(&features, &DetectOptions { c0, stride, keep_curve }))
            .map_err(py_err)?;
        to_dict(py, &report)
    }
}

#[pyclass(name = "GraphState", module = "kpa")]
struct PyGraphState {
    inner: kpa_core::GraphState,
}

#[pymethods]
impl PyGraphState {
    #[getter]
    fn time(&self) -> u64 {
        self.inner.time()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn degrees(&self) -> Vec<u64> {
        self.inner.degrees().to_vec()
    }

    #[getter]
    fn groups(&self) -> Vec<u32> {
        self.inner.groups().iter().map(|g| g.get()).collect()
    }

    #[getter]
    fn group_degree_totals(&self) -> Vec<u64> {
        self.inner.group_degree_totals().to_vec()
    }

    /// Recorded edges as `(initiator, target)` node indices.
    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges().to_vec()
    }

    fn degree_histogram(&self, group: u32) -> PyResult<HashMap<u64, u64>> {
        let g = GroupLabel::new(group, self.inner.num_groups()).map_err(py_err)?;
        Ok(self.inner.degree_histogram(g).into_iter().collect())
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.summary())
    }

    fn snapshot_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &summarize_snapshot(&self.inner))
    }

    fn estimate_snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = estimate_snapshot(&summarize_snapshot(&self.inner)).map_err(py_err)?;
        to_dict(py, &report)
    }
}

fn sim_config(horizon: u64, seed: u64, tau: Option<u64>, theta2: Option<f64>) -> PyResult<SimConfig> {
    let cfg = SimConfig::collapsed(horizon, seed);
    match (tau, theta2) {
        (Some(tau), Some(theta2)) => Ok(cfg.with_changepoint(tau, theta2)),
        (None, None) => Ok(cfg),
        _ => Err(PyValueError::new_err("E_CONFIG: tau and theta2 must be given together")),
    }
}

/// Simulates `horizon` steps; returns `(GraphState, EventLog)`.
#[pyfunction]
#[pyo3(signature = (params, horizon, seed, tau = None, theta2 = None))]
fn simulate(
    py: Python<'_>,
    params: &PyModelParams,
    horizon: u64,
    seed: u64,
    tau: Option<u64>,
    theta2: Option<f64>,
) -> PyResult<(PyGraphState, PyEventLog)> {
    let cfg = sim_config(horizon, seed, tau, theta2)?;
    let (state, log) = py.detach(|| run_sim(&params.inner, &cfg)).map_err(py_err)?;
    Ok((PyGraphState { inner: state }, PyEventLog { inner: log }))
}

/// Snapshot estimate from `(a, b)` edges and a node -> group mapping.
#[pyfunction]
fn snapshot_from_edges<'py>(
    py: Python<'py>,
    edges: Vec<(String, String)>,
    labels: HashMap<String, u32>,
) -> PyResult<Bound<'py, PyAny>> {
    let k = labels.values().copied().max().unwrap_or(0) as usize;
    let labels = labels
        .into_iter()
        .map(|(n, g)| GroupLabel::new(g, k).map(|g| (n, g)))
        .collect::<Result<HashMap<_, _>, _>>()
        .map_err(py_err)?;
    let summary =
        summarize_edge_list(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())), &labels, k).map_err(py_err)?;
    let report = estimate_snapshot(&summary).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("summary", to_dict(py, &summary)?)?;
    out.set_item("estimate", to_dict(py, &report)?)?;
    Ok(out.into_any())
}

/// Batch of seeded trials; `seed` is the master seed.
#[pyfunction]
#[pyo3(signature = (params, horizon, trials, seed, jobs = None, detect = false, tau = None, theta2 = None))]
#[allow(clippy::too_many_arguments)]
fn run_trials<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    horizon: u64,
    trials: usize,
    seed: u64,
    jobs: Option<usize>,
    detect: bool,
    tau: Option<u64>,
    theta2: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = TrialConfig::new(params.inner.clone(), sim_config(horizon, seed, tau, theta2)?, trials);
    cfg.jobs = jobs;
    if detect || tau.is_some() {
        cfg.detect = Some(DetectOptions::default());
    }
    let report = py.detach(|| run_batch(&cfg)).map_err(py_err)?;
    to_dict(py, &report)
}

#[pyfunction]
fn theta_from_mechanistic(gamma: f64, alpha: f64) -> PyResult<f64> {
    collapse(MechanisticParams { gamma, alpha }).map_err(py_err)
}

#[pyfunction]
fn power_law_exponent(q: f64) -> PyResult<f64> {
    exponent(q).map_err(py_err)
}

#[pyfunction]
fn selftest<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(kpa_core::selftest::run_selftest);
    to_dict(py, &report)
}

#[pymodule]
fn kpa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyEventLog>()?;
    m.add_class::<PyGraphState>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(snapshot_from_edges, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(theta_from_mechanistic, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
