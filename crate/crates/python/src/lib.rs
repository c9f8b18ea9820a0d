//! Python bindings for `trustcons`.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trustcons::bounds::{self as tb, BoundReport};
use trustcons::detection;
use trustcons::graph;
use trustcons::harness::{self, ConfigMap, ExperimentConfig, ExperimentSetup, HarnessError, TrialOptions};
use trustcons::trust;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Io(m) => PyIOError::new_err(m),
        HarnessError::Trial { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Merges an optional config file with `key -> value` overrides.
fn load_config(path: Option<&str>, overrides: Option<BTreeMap<String, String>>) -> Result<ExperimentConfig, HarnessError> {
    let mut map = match path {
        Some(p) => ConfigMap::from_file(Path::new(p))?,
        None => ConfigMap::defaults(),
    };
    for (k, v) in overrides.unwrap_or_default() {
        map.set(&k, &v)?;
    }
    Ok(ExperimentConfig::from_map(&map)?)
}

#[pyclass(name = "Topology", module = "pytrustcons", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTopology {
    inner: graph::Topology,
}

#[pymethods]
impl PyTopology {
    #[new]
    fn new(n_legit: usize, n_malicious: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = graph::Topology::new(n_legit, n_malicious, &edges).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Cycle over legitimate agents plus random chords and malicious links.
    #[staticmethod]
    #[pyo3(signature = (seed, n_legit=10, n_malicious=15, extra_legit_edges=10, malicious_edge_prob=0.2))]
    fn generate(seed: u64, n_legit: usize, n_malicious: usize, extra_legit_edges: usize, malicious_edge_prob: f64) -> PyResult<Self> {
        let mut rng = harness::seed::stream_rng(seed, harness::seed::TOPOLOGY, 0);
        let inner = graph::generate_topology(&mut rng, n_legit, n_malicious, extra_legit_edges, malicious_edge_prob)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::Topology::from_edge_list(text).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_legit(&self) -> usize {
        self.inner.n_legit()
    }

    #[getter]
    fn n_malicious(&self) -> usize {
        self.inner.n_malicious()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn neighbors(&self, agent: usize) -> PyResult<Vec<usize>> {
        if agent >= self.inner.n_agents() {
            return Err(value_err(format!("agent {agent} out of range")));
        }
        Ok(self.inner.neighbors(agent).to_vec())
    }

    fn legit_subgraph_connected(&self) -> bool {
        self.inner.legit_subgraph_connected()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(n_legit={}, n_malicious={}, edges={})",
            self.inner.n_legit(),
            self.inner.n_malicious(),
            self.inner.edge_count()
        )
    }
}

#[pyclass(name = "BoundParams", module = "pytrustcons", frozen)]
struct PyBoundParams {
    inner: tb::BoundParams,
}

#[pymethods]
impl PyBoundParams {
    #[new]
    #[pyo3(signature = (xi, gamma, lambda_, n_legit, n_malicious, kappa=10.0, eta=4.0, delta=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn new(xi: f64, gamma: f64, lambda_: f64, n_legit: usize, n_malicious: usize, kappa: f64, eta: f64, delta: f64) -> PyResult<Self> {
        let inner = tb::BoundParams::new(xi, gamma, lambda_, n_legit, n_malicious, kappa, eta, delta).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn t0_min(&self) -> f64 {
        tb::t0_min(&self.inner)
    }

    fn g_l(&self, t0: u64) -> PyResult<f64> {
        tb::g_l(&self.inner, t0).map_err(value_err)
    }

    fn g_m(&self, t0: u64) -> PyResult<f64> {
        tb::g_m(&self.inner, t0).map_err(value_err)
    }

    fn delta_max(&self, t0: u64) -> PyResult<f64> {
        tb::delta_max(&self.inner, t0).map_err(value_err)
    }

    /// Clamped bound for an agent with `(|N^L|, |N^M|)` neighbors.
    fn legit_bound(&self, sizes: (usize, usize), t: u64) -> f64 {
        tb::misclassify_legit_bound(&self.inner, sizes, t).probability()
    }

    /// `(bound, valid)`.
    fn mal_bound(&self, t: u64) -> (f64, bool) {
        let b = tb::misclassify_mal_bound(&self.inner, t);
        (b.probability(), b.valid)
    }

    fn report(&self, t0: u64, sizes: (usize, usize), t_values: Vec<u64>) -> PyResult<String> {
        let r = BoundReport::compute(&self.inner, t0, sizes, &t_values, None).map_err(value_err)?;
        Ok(r.to_string())
    }
}

#[pyclass(name = "TrialResult", module = "pytrustcons", frozen, get_all)]
struct PyTrialResult {
    trial: usize,
    converged: bool,
    final_spread: f64,
    final_deviation: f64,
    final_mean: f64,
    empirical_tf: Option<u64>,
    deviation: Vec<f64>,
    legit_excluded: Vec<usize>,
    malicious_included: Vec<usize>,
    max_row_sum_error: f64,
    decomposition_error: Option<f64>,
}

impl From<harness::TrialResult> for PyTrialResult {
    fn from(r: harness::TrialResult) -> Self {
        Self {
            trial: r.trial,
            converged: r.converged,
            final_spread: r.final_spread,
            final_deviation: r.final_deviation,
            final_mean: r.final_mean,
            empirical_tf: r.empirical_tf,
            legit_excluded: r.misclassified.iter().map(|e| e.legit_excluded).collect(),
            malicious_included: r.misclassified.iter().map(|e| e.malicious_included).collect(),
            deviation: r.deviation,
            max_row_sum_error: r.max_row_sum_error,
            decomposition_error: r.decomposition_error,
        }
    }
}

#[pyclass(name = "BatchSummary", module = "pytrustcons", frozen, get_all)]
struct PyBatchSummary {
    trials: usize,
    convergence_rate: f64,
    mean_final_deviation: f64,
    max_final_spread: f64,
    tf_reached: usize,
    mean_empirical_tf: Option<f64>,
    delta_max: Option<f64>,
    exceedance: Option<f64>,
    mean_deviation: Vec<f64>,
    legit_rate: Vec<f64>,
    mal_rate: Vec<f64>,
}

/// Fixed setup of one experiment: topology, draws, nominal value.
#[pyclass(name = "Experiment", module = "pytrustcons", frozen)]
struct PyExperiment {
    setup: ExperimentSetup,
}

#[pymethods]
impl PyExperiment {
    /// `overrides` maps dotted config keys to string values.
    #[new]
    #[pyo3(signature = (config=None, overrides=None))]
    fn new(config: Option<&str>, overrides: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let cfg = load_config(config, overrides).map_err(harness_err)?;
        let setup = ExperimentSetup::new(cfg).map_err(harness_err)?;
        Ok(Self { setup })
    }

    #[getter]
    fn topology(&self) -> PyTopology {
        PyTopology {
            inner: self.setup.topology.clone(),
        }
    }

    #[getter]
    fn nominal_value(&self) -> f64 {
        self.setup.nominal_value
    }

    #[getter]
    fn nu(&self) -> Vec<f64> {
        self.setup.nominal.nu.iter().copied().collect()
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.setup.x0.clone()
    }

    #[getter]
    fn c_values(&self) -> Vec<f64> {
        self.setup.model.c_values().to_vec()
    }

    #[getter]
    fn effective_lambda(&self) -> f64 {
        self.setup.effective_lambda()
    }

    fn run_trial(&self, trial: usize) -> PyResult<PyTrialResult> {
        harness::run_trial_with(&self.setup, trial, TrialOptions::default())
            .map(Into::into)
            .map_err(harness_err)
    }

    #[pyo3(signature = (jobs=None))]
    fn run_batch(&self, jobs: Option<usize>) -> PyResult<PyBatchSummary> {
        let results = harness::run_batch(&self.setup, jobs).map_err(harness_err)?;
        let delta_max = self
            .setup
            .bound_params()
            .ok()
            .and_then(|p| tb::delta_max(&p, self.setup.config.t0).ok());
        let s = harness::summarize(&results, &self.setup, delta_max);
        Ok(PyBatchSummary {
            trials: s.trials,
            convergence_rate: s.convergence_rate,
            mean_final_deviation: s.mean_final_deviation,
            max_final_spread: s.max_final_spread,
            tf_reached: s.tf_reached,
            mean_empirical_tf: s.mean_empirical_tf,
            delta_max: s.delta_max,
            exceedance: s.exceedance,
            mean_deviation: s.mean_deviation,
            legit_rate: s.legit_rate,
            mal_rate: s.mal_rate,
        })
    }

    fn bounds_report(&self) -> PyResult<String> {
        let p = self.setup.bound_params().map_err(harness_err)?;
        let c = &self.setup.config;
        BoundReport::compute(&p, c.t0, self.setup.largest_neighborhood(), &c.t_values, self.setup.report.lambda_configured)
            .map(|r| r.to_string())
            .map_err(value_err)
    }
}

/// `(holds, report)` for the standing assumptions of a configuration.
#[pyfunction]
#[pyo3(signature = (config=None, overrides=None))]
fn validate(config: Option<&str>, overrides: Option<BTreeMap<String, String>>) -> PyResult<(bool, String)> {
    let cfg = load_config(config, overrides).map_err(harness_err)?;
    let (topology, model) = harness::trial::build_model(&cfg).map_err(harness_err)?;
    let report = graph::check_assumptions(&topology, &model);
    Ok((report.holds(), report.to_string()))
}

#[pyfunction]
fn threshold_at(xi: f64, gamma: f64, t: u64) -> PyResult<f64> {
    Ok(detection::DetectionParams::new(xi, gamma).map_err(value_err)?.threshold_at(t))
}

/// `(trusted, reference)` for one row of aggregate trust values.
#[pyfunction]
fn trusted_neighborhood(neighbors: Vec<usize>, betas: Vec<f64>, xi: f64, gamma: f64, t: u64) -> PyResult<(Vec<usize>, usize)> {
    let params = detection::DetectionParams::new(xi, gamma).map_err(value_err)?;
    let set = detection::trusted_neighborhood(&neighbors, &betas, &params, t).map_err(value_err)?;
    Ok((set.members, set.reference))
}

#[pyfunction]
fn upper_incomplete_gamma(s: f64, q: f64) -> PyResult<f64> {
    tb::upper_incomplete_gamma(s, q).map_err(value_err)
}

#[pyfunction]
fn mixture_expectation(p: f64, c: f64, d: f64) -> f64 {
    trust::mixture_mean(p, c, d)
}

#[pymodule]
fn pytrustcons(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopology>()?;
    m.add_class::<PyBoundParams>()?;
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyTrialResult>()?;
    m.add_class::<PyBatchSummary>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_at, m)?)?;
    m.add_function(wrap_pyfunction!(trusted_neighborhood, m)?)?;
    m.add_function(wrap_pyfunction!(upper_incomplete_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_expectation, m)?)?;
    Ok(())
}
