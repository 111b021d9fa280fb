//! Python bindings: instances, transforms, the selection agent and episodes.

use std::path::PathBuf;

use lhcc_core::agent::Agent as CoreAgent;
use lhcc_core::assembly::{appendix_suite, export_instance, import_instance, InstanceConfig, ProblemInstance};
use lhcc_core::bench::{apply_asy, apply_lambda, apply_osz, BasicFunction};
use lhcc_core::decomp::{differential_grouping_decompose, ground_truth_decompose, GroupingConfig};
use lhcc_core::features::{state_len, StateVector};
use lhcc_core::pool::PoolConfig;
use lhcc_core::runner::{self, EpisodeConfig, SelectionMode, Selector};
use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: lhcc_core::Error) -> PyErr {
    match e {
        lhcc_core::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => PyFileNotFoundError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A composite large-scale benchmark instance.
#[pyclass(module = "lhcc")]
pub struct Instance {
    inner: ProblemInstance,
}

#[pymethods]
impl Instance {
    /// Assemble from subproblem dims, function ids (1..7), separability degree and seed.
    #[new]
    #[pyo3(signature = (dims, functions, degree = 1, seed = 1))]
    fn new(dims: Vec<usize>, functions: Vec<u8>, degree: u8, seed: u64) -> PyResult<Self> {
        let functions = functions
            .into_iter()
            .map(BasicFunction::try_from)
            .collect::<lhcc_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        let inner = ProblemInstance::build(InstanceConfig::new(dims, functions, degree, seed)).map_err(py_err)?;
        Ok(Instance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Instance {
            inner: import_instance(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        export_instance(&self.inner)
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_subproblems(&self) -> usize {
        self.inner.num_subproblems()
    }

    #[getter]
    fn x_opt(&self) -> Vec<f64> {
        self.inner.x_opt().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }

    #[getter]
    fn fe_count(&self) -> u64 {
        self.inner.fe_count()
    }

    fn reset_counters(&self) {
        self.inner.reset_counters();
    }

    /// Variable groups, either the true ones or detected by differential grouping.
    #[pyo3(signature = (detected = false))]
    fn groups(&self, detected: bool) -> PyResult<Vec<Vec<usize>>> {
        let dec = match detected {
            false => ground_truth_decompose(&self.inner),
            true => differential_grouping_decompose(&self.inner, &GroupingConfig::default()).map_err(py_err)?,
        };
        Ok(dec.groups)
    }

    fn __repr__(&self) -> String {
        format!("Instance(dim={}, subproblems={})", self.inner.dim(), self.inner.num_subproblems())
    }
}

/// The 18 named suite instances as `(name, Instance)` pairs.
#[pyfunction]
#[pyo3(signature = (seed = 1, scale = 1))]
fn suite(seed: u64, scale: usize) -> PyResult<Vec<(String, Instance)>> {
    appendix_suite(seed, scale)
        .map_err(py_err)?
        .into_iter()
        .map(|named| {
            let inner = ProblemInstance::build(named.config).map_err(py_err)?;
            Ok((named.name, Instance { inner }))
        })
        .collect()
}

#[pyfunction]
fn t_osz(z: Vec<f64>) -> PyResult<Vec<f64>> {
    apply_osz(&z).map_err(py_err)
}

#[pyfunction]
fn t_asy(z: Vec<f64>, beta: f64) -> PyResult<Vec<f64>> {
    apply_asy(&z, beta).map_err(py_err)
}

#[pyfunction]
fn t_lambda(z: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    apply_lambda(&z, alpha).map_err(py_err)
}

#[pyfunction]
fn compute_reward(c_prev: f64, c_now: f64, c0: f64) -> f64 {
    runner::compute_reward(c_prev, c_now, c0)
}

/// The actor-critic selection policy.
#[pyclass(module = "lhcc")]
pub struct Agent {
    inner: CoreAgent,
}

#[pymethods]
impl Agent {
    #[new]
    #[pyo3(signature = (pool_size = 4, high_tier = 2, seed = 0))]
    fn new(pool_size: usize, high_tier: usize, seed: u64) -> PyResult<Self> {
        let inner = CoreAgent::new(state_len(pool_size), pool_size, high_tier, seed).map_err(py_err)?;
        Ok(Agent { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Agent {
            inner: CoreAgent::load(&path, None).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn pool_size(&self) -> usize {
        self.inner.pool_size()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        state_len(self.inner.pool_size())
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().len()
    }

    /// Action probabilities and value estimate for one state vector.
    fn forward(&self, state: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let out = self.inner.forward(&StateVector::from_vec(state)).map_err(py_err)?;
        Ok((out.policy, out.value))
    }
}

/// Run one episode and return its outcome as a dict.
#[pyfunction]
#[pyo3(signature = (instance, mode = "random", seed = 1, max_fes = 100_000, step_fes = 2500, agent = None, pool = None, detected = false))]
#[allow(clippy::too_many_arguments)]
fn run_episode<'py>(
    py: Python<'py>,
    instance: &Instance,
    mode: &str,
    seed: u64,
    max_fes: u64,
    step_fes: u64,
    agent: Option<&Agent>,
    pool: Option<&str>,
    detected: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: SelectionMode = mode.parse().map_err(py_err)?;
    let pool = match pool {
        Some(spec) => PoolConfig::parse(spec).map_err(py_err)?,
        None => PoolConfig::default(),
    };
    let dec = match detected {
        false => ground_truth_decompose(&instance.inner),
        true => differential_grouping_decompose(&instance.inner, &GroupingConfig::default()).map_err(py_err)?,
    };
    let selector = Selector::new(mode, agent.map(|a| &a.inner), &pool).map_err(py_err)?;
    let config = EpisodeConfig {
        max_fes,
        step_fes,
        ..Default::default()
    };
    let out = runner::run_episode(&instance.inner, &dec, &pool, &selector, &config, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("best_cost", out.best_cost)?;
    d.set_item("initial_cost", out.initial_cost)?;
    d.set_item("best_solution", out.best_solution)?;
    d.set_item("fes", out.ledger.counted)?;
    d.set_item("ledger_ok", out.ledger.reconciles())?;
    d.set_item("actions", out.trace.iter().map(|r| r.action).collect::<Vec<_>>())?;
    d.set_item("rewards", out.trace.iter().map(|r| r.reward).collect::<Vec<_>>())?;
    d.set_item("costs", out.trace.iter().map(|r| r.best_cost).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn lhcc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Agent>()?;
    m.add_function(wrap_pyfunction!(suite, m)?)?;
    m.add_function(wrap_pyfunction!(t_osz, m)?)?;
    m.add_function(wrap_pyfunction!(t_asy, m)?)?;
    m.add_function(wrap_pyfunction!(t_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(compute_reward, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    Ok(())
}
