//! Python bindings: `import howard_lsc`.
//!
//! Models are opaque `Model` objects built from JSON text, a file or one of
//! the benchmark generators. Grid functions and policies cross the boundary
//! as Python lists; traces and reports come back as dicts.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use howard_lsc::bench::{self, InventoryParams, QueueingParams};
use howard_lsc::lyapunov::{certify_growth, value_bound, w_dist};
use howard_lsc::operators::{apply_tf, bellman_t, evaluate_policy, EvalMethod, DEFAULT_EVAL_TOL};
use howard_lsc::solvers::{
    self, BestOptions, PiOptions, DEFAULT_EPSILON, DEFAULT_PI_MAX_ITER, DEFAULT_TOL, DEFAULT_VI_MAX_ITER,
};
use howard_lsc::{envelope, format, montecarlo, Error, ModelSpec, Policy};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::NonConvergence { .. } | Error::SingularSystem => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips a serde value through JSON into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn check_len(m: &ModelSpec, u: &[f64]) -> PyResult<()> {
    if u.len() == m.n_nodes() {
        Ok(())
    } else {
        Err(py_err(Error::LengthMismatch {
            expected: m.n_nodes(),
            found: u.len(),
        }))
    }
}

fn parse_method(name: &str) -> PyResult<EvalMethod> {
    match name {
        "direct" => Ok(EvalMethod::Direct),
        "iterative" => Ok(EvalMethod::Iterative),
        "auto" => Ok(EvalMethod::Auto),
        _ => Err(PyValueError::new_err(format!("unknown evaluation method {name:?}"))),
    }
}

/// A validated discounted MDP on a structured grid.
#[pyclass(name = "Model", module = "howard_lsc", frozen)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Parses and validates a model from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = format::model_from_str(text).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    /// Reads a model file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = format::load_model(std::io::BufReader::new(file)).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    fn to_json(&self) -> String {
        format::model_to_string(&self.inner)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn weight(&self) -> Vec<f64> {
        self.inner.weight.clone()
    }

    /// Action ids admissible at each node.
    fn action_ids(&self) -> Vec<Vec<usize>> {
        self.inner.actions.iter().map(|l| l.iter().map(|a| a.id).collect()).collect()
    }

    /// The policy choosing the lowest action id everywhere.
    fn first_policy(&self) -> Vec<usize> {
        self.inner.first_policy().into_inner()
    }

    /// A copy with another discount factor; raises if it is not in (0, 1).
    fn with_alpha(&self, alpha: f64) -> PyResult<Self> {
        let inner = self.inner.with_alpha(alpha);
        let v = inner.validate();
        if v.is_empty() {
            Ok(PyModel { inner })
        } else {
            Err(py_err(Error::Invalid(v)))
        }
    }

    /// `{"M", "beta", "gamma", "pass", "witness_M", "witness_beta"}`.
    fn certify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &certify_growth(&self.inner))
    }

    /// `M / (1 - gamma)`, the W-norm bound on every policy value.
    fn value_bound(&self) -> PyResult<f64> {
        value_bound(&certify_growth(&self.inner)).map_err(py_err)
    }

    /// W-weighted sup distance between two grid functions.
    fn w_dist(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        check_len(&self.inner, &u)?;
        check_len(&self.inner, &v)?;
        Ok(w_dist(&u, &v, &self.inner.weight))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_nodes={}, pairs={}, alpha={})",
            self.inner.n_nodes(),
            self.inner.pair_count(),
            self.inner.alpha
        )
    }
}

/// A smoothed (or standard) policy-iteration run.
#[pyclass(name = "PiTrace", module = "howard_lsc", frozen)]
struct PyPiTrace {
    inner: solvers::PiTrace,
}

#[pymethods]
impl PyPiTrace {
    #[getter]
    fn terminated_by(&self) -> &'static str {
        self.inner.terminated_by.as_str()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn final_value(&self) -> Vec<f64> {
        self.inner.final_value().0.clone()
    }

    #[getter]
    fn final_policy(&self) -> Vec<usize> {
        self.inner.final_policy().0.clone()
    }

    /// `v_n` for every record.
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.records.iter().map(|r| r.v.0.clone()).collect()
    }

    fn chain_ok(&self) -> bool {
        self.inner.records.iter().all(|r| r.chain_ok)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    /// Errors and rate ratios against an oracle `V*` accurate to `oracle_tol`.
    #[pyo3(signature = (model, v_star, oracle_tol=1e-11, lambdas=Vec::new()))]
    fn rate_report<'py>(
        &self,
        py: Python<'py>,
        model: &PyModel,
        v_star: Vec<f64>,
        oracle_tol: f64,
        lambdas: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        check_len(&model.inner, &v_star)?;
        if self.inner.records[0].v.len() != v_star.len() {
            return Err(PyValueError::new_err("trace and model sizes differ"));
        }
        to_py(py, &solvers::rate_report(&self.inner, &v_star, &model.inner, oracle_tol, &lambdas))
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

fn policy_or_first(m: &ModelSpec, f: Option<Vec<usize>>) -> Policy {
    f.map(Policy).unwrap_or_else(|| m.first_policy())
}

#[pyfunction]
#[pyo3(signature = (n_cells=11, jump=1.0, alpha=0.9))]
fn threshold_model(n_cells: usize, jump: f64, alpha: f64) -> PyResult<PyModel> {
    let inner = bench::make_threshold_model(n_cells, jump, alpha).map_err(py_err)?;
    Ok(PyModel { inner })
}

#[pyfunction]
#[pyo3(signature = (
    capacity=20,
    demand=vec![0.05, 0.4, 0.3, 0.15, 0.1],
    order_cost=1.0,
    holding_cost=0.1,
    shortage_cost=3.0,
    max_order=1,
    alpha=0.9,
))]
fn inventory_model(
    capacity: usize,
    demand: Vec<f64>,
    order_cost: f64,
    holding_cost: f64,
    shortage_cost: f64,
    max_order: usize,
    alpha: f64,
) -> PyResult<PyModel> {
    let inner = bench::make_inventory(&InventoryParams {
        capacity,
        demand_probs: demand,
        order_cost,
        holding_cost,
        shortage_cost,
        max_order,
        alpha,
    })
    .map_err(py_err)?;
    Ok(PyModel { inner })
}

#[pyfunction]
#[pyo3(signature = (buffer=20, arrival=0.05, service=0.3, reject_cost=5.0, hold_cost=1.0, alpha=0.9))]
fn queueing_model(
    buffer: usize,
    arrival: f64,
    service: f64,
    reject_cost: f64,
    hold_cost: f64,
    alpha: f64,
) -> PyResult<PyModel> {
    let inner = bench::make_queueing(&QueueingParams {
        buffer,
        arrival_p: arrival,
        service_p: service,
        reject_cost,
        hold_cost,
        alpha,
    })
    .map_err(py_err)?;
    Ok(PyModel { inner })
}

#[pyfunction]
#[pyo3(signature = (n_states, n_actions, sparsity, alpha=0.9, seed=0))]
fn random_mdp(n_states: usize, n_actions: usize, sparsity: usize, alpha: f64, seed: u64) -> PyResult<PyModel> {
    let inner = bench::make_random_finite_mdp(n_states, n_actions, sparsity, alpha, seed).map_err(py_err)?;
    Ok(PyModel { inner })
}

/// Lower-semicontinuous envelope of `u` on the model's grid.
#[pyfunction]
fn lsc_envelope(model: &PyModel, u: Vec<f64>) -> PyResult<Vec<f64>> {
    check_len(&model.inner, &u)?;
    Ok(envelope::lsc_envelope(&model.inner.grid, &u).0)
}

#[pyfunction]
#[pyo3(signature = (model, u, tol=0.0))]
fn is_grid_lsc(model: &PyModel, u: Vec<f64>, tol: f64) -> PyResult<bool> {
    check_len(&model.inner, &u)?;
    Ok(envelope::is_grid_lsc(&model.inner.grid, &u, tol))
}

/// `(T u, greedy policy)`, ties going to the lowest action id.
#[pyfunction]
fn bellman(model: &PyModel, u: Vec<f64>) -> PyResult<(Vec<f64>, Vec<usize>)> {
    check_len(&model.inner, &u)?;
    let (t, f) = bellman_t(&model.inner, &u);
    Ok((t.0, f.0))
}

/// `T_f u`.
#[pyfunction]
fn apply_policy(model: &PyModel, policy: Vec<usize>, u: Vec<f64>) -> PyResult<Vec<f64>> {
    check_len(&model.inner, &u)?;
    Ok(apply_tf(&model.inner, &Policy(policy), &u).map_err(py_err)?.0)
}

/// `V_f` by `method` in {"direct", "iterative", "auto"}.
#[pyfunction]
#[pyo3(signature = (model, policy, method="auto", tol=DEFAULT_EVAL_TOL))]
fn evaluate(model: &PyModel, policy: Vec<usize>, method: &str, tol: f64) -> PyResult<Vec<f64>> {
    let v = evaluate_policy(&model.inner, &Policy(policy), parse_method(method)?, tol).map_err(py_err)?;
    Ok(v.0)
}

/// `(value, policy, iterations)` of value iteration started at zero.
#[pyfunction]
#[pyo3(signature = (model, tol=DEFAULT_TOL, max_iter=DEFAULT_VI_MAX_ITER))]
fn value_iteration(model: &PyModel, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, Vec<usize>, usize)> {
    let r = solvers::value_iteration_with(&model.inner, tol, max_iter).map_err(py_err)?;
    Ok((r.value.0, r.policy.0, r.iterations))
}

fn pi_options(tol: f64, max_iter: usize, method: &str) -> PyResult<PiOptions> {
    Ok(PiOptions {
        tol,
        max_iter,
        eval: parse_method(method)?,
        ..PiOptions::default()
    })
}

/// Evaluate, smooth by the lsc envelope, improve greedily.
#[pyfunction]
#[pyo3(signature = (model, f0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_PI_MAX_ITER, method="auto"))]
fn smoothed_policy_iteration(
    model: &PyModel,
    f0: Option<Vec<usize>>,
    tol: f64,
    max_iter: usize,
    method: &str,
) -> PyResult<PyPiTrace> {
    let f0 = policy_or_first(&model.inner, f0);
    let (inner, _) = solvers::smoothed_policy_iteration(&model.inner, &f0, &pi_options(tol, max_iter, method)?)
        .map_err(py_err)?;
    Ok(PyPiTrace { inner })
}

/// Howard's policy iteration without smoothing.
#[pyfunction]
#[pyo3(signature = (model, f0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_PI_MAX_ITER, method="auto"))]
fn standard_policy_iteration(
    model: &PyModel,
    f0: Option<Vec<usize>>,
    tol: f64,
    max_iter: usize,
    method: &str,
) -> PyResult<PyPiTrace> {
    let f0 = policy_or_first(&model.inner, f0);
    let (inner, _) = solvers::standard_policy_iteration(&model.inner, &f0, &pi_options(tol, max_iter, method)?)
        .map_err(py_err)?;
    Ok(PyPiTrace { inner })
}

/// Best-improvement variant; returns the trace as a dict.
#[pyfunction]
#[pyo3(signature = (model, f0=None, epsilon=DEFAULT_EPSILON, tol=DEFAULT_TOL, max_iter=DEFAULT_PI_MAX_ITER))]
fn best_improvement_pi<'py>(
    py: Python<'py>,
    model: &PyModel,
    f0: Option<Vec<usize>>,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let f0 = policy_or_first(&model.inner, f0);
    let opts = BestOptions { epsilon, tol, max_iter };
    let (trace, _) = solvers::best_improvement_pi(&model.inner, &f0, &opts).map_err(py_err)?;
    to_py(py, &trace)
}

/// Monte Carlo estimate of `V_f(x0)` as a dict; the horizon defaults to the
/// shortest one with truncation bound at most 1e-3.
#[pyfunction]
#[pyo3(signature = (model, policy, x0, n_traj=10_000, horizon=None, seed=0))]
fn estimate_value<'py>(
    py: Python<'py>,
    model: &PyModel,
    policy: Vec<usize>,
    x0: usize,
    n_traj: usize,
    horizon: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    if x0 >= model.inner.n_nodes() {
        return Err(PyValueError::new_err(format!("x0 = {x0} is not a node")));
    }
    let horizon = match horizon {
        Some(h) => h,
        None => montecarlo::horizon_for(&model.inner, x0, 1e-3).map_err(py_err)?,
    };
    let e = montecarlo::estimate_value(&model.inner, &Policy(policy), x0, n_traj, horizon, seed).map_err(py_err)?;
    to_py(py, &e)
}

#[pymodule]
#[pyo3(name = "howard_lsc")]
fn howard_lsc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyPiTrace>()?;
    m.add_function(wrap_pyfunction!(threshold_model, m)?)?;
    m.add_function(wrap_pyfunction!(inventory_model, m)?)?;
    m.add_function(wrap_pyfunction!(queueing_model, m)?)?;
    m.add_function(wrap_pyfunction!(random_mdp, m)?)?;
    m.add_function(wrap_pyfunction!(lsc_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(is_grid_lsc, m)?)?;
    m.add_function(wrap_pyfunction!(bellman, m)?)?;
    m.add_function(wrap_pyfunction!(apply_policy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_policy_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(standard_policy_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(best_improvement_pi, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_value, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
