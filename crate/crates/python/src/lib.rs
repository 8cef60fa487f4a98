//! Python bindings for the optimal-learning solver, simulator and checks.

use optlearn::grid::{Action, FieldSpace, Grid, PolicyField, ValueField};
use optlearn::operator::{hjb_operator, log_value_operator, Jet, SymMatrix};
use optlearn::simulator::{estimate_value_mc, ConstantPolicy, Policy, SimOptions};
use optlearn::solver::{extract_policy, lipschitz_estimate, solve_value, Init, SolveOptions};
use optlearn::verify::{comparison_experiment, ComparisonOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py_err(err: optlearn::Error) -> PyErr {
    let message = format!("{}: {err}", err.code());
    match err {
        optlearn::Error::NoConvergence { .. } => PyRuntimeError::new_err(message),
        _ => PyValueError::new_err(message),
    }
}

fn to_py_obj<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "ProblemSpec", frozen)]
struct PyProblemSpec {
    inner: optlearn::ProblemSpec,
}

#[pymethods]
impl PyProblemSpec {
    #[new]
    #[pyo3(signature = (pi_low, pi_high, pi0, sigma, cost, shift=None))]
    fn new(
        pi_low: Vec<f64>,
        pi_high: Vec<f64>,
        pi0: f64,
        sigma: Vec<f64>,
        cost: Vec<f64>,
        shift: Option<f64>,
    ) -> PyResult<Self> {
        optlearn::ProblemSpec::new(pi_low, pi_high, pi0, sigma, cost, shift)
            .map(|inner| PyProblemSpec { inner })
            .map_err(|v| PyValueError::new_err(format!("{}: {v}", v.code())))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn shift(&self) -> f64 {
        self.inner.shift
    }

    #[getter]
    fn pi0(&self) -> f64 {
        self.inner.pi0
    }

    fn obstacle(&self, x: Vec<f64>) -> f64 {
        self.inner.obstacle(&x)
    }

    fn to_u(&self, v: f64) -> PyResult<f64> {
        self.inner.to_u(v).map_err(to_py_err)
    }

    #[allow(clippy::wrong_self_convention)]
    fn from_u(&self, u: f64) -> f64 {
        self.inner.from_u(u)
    }

    /// Operator value at a jet with diagonal Hessian; `form` is "hjb" or "log".
    #[pyo3(signature = (x, r, p, hessian_diag, form="hjb"))]
    fn operator(
        &self,
        x: Vec<f64>,
        r: f64,
        p: Vec<f64>,
        hessian_diag: Vec<f64>,
        form: &str,
    ) -> PyResult<f64> {
        let jet = Jet::new(x, r, p, SymMatrix::from_diag(&hessian_diag)).map_err(to_py_err)?;
        let unit = self.inner.unit_diffusion();
        match form {
            "hjb" => Ok(hjb_operator(&unit, &jet).value),
            "log" => Ok(log_value_operator(&unit, &jet).value),
            other => Err(PyValueError::new_err(format!(
                "unknown operator form `{other}`"
            ))),
        }
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "ProblemSpec(pi_low={:?}, pi_high={:?}, pi0={}, sigma={:?}, cost={:?}, shift={})",
            s.pi_low, s.pi_high, s.pi0, s.sigma, s.cost, s.shift
        )
    }
}

#[pyclass(name = "ValueField", frozen)]
struct PyValueField {
    inner: ValueField,
}

#[pymethods]
impl PyValueField {
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.grid.shape().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.grid.points().collect()
    }

    fn interpolate(&self, x: Vec<f64>) -> f64 {
        self.inner.interpolate(&x)
    }

    fn lipschitz(&self) -> f64 {
        lipschitz_estimate(&self.inner)
    }

    fn sup_distance(&self, other: &PyValueField) -> f64 {
        self.inner.sup_distance(&other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.values.len()
    }
}

#[pyclass(name = "PolicyField", frozen)]
struct PyPolicyField {
    inner: PolicyField,
}

#[pymethods]
impl PyPolicyField {
    /// Action codes per node: 0 stop, `i` learn alternative `i` (1-based).
    #[getter]
    fn codes(&self) -> Vec<usize> {
        self.inner.actions.iter().map(|a| a.code()).collect()
    }

    fn action_at(&self, x: Vec<f64>) -> usize {
        self.inner.action_at(&x).code()
    }

    fn stop_fraction(&self) -> f64 {
        self.inner.stop_fraction()
    }
}

fn init_from(tag: &str) -> PyResult<Init> {
    match tag {
        "obstacle" => Ok(Init::FromObstacle),
        "upper" => Ok(Init::FromUpper),
        other => Err(PyValueError::new_err(format!(
            "init must be obstacle|upper, got `{other}`"
        ))),
    }
}

/// Solves the value equation on a grid with `n` nodes per axis.
#[pyfunction]
#[pyo3(signature = (spec, n, init="obstacle", tol=None, max_iters=None))]
fn solve<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    n: Vec<usize>,
    init: &str,
    tol: Option<f64>,
    max_iters: Option<usize>,
) -> PyResult<(PyValueField, Bound<'py, PyAny>)> {
    let grid = Grid::new(&n).map_err(to_py_err)?;
    let defaults = SolveOptions::default_for(grid.dim());
    let opts = SolveOptions {
        tol: tol.unwrap_or(defaults.tol),
        max_iters: max_iters.unwrap_or(defaults.max_iters),
    };
    let init = init_from(init)?;
    let spec = spec.inner.clone();
    let (field, report) = py
        .detach(|| solve_value(&spec, &grid, init, &opts))
        .map_err(to_py_err)?;
    let report = to_py_obj(py, &report)?;
    Ok((PyValueField { inner: field }, report))
}

#[pyfunction]
#[pyo3(name = "extract_policy", signature = (spec, field, contact_tol=1e-5))]
fn py_extract_policy(
    spec: &PyProblemSpec,
    field: &PyValueField,
    contact_tol: f64,
) -> PyResult<PyPolicyField> {
    extract_policy(&spec.inner, &field.inner, contact_tol)
        .map(|inner| PyPolicyField { inner })
        .map_err(to_py_err)
}

/// Monte-Carlo payoff from `x0` under `policy` (a PolicyField, or None to stop at once).
#[pyfunction]
#[pyo3(signature = (spec, policy, x0, paths=10_000, seed=0, dt=None, t_max=None))]
#[allow(clippy::too_many_arguments)]
fn estimate_value<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    policy: Option<&PyPolicyField>,
    x0: Vec<f64>,
    paths: usize,
    seed: u64,
    dt: Option<f64>,
    t_max: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let defaults = SimOptions::default_for(&spec.inner);
    let opts = SimOptions {
        dt: dt.unwrap_or(defaults.dt),
        t_max: t_max.unwrap_or(defaults.t_max),
    };
    let stop = ConstantPolicy(Action::Stop);
    let policy: &dyn Policy = match policy {
        Some(p) => &p.inner,
        None => &stop,
    };
    let spec = &spec.inner;
    let (estimate, _) = py
        .detach(|| estimate_value_mc(spec, policy, &x0, paths, &opts, seed))
        .map_err(to_py_err)?;
    to_py_obj(py, &estimate)
}

/// Two-sided solve with ordering checks; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (spec, n, tol=None))]
fn comparison<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    n: Vec<usize>,
    tol: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = Grid::new(&n).map_err(to_py_err)?;
    let mut opts = SolveOptions::default_for(grid.dim());
    if let Some(t) = tol {
        opts.tol = t;
    }
    let spec = &spec.inner;
    let (report, _, _) = py
        .detach(|| comparison_experiment(spec, &grid, &ComparisonOptions::new(opts)))
        .map_err(to_py_err)?;
    Ok(to_py_obj(py, &report)?.cast_into::<PyDict>()?)
}

/// Builds a value-space field from node values in row-major order.
#[pyfunction]
fn value_field(n: Vec<usize>, values: Vec<f64>) -> PyResult<PyValueField> {
    let grid = Grid::new(&n).map_err(to_py_err)?;
    ValueField::new(grid, values, FieldSpace::Value)
        .map(|inner| PyValueField { inner })
        .map_err(to_py_err)
}

#[pymodule]
fn optlearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblemSpec>()?;
    m.add_class::<PyValueField>()?;
    m.add_class::<PyPolicyField>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(py_extract_policy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_value, m)?)?;
    m.add_function(wrap_pyfunction!(comparison, m)?)?;
    m.add_function(wrap_pyfunction!(value_field, m)?)?;
    Ok(())
}
