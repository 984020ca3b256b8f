//! Python bindings: models, paths, the local rate, actions, minimization,
//! simulation and tube estimators.
//!
//! Validation failures raise `ValueError`, numerical failures `RuntimeError`
//! and an exceeded enumeration cap `OverflowError`.

use pathldp::io::{path_from_csv, path_to_csv};
use pathldp::legendre::{legendre_transform, log_mgf as core_log_mgf, mgf_grad, mgf_hess};
use pathldp::simulate::{
    exhaustive_tube_probability, make_tilt_schedule, sample_replica, tube_probability_mc, tube_probability_tilted,
    DEFAULT_CAP,
};
use pathldp::verify::{ldp_sweep as core_ldp_sweep, SweepOptions};
use pathldp::{ActionOptions, BallOptions, ChainSpec, Error, LegendreOptions, MinimizeOptions, Mode, ModelConfig};
use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    fn root(e: &Error) -> &Error {
        match e {
            Error::Segment { source, .. } => root(source),
            other => other,
        }
    }
    let msg = e.to_string();
    match root(&e) {
        Error::NoConvergence { .. } | Error::Numerical(_) => PyRuntimeError::new_err(msg),
        Error::CapExceeded { .. } => PyOverflowError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn mode(name: &str) -> PyResult<Mode> {
    name.parse().map_err(to_py)
}

/// A chain specification built from a JSON model config.
#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    spec: ChainSpec,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = ModelConfig::from_json(text).and_then(|c| c.build()).map_err(to_py)?;
        Ok(PyModel { spec })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let spec = ModelConfig::from_path(std::path::Path::new(path))
            .and_then(|c| c.build())
            .map_err(to_py)?;
        Ok(PyModel { spec })
    }

    fn with_epsilon(&self, epsilon: f64) -> PyResult<Self> {
        Ok(PyModel {
            spec: self.spec.with_epsilon(epsilon).map_err(to_py)?,
        })
    }

    fn with_horizon(&self, horizon: f64) -> PyResult<Self> {
        Ok(PyModel {
            spec: self.spec.with_horizon(horizon).map_err(to_py)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.spec.id().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.spec.epsilon()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.spec.horizon()
    }

    #[getter]
    fn phi0(&self) -> Vec<f64> {
        self.spec.phi0().to_vec()
    }

    /// Jump vectors as integer lists.
    #[getter]
    fn jumps(&self) -> Vec<Vec<i64>> {
        let j = self.spec.jumps();
        (0..j.len()).map(|i| j.vector(i).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Model({}, epsilon={}, horizon={})", self.spec.id(), self.spec.epsilon(), self.spec.horizon())
    }
}

/// Piecewise-linear path on a time grid starting at 0.
#[pyclass(name = "Path", frozen, from_py_object)]
#[derive(Clone)]
struct PyPath {
    path: pathldp::Path,
}

#[pymethods]
impl PyPath {
    #[new]
    fn new(times: Vec<f64>, knots: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyPath {
            path: pathldp::Path::new(times, knots).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn straight(start: Vec<f64>, end: Vec<f64>, horizon: f64, segments: usize) -> PyResult<Self> {
        Ok(PyPath {
            path: pathldp::Path::straight(&start, &end, horizon, segments).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyPath {
            path: path_from_csv(text).map_err(to_py)?,
        })
    }

    fn to_csv(&self) -> String {
        path_to_csv(&self.path)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.path.times().to_vec()
    }

    #[getter]
    fn knots(&self) -> Vec<Vec<f64>> {
        self.path.knots()
    }

    fn __call__(&self, t: f64) -> Vec<f64> {
        self.path.eval(t)
    }

    fn __len__(&self) -> usize {
        self.path.n_segments()
    }
}

/// `L*(s, u, v*)` with its dual maximizer and boundary flag.
#[pyfunction]
#[pyo3(signature = (model, s, u, vstar, mode_name = "limit"))]
fn rate<'py>(
    py: Python<'py>,
    model: &PyModel,
    s: f64,
    u: Vec<f64>,
    vstar: Vec<f64>,
    mode_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = legendre_transform(&model.spec, s, &u, &vstar, mode(mode_name)?, &LegendreOptions::default())
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("value", p.value)?;
    d.set_item("dual", p.dual)?;
    d.set_item("flag", p.flag.to_string())?;
    d.set_item("residual", p.residual)?;
    d.set_item("iterations", p.iterations)?;
    Ok(d)
}

/// Log-moment generating function, gradient and row-major Hessian at `v`.
#[pyfunction]
#[pyo3(signature = (model, s, u, v, mode_name = "limit"))]
fn log_mgf(model: &PyModel, s: f64, u: Vec<f64>, v: Vec<f64>, mode_name: &str) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let m = mode(mode_name)?;
    let value = core_log_mgf(&model.spec, s, &u, &v, m);
    let grad = mgf_grad(&model.spec, s, &u, &v, m).map_err(to_py)?;
    let hess = mgf_hess(&model.spec, s, &u, &v, m).map_err(to_py)?;
    Ok((value, grad, hess))
}

#[pyfunction]
#[pyo3(signature = (model, path, mode_name = "limit", refine = false))]
fn action<'py>(
    py: Python<'py>,
    model: &PyModel,
    path: &PyPath,
    mode_name: &str,
    refine: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = ActionOptions {
        mode: mode(mode_name)?,
        refine,
        ..ActionOptions::default()
    };
    let v = pathldp::action(&path.path, &model.spec, &opts).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("value", v.value)?;
    d.set_item("error_bound", v.error_bound)?;
    d.set_item("segments", v.segments)?;
    d.set_item("bisections", v.bisections)?;
    d.set_item("class", pathldp::admissibility(&path.path, &model.spec, 1e-9).label())?;
    Ok(d)
}

/// Returns `(path, value, converged)`.
#[pyfunction]
#[pyo3(signature = (model, start, end, segments, tol = 1e-8, max_iter = 20_000))]
fn minimize_action(
    py: Python<'_>,
    model: &PyModel,
    start: Vec<f64>,
    end: Vec<f64>,
    segments: usize,
    tol: f64,
    max_iter: usize,
) -> PyResult<(PyPath, f64, bool)> {
    let opts = MinimizeOptions {
        tol,
        max_iter,
        ..MinimizeOptions::default()
    };
    let spec = model.spec.clone();
    let m = py
        .detach(move || pathldp::minimize_action(&spec, &start, &end, segments, &opts))
        .map_err(to_py)?;
    Ok((PyPath { path: m.path }, m.action.value, m.converged))
}

/// Returns `(value, argmin or None)`.
#[pyfunction]
#[pyo3(signature = (model, center, rho, closed = true))]
fn ball_infimum(py: Python<'_>, model: &PyModel, center: &PyPath, rho: f64, closed: bool) -> PyResult<(f64, Option<PyPath>)> {
    let opts = BallOptions {
        closed,
        ..BallOptions::default()
    };
    let (spec, c) = (model.spec.clone(), center.path.clone());
    let b = py.detach(move || pathldp::ball_infimum(&spec, &c, rho, &opts)).map_err(to_py)?;
    Ok((b.value, b.path.map(|path| PyPath { path })))
}

/// Positions of one simulated trajectory, one row per step.
#[pyfunction]
#[pyo3(signature = (model, seed, replica = 0))]
fn simulate(model: &PyModel, seed: u64, replica: u64) -> PyResult<Vec<Vec<f64>>> {
    let t = sample_replica(&model.spec, seed, replica).map_err(to_py)?;
    Ok((0..=t.n_steps()).map(|k| t.position(k)).collect())
}

#[pyfunction]
#[pyo3(signature = (model, center, rho, n = 100_000, seed = 0, tilt = None, exhaustive = false, cap = DEFAULT_CAP))]
#[allow(clippy::too_many_arguments)]
fn tube_probability<'py>(
    py: Python<'py>,
    model: &PyModel,
    center: &PyPath,
    rho: f64,
    n: u64,
    seed: u64,
    tilt: Option<PyPath>,
    exhaustive: bool,
    cap: u128,
) -> PyResult<Bound<'py, PyDict>> {
    let (spec, c) = (model.spec.clone(), center.path.clone());
    let est = py
        .detach(move || {
            if exhaustive {
                exhaustive_tube_probability(&spec, &c, rho, cap)
            } else if let Some(reference) = tilt {
                let schedule = make_tilt_schedule(&spec, &reference.path)?;
                tube_probability_tilted(&spec, &c, rho, &schedule, n, seed)
            } else {
                tube_probability_mc(&spec, &c, rho, n, seed)
            }
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("estimator", est.estimator.to_string())?;
    d.set_item("p_hat", est.p_hat)?;
    d.set_item("std_error", est.std_error)?;
    d.set_item("ci", est.ci)?;
    d.set_item("ess", est.ess())?;
    d.set_item("n", est.n_samples)?;
    Ok(d)
}

/// One dict per epsilon with `epsilon`, `p_hat`, `neg_eps_log_p`, `i_ball`, `gap`.
#[pyfunction]
#[pyo3(signature = (model, epsilons, center, rho, budget = 100_000, seed = 0))]
fn ldp_sweep<'py>(
    py: Python<'py>,
    model: &PyModel,
    epsilons: Vec<f64>,
    center: &PyPath,
    rho: f64,
    budget: u64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let (spec, c) = (model.spec.clone(), center.path.clone());
    let report = py
        .detach(move || core_ldp_sweep(&spec, &epsilons, &c, rho, budget, seed, &SweepOptions::default()))
        .map_err(to_py)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epsilon", r.epsilon)?;
            d.set_item("estimator", r.estimate.estimator.to_string())?;
            d.set_item("p_hat", r.estimate.p_hat)?;
            d.set_item("neg_eps_log_p", r.neg_eps_log_p)?;
            d.set_item("i_ball", r.i_ball)?;
            d.set_item("gap", r.gap)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pathldp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyPath>()?;
    m.add_function(wrap_pyfunction!(rate, m)?)?;
    m.add_function(wrap_pyfunction!(log_mgf, m)?)?;
    m.add_function(wrap_pyfunction!(action, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_action, m)?)?;
    m.add_function(wrap_pyfunction!(ball_infimum, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(tube_probability, m)?)?;
    m.add_function(wrap_pyfunction!(ldp_sweep, m)?)?;
    Ok(())
}
