//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use msopinf::experiment::{ExperimentConfig, Pipeline};
use msopinf::fom::simulate_fom_with;
use msopinf::opinf::{self, OpInfProblem, TrainConfig};
use msopinf::Error;

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_matrix(rows: Rows) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Experiment configuration (JSON-backed).
#[pyclass(name = "ExperimentConfig")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::preset(name).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model.name.name()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.output_dir.display().to_string()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: String) {
        self.inner.output_dir = PathBuf::from(dir);
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!("ExperimentConfig(name={:?}, model={}, r={})", self.inner.name, self.inner.model.name, self.inner.r)
    }
}

/// End-to-end experiment runner.
#[pyclass(name = "Pipeline")]
struct PyPipeline {
    inner: Pipeline,
}

#[pymethods]
impl PyPipeline {
    /// Without `output_dir` the config's directory (or `MSOPINF_OUT`) is used.
    #[new]
    #[pyo3(signature = (config, output_dir=None))]
    fn new(config: &PyConfig, output_dir: Option<String>) -> Self {
        let cfg = config.inner.clone();
        let inner = match output_dir {
            Some(d) => Pipeline::with_output_dir(cfg, PathBuf::from(d)),
            None => Pipeline::new(cfg),
        };
        PyPipeline { inner }
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.out.display().to_string()
    }

    /// Runs every stage and returns the manifest as JSON.
    fn run(&mut self) -> PyResult<String> {
        let m = self.inner.run().map_err(py_err)?;
        serde_json::to_string_pretty(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Operator-inference least-squares problem over skew-symmetric operators.
#[pyclass(name = "OpInfProblem")]
struct PyProblem {
    inner: OpInfProblem,
}

impl PyProblem {
    fn check_len(&self, theta: &[f64]) -> PyResult<()> {
        if theta.len() != self.inner.n_params() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.inner.n_params(),
                theta.len()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn wave(ut: Rows, dt: f64, c: f64) -> PyResult<Self> {
        let inner = OpInfProblem::wave(&to_matrix(ut)?, dt, c).map_err(py_err)?;
        Ok(PyProblem { inner })
    }

    #[staticmethod]
    fn kdv(ut: Rows, q: Rows, dt: f64, eta: f64, gamma: f64) -> PyResult<Self> {
        let inner = OpInfProblem::kdv(&to_matrix(ut)?, &to_matrix(q)?, dt, eta, gamma).map_err(py_err)?;
        Ok(PyProblem { inner })
    }

    #[staticmethod]
    fn zk(ut: Rows, q: Rows, dt: f64) -> PyResult<Self> {
        let inner = OpInfProblem::zk(&to_matrix(ut)?, &to_matrix(q)?, dt).map_err(py_err)?;
        Ok(PyProblem { inner })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    fn loss(&self, theta: Vec<f64>) -> PyResult<f64> {
        self.check_len(&theta)?;
        Ok(self.inner.loss(&theta))
    }

    fn loss_and_grad(&self, theta: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        self.check_len(&theta)?;
        Ok(self.inner.loss_and_grad(&theta))
    }

    fn residual(&self, theta: Vec<f64>) -> PyResult<Rows> {
        self.check_len(&theta)?;
        Ok(to_rows(&self.inner.residual(&theta)))
    }

    /// `(Dx, Dy)`; `Dy` is `None` for 1D models.
    fn operators(&self, theta: Vec<f64>) -> PyResult<(Rows, Option<Rows>)> {
        self.check_len(&theta)?;
        let (dx, dy) = self.inner.operators(&theta);
        Ok((to_rows(&dx), dy.as_ref().map(to_rows)))
    }

    /// Trains with the given settings (JSON object, defaults when omitted).
    /// Returns `(theta, best_loss, loss_history)`.
    #[pyo3(signature = (train_json=None))]
    fn train(&self, train_json: Option<&str>) -> PyResult<(Vec<f64>, f64, Vec<f64>)> {
        let cfg: TrainConfig = match train_json {
            Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => TrainConfig::default(),
        };
        let out = opinf::train_params(&self.inner, &cfg).map_err(py_err)?;
        Ok((out.theta, out.best_loss, out.loss_history))
    }
}

/// Skew matrix from its strict upper triangle (row-major).
#[pyfunction]
fn skew(theta: Vec<f64>, r: usize) -> PyResult<Rows> {
    if theta.len() != opinf::param_len(r) {
        return Err(PyValueError::new_err(format!(
            "r={r} needs {} parameters, got {}",
            opinf::param_len(r),
            theta.len()
        )));
    }
    Ok(to_rows(&opinf::skew(&theta, r)))
}

#[pyfunction]
fn unskew(d: Rows) -> PyResult<Vec<f64>> {
    let m = to_matrix(d)?;
    if !m.is_square() {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(opinf::unskew(&m))
}

/// Leading `r` POD modes of `z`: `(V, sigma)`.
#[pyfunction]
#[pyo3(signature = (z, r, d=1))]
fn compute_pod(z: Rows, r: usize, d: usize) -> PyResult<(Rows, Vec<f64>)> {
    let b = msopinf::pod::compute_pod(&to_matrix(z)?, r, d).map_err(py_err)?;
    Ok((to_rows(&b.v), b.sigma))
}

/// Full-order snapshots `N × N_t` over `[0, t_eval]`.
#[pyfunction]
fn simulate_fom(config: &PyConfig) -> PyResult<Rows> {
    let c = &config.inner;
    let ic = c.initial_condition.sample(&c.grid).map_err(py_err)?;
    let s = simulate_fom_with(&c.ms_model(), &c.grid, &ic, c.dt, c.t_eval, c.zk_solver).map_err(py_err)?;
    Ok(to_rows(&s.u))
}

#[pymodule]
fn msopinf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(skew, m)?)?;
    m.add_function(wrap_pyfunction!(unskew, m)?)?;
    m.add_function(wrap_pyfunction!(compute_pod, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_fom, m)?)?;
    Ok(())
}
