//! Python bindings. Structured results come back as plain dicts built from
//! the library's serialized reports.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use qplane::distortion as dist;
use qplane::eta::{estimate_lambda, trace_mesh, ProfileSpec, SolverOptions};
use qplane::report::{ExperimentConfig, SCHEMA_ID};
use qplane::{build_sphere_mesh, MarkOptions, Point, Sphere, Vec3};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A built-in quasiconformal map, from a registry spec such as
/// `"radial_stretch:alpha=2"`.
#[pyclass(name = "QcMap", module = "qplane_py", frozen)]
struct PyQcMap {
    inner: qplane::QcMap,
}

impl PyQcMap {
    fn point(&self, x: Vec<f64>) -> PyResult<Point> {
        if x.len() != self.inner.dim() {
            return Err(err(format!("expected {} coordinates, got {}", self.inner.dim(), x.len())));
        }
        Ok(Point::from_vec(x))
    }
}

#[pymethods]
impl PyQcMap {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: qplane::QcMap::parse(spec).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.eval(&self.point(x)?).iter().copied().collect())
    }

    /// Row-major Jacobian, or None on the singular set.
    fn jacobian(&self, x: Vec<f64>) -> PyResult<Option<Vec<Vec<f64>>>> {
        let j = self.inner.jacobian(&self.point(x)?);
        Ok(j.map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect()))
    }

    fn declared_ko(&self) -> Option<f64> {
        self.inner.declared_ko()
    }

    fn declared_ki(&self) -> Option<f64> {
        self.inner.declared_ki()
    }

    fn declared_k(&self) -> Option<f64> {
        self.inner.declared_k()
    }

    #[pyo3(signature = (k = 1))]
    fn base_point(&self, k: usize) -> Option<Vec<f64>> {
        self.inner.base_point(k).map(|p| p.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("QcMap({:?})", self.inner.label())
    }
}

#[pyfunction]
fn dstar(k: f64) -> PyResult<f64> {
    dist::dstar(k).map_err(err)
}

#[pyfunction]
fn beta(n: usize, k: f64) -> PyResult<f64> {
    dist::beta(n, k).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, k, r, big_r))]
fn log_main_bound(n: usize, k: f64, r: f64, big_r: f64) -> PyResult<f64> {
    dist::log_main_bound(n, k, r, big_r).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, r, big_r))]
fn capacity_round_ring(n: usize, r: f64, big_r: f64) -> PyResult<f64> {
    dist::capacity_round_ring(n, r, big_r).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, r, big_r, nodes = 16))]
fn capacity_energy_check(n: usize, r: f64, big_r: f64, nodes: usize) -> PyResult<f64> {
    dist::capacity_energy_check(n, r, big_r, nodes).map_err(err)
}

/// First p-Rayleigh quotient on a unit-sphere cap of angular radius `theta`.
#[pyfunction]
#[pyo3(signature = (theta, level = 5, p = 2.0))]
fn lambda_cap<'py>(py: Python<'py>, theta: f64, level: u32, p: f64) -> PyResult<Bound<'py, PyAny>> {
    let est = py
        .detach(|| {
            let mesh =
                build_sphere_mesh(&Sphere::unit(), level)?.mark_cap(&Vec3::x(), theta, &MarkOptions::default())?;
            estimate_lambda(&mesh, p, &SolverOptions::default())
        })
        .map_err(err)?;
    to_py(py, &est)
}

/// First p-Rayleigh quotient on `S(a, tau)` minus the tube around the trace.
#[pyfunction]
#[pyo3(signature = (map, tau, center = None, k = 1, level = 5, tube_radius = 0.05, p = 3.0))]
#[allow(clippy::too_many_arguments)]
fn lambda_trace<'py>(
    py: Python<'py>,
    map: &PyQcMap,
    tau: f64,
    center: Option<Vec<f64>>,
    k: usize,
    level: u32,
    tube_radius: f64,
    p: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = &map.inner;
    let a = match center {
        Some(c) => map.point(c)?,
        None => f.base_point(k).ok_or_else(|| err("no point on the quasiplane near the origin"))?,
    };
    let spec = ProfileSpec { k, mesh_level: level, tube_radius, p, conform: true };
    let est =
        py.detach(|| estimate_lambda(&trace_mesh(f, &a, tau, &spec)?, p, &SolverOptions::default())).map_err(err)?;
    to_py(py, &est)
}

/// The full inequality chain for an experiment config given as JSON or
/// flat `key = value` text. Nothing is written to disk.
#[pyfunction]
fn verify_main<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let f = cfg.build_map().map_err(err)?;
    let a = cfg.center_point(&f).map_err(err)?;
    let rep =
        py.detach(|| dist::verify_main_inequality(&f, &a, cfg.r, cfg.big_r, &cfg.verify_options())).map_err(err)?;
    to_py(py, &rep)
}

/// Run an experiment config and write its run directory; returns the
/// manifest plus the directory path.
#[pyfunction]
fn run_verify<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let out = py.detach(|| qplane::report::run_verify(&cfg)).map_err(err)?;
    let dict = to_py(py, &out.manifest)?;
    dict.set_item("dir", out.dir.display().to_string())?;
    dict.set_item("pass", out.report.pass)?;
    Ok(dict)
}

#[pyfunction]
#[pyo3(signature = (n, k, trials = 1000, seed = 7))]
fn property_suite<'py>(py: Python<'py>, n: usize, k: usize, trials: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let s = py.detach(|| qplane::inequalities::run_property_suite(n, k, trials, seed)).map_err(err)?;
    to_py(py, &s)
}

#[pymodule]
pub fn qplane_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SCHEMA_ID", SCHEMA_ID)?;
    m.add_class::<PyQcMap>()?;
    m.add_function(wrap_pyfunction!(dstar, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(log_main_bound, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_round_ring, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_energy_check, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_cap, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_trace, m)?)?;
    m.add_function(wrap_pyfunction!(verify_main, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(property_suite, m)?)?;
    Ok(())
}
