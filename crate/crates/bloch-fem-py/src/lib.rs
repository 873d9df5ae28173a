//! Python bindings: run configurations, example runs, sweeps, the supercell
//! cross-check, custom solves, mesh generation and the Hankel function.

use fem::config::RunConfig as CoreConfig;
use fem::experiment::{self, ErrorTableRow};
use fem::greens::SourceKind;
use fem::Error;
use numpy::{IntoPyArray, PyArray1, PyArray2};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(bloch_fem, ConfigError, PyValueError);
create_exception!(bloch_fem, SolverError, PyRuntimeError);

type TraceArrays<'py> = (Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<Complex64>>, Option<f64>);
type MeshArrays<'py> = (Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<usize>>);

fn to_py(e: Error) -> PyErr {
    match e.root() {
        Error::Config(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidArgument(_)
        | Error::InsufficientBand { .. }
        | Error::InsufficientPoints { .. } => ConfigError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

/// A run configuration; fields mirror the TOML keys.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
pub struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => CoreConfig::from_toml_str(t).map_err(to_py)?,
            None => CoreConfig::default(),
        };
        Ok(PyRunConfig { inner })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: CoreConfig::from_file(path.as_ref()).map_err(to_py)?,
        })
    }

    /// Configuration of example `id` at `(N, h)` on top of this one.
    fn for_example(&self, id: u8, n: usize, h: f64) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: experiment::example_config(id, n, h, &self.inner).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn echo(&self) -> Vec<(String, String)> {
        self.inner.echo()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }
    #[setter]
    fn set_k(&mut self, v: f64) {
        self.inner.k = v;
    }
    #[getter(N)]
    fn copies(&self) -> usize {
        self.inner.copies
    }
    #[setter(N)]
    fn set_copies(&mut self, v: usize) {
        self.inner.copies = v;
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }
    #[setter]
    fn set_h(&mut self, v: f64) {
        self.inner.h = v;
    }
    #[getter]
    fn index_group(&self) -> String {
        self.inner.index_group.clone()
    }
    #[setter]
    fn set_index_group(&mut self, v: String) {
        self.inner.index_group = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(k={}, N={}, h={}, index_group='{}')",
            self.inner.k, self.inner.copies, self.inner.h, self.inner.index_group
        )
    }
}

fn row_dict<'py>(py: Python<'py>, r: &ErrorTableRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("example", r.example)?;
    d.set_item("N", r.copies)?;
    d.set_item("h", r.h)?;
    d.set_item("relative_error", r.relative_error)?;
    d.set_item("wall_time", r.wall_time)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("warnings", &r.warnings)?;
    Ok(d)
}

fn base_of(config: Option<PyRunConfig>) -> CoreConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// One run of example `id` (1..8); returns the error-table row as a dict.
#[pyfunction]
#[pyo3(signature = (id, n, h, config = None))]
fn run_example<'py>(py: Python<'py>, id: u8, n: usize, h: f64, config: Option<PyRunConfig>) -> PyResult<Bound<'py, PyDict>> {
    let base = base_of(config);
    let row = py
        .detach(|| experiment::run_example(id, n, h, &base, None))
        .map_err(to_py)?;
    row_dict(py, &row)
}

/// Sweep over `n_list × h_list`; returns rows and fitted rates.
#[pyfunction]
#[pyo3(signature = (id, n_list, h_list, config = None))]
fn run_convergence<'py>(
    py: Python<'py>,
    id: u8,
    n_list: Vec<usize>,
    h_list: Vec<f64>,
    config: Option<PyRunConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let base = base_of(config);
    let table = py
        .detach(|| experiment::run_convergence(id, &n_list, &h_list, &base))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    let rows = table.rows.iter().map(|r| row_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("rows", rows)?;
    d.set_item("rate_N", table.rate_n)?;
    d.set_item("rate_h", table.rate_h)?;
    d.set_item("reference", table.reference)?;
    Ok(d)
}

/// Bloch solve against the supercell solve for example `id` at `(N, h)`.
#[pyfunction]
#[pyo3(signature = (id, n, h, config = None))]
fn oracle_check<'py>(py: Python<'py>, id: u8, n: usize, h: f64, config: Option<PyRunConfig>) -> PyResult<Bound<'py, PyDict>> {
    let base = base_of(config);
    let cmp = py
        .detach(|| {
            let cfg = experiment::example_config(id, n, h, &base)?;
            fem::oracle::run_oracle_check(&experiment::Problem::new(&cfg)?)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("difference", cmp.difference)?;
    d.set_item("block_dofs", cmp.block_dofs)?;
    d.set_item("bloch_count", cmp.bloch_counts.total())?;
    d.set_item("supercell_count", cmp.supercell_counts.total())?;
    d.set_item("bloch_formula", cmp.bloch_formula)?;
    d.set_item("supercell_formula", cmp.supercell_formula)?;
    d.set_item("counts_match", cmp.counts_match())?;
    Ok(d)
}

/// Solves a configuration; returns `(x1, u, relative_error)` on the top
/// trace, the error being `None` for incident sources.
#[pyfunction]
fn solve<'py>(
    py: Python<'py>,
    config: PyRunConfig,
) -> PyResult<TraceArrays<'py>> {
    let cfg = config.inner;
    let (x, u, err) = py
        .detach(|| -> fem::Result<_> {
            let outcome = experiment::solve_config(&cfg)?;
            let (x, u) = experiment::numerical_trace(&outcome);
            let err = match cfg.source.kind {
                SourceKind::Volume => Some(experiment::trace_error(&outcome, None)?),
                SourceKind::Incident => None,
            };
            Ok((x, u, err))
        })
        .map_err(to_py)?;
    Ok((x.into_pyarray(py), u.into_pyarray(py), err))
}

/// Periodic cell mesh: `(nodes (n, 2), triangles (t, 3))`.
#[pyfunction]
#[pyo3(signature = (h, period = 2.0 * std::f64::consts::PI, h0 = 1.0, height = 3.0))]
fn build_mesh<'py>(
    py: Python<'py>,
    h: f64,
    period: f64,
    h0: f64,
    height: f64,
) -> PyResult<MeshArrays<'py>> {
    let mesh = fem::mesh::build_cell_mesh(period, h0, height, h).map_err(to_py)?;
    let nodes: Vec<Vec<f64>> = mesh.nodes.iter().map(|p| p.to_vec()).collect();
    let tris: Vec<Vec<usize>> = mesh.triangles.iter().map(|t| t.to_vec()).collect();
    Ok((
        PyArray2::from_vec2(py, &nodes).map_err(|e| PyValueError::new_err(e.to_string()))?,
        PyArray2::from_vec2(py, &tris).map_err(|e| PyValueError::new_err(e.to_string()))?,
    ))
}

/// H₀⁽¹⁾(z) for real z > 0.
#[pyfunction]
fn hankel_h0_1(z: f64) -> PyResult<Complex64> {
    fem::greens::hankel_h0_1(z).map_err(to_py)
}

#[pymodule(name = "bloch_fem")]
pub fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(run_example, m)?)?;
    m.add_function(wrap_pyfunction!(run_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(build_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(hankel_h0_1, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
