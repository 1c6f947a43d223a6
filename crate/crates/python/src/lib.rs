//! Python bindings: meshes, the benchmark problems, one-shot solves with
//! error indicators, and the adaptive loop.

use std::str::FromStr;

use fvbem::adapt::{self, AdaptiveConfig, ConvergenceHistory, Marking, StopCriteria};
use fvbem::estimator::{self, EstimatorKind};
use fvbem::model::{builtin_problem, ex2_with_convection, Example, ProblemSpec};
use fvbem::solver::Discretization;
use fvbem::{Domain, Point};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: fvbem::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Mesh", module = "pyfvbem", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyMesh {
    inner: fvbem::Mesh,
}

#[pymethods]
impl PyMesh {
    /// Structured criss-cross mesh of `domain` ("square" or "lshape").
    #[staticmethod]
    fn structured(domain: &str, elements: usize) -> PyResult<Self> {
        let domain = Domain::from_str(domain).map_err(err)?;
        Ok(Self { inner: fvbem::mesh::build_initial_mesh(domain, elements).map_err(err)? })
    }

    #[staticmethod]
    fn from_arrays(vertices: Vec<(f64, f64)>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        let v = vertices.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        Ok(Self { inner: fvbem::Mesh::new(v, triangles).map_err(err)? })
    }

    #[staticmethod]
    fn from_dump(text: &str) -> PyResult<Self> {
        Ok(Self { inner: fvbem::Mesh::from_dump(text).map_err(err)? })
    }

    fn to_dump(&self) -> String {
        self.inner.to_dump()
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    #[getter]
    fn n_boundary_edges(&self) -> usize {
        self.inner.n_boundary_edges()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|p| (p.x, p.y)).collect()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn min_angle(&self) -> f64 {
        self.inner.min_angle()
    }

    /// Red-green-blue refinement of the marked elements plus closure.
    fn refine(&self, marked: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.refine_rgb(&marked).map_err(err)?.mesh })
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n_vertices={}, n_triangles={})", self.inner.n_vertices(), self.inner.n_triangles())
    }
}

#[pyclass(name = "Problem", module = "pyfvbem", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    /// One of "ex1", "ex2", "ex3".
    #[staticmethod]
    fn example(name: &str) -> PyResult<Self> {
        let example = Example::from_str(name).map_err(err)?;
        Ok(Self { inner: builtin_problem(example).map_err(err)? })
    }

    /// The second benchmark with its convection field scaled by `factor`.
    #[staticmethod]
    fn with_convection(factor: f64) -> PyResult<Self> {
        Ok(Self { inner: ex2_with_convection(factor).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn upwind_default(&self) -> bool {
        self.inner.upwind_default
    }

    #[getter]
    fn has_exact(&self) -> bool {
        self.inner.exact.is_some()
    }

    fn initial_mesh(&self) -> PyResult<PyMesh> {
        Ok(PyMesh { inner: self.inner.initial_mesh.build().map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?})", self.inner.name)
    }
}

/// Discrete solution on one mesh together with its error indicators.
#[pyclass(name = "Solution", module = "pyfvbem", frozen, get_all)]
pub struct PySolution {
    u: Vec<f64>,
    phi: Vec<f64>,
    a_inf: Option<f64>,
    residual: f64,
    eta: f64,
    eta_up: f64,
    indicators: Vec<f64>,
    energy_error: Option<f64>,
}

#[pyclass(name = "History", module = "pyfvbem", frozen)]
pub struct PyHistory {
    inner: ConvergenceHistory,
}

#[pymethods]
impl PyHistory {
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        self.inner.failure.as_ref().map(|e| e.to_string())
    }

    #[getter]
    fn n_elements(&self) -> Vec<usize> {
        self.inner.steps.iter().map(|r| r.n_elements).collect()
    }

    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.etas()
    }

    #[getter]
    fn error(&self) -> Vec<Option<f64>> {
        self.inner.steps.iter().map(|r| r.e_h()).collect()
    }

    #[getter]
    fn efficiency(&self) -> Vec<Option<f64>> {
        self.inner.steps.iter().map(|r| r.efficiency()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }
}

fn estimator_kind(name: &str) -> PyResult<EstimatorKind> {
    EstimatorKind::from_str(name).map_err(err)
}

/// Assemble and solve on `mesh`, then evaluate the estimator.
#[pyfunction]
#[pyo3(signature = (problem, mesh, upwind=None, estimator="robust"))]
fn solve(problem: &PyProblem, mesh: &PyMesh, upwind: Option<bool>, estimator: &str) -> PyResult<PySolution> {
    let spec = &problem.inner;
    let kind = estimator_kind(estimator)?;
    let disc = Discretization::new(mesh.inner.clone(), spec, upwind.unwrap_or(spec.upwind_default)).map_err(err)?;
    let sol = disc.solve(spec).map_err(err)?;
    let report = estimator::estimate(&disc, spec, &sol, kind).map_err(err)?;
    let energy_error = match spec.exact {
        Some(_) => Some(fvbem::verify::energy_error(&disc.mesh, spec, &sol.u).map_err(err)?),
        None => None,
    };
    Ok(PySolution {
        eta: report.eta(),
        eta_up: report.eta_up(),
        indicators: report.marking_values(),
        u: sol.u,
        phi: sol.phi,
        a_inf: sol.a_inf,
        residual: sol.residual,
        energy_error,
    })
}

/// Run the adaptive loop; `theta = 1` refines uniformly.
#[pyfunction]
#[pyo3(signature = (problem, theta=0.5, upwind=None, estimator="robust", marking="squared", max_elements=100_000, max_steps=None))]
fn run(problem: &PyProblem, theta: f64, upwind: Option<bool>, estimator: &str, marking: &str, max_elements: usize, max_steps: Option<usize>) -> PyResult<PyHistory> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(PyValueError::new_err(format!("theta must lie in (0, 1], got {theta}")));
    }
    let spec = &problem.inner;
    let mut cfg = AdaptiveConfig::new(theta, upwind.unwrap_or(spec.upwind_default));
    cfg.estimator = estimator_kind(estimator)?;
    cfg.marking = Marking::from_str(marking).map_err(err)?;
    cfg.stop = StopCriteria { max_elements, max_steps: max_steps.unwrap_or(usize::MAX) };
    Ok(PyHistory { inner: adapt::adaptive_loop(spec, &cfg) })
}

#[pyfunction]
fn doerfler_mark(indicators: Vec<f64>, theta: f64) -> PyResult<Vec<usize>> {
    adapt::doerfler_mark(&indicators, theta).map_err(err)
}

/// Constants of the reliability bound as a dict.
#[pyfunction]
#[pyo3(signature = (eps, alpha_min, c_k=1.0))]
fn reliability_constant<'py>(py: Python<'py>, eps: f64, alpha_min: f64, c_k: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = estimator::reliability_constant(eps, alpha_min, c_k).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("c_harm", r.c_harm)?;
    d.set_item("factor", r.factor)?;
    d.set_item("positivity_threshold", r.positivity_threshold)?;
    d.set_item("saturation_threshold", r.saturation_threshold)?;
    Ok(d)
}

/// Least-squares slope of `log y` over `log x` on the last `window` points.
#[pyfunction]
#[pyo3(signature = (x, y, window=3))]
fn fit_slope(x: Vec<f64>, y: Vec<f64>, window: usize) -> Option<f64> {
    fvbem::cli::fit_slope(&x, &y, window)
}

#[pymodule]
pub fn pyfvbem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyHistory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(doerfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_constant, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    Ok(())
}
