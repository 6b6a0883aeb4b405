//! Python bindings for `plaplab`.
//!
//! Coefficients are passed as plain sequences: `sigma` as one float per
//! cell (or a single float), `a` as `(a11, a12, a22)` per cell, nodal data
//! as one float per vertex. Expressions in `x1, x2` are accepted wherever a
//! string is given.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use plaplab::dnmap::pairing_with_state;
use plaplab::expr::parse_expression;
use plaplab::fields::gram_schmidt_factor;
use plaplab::forward::{solve_dirichlet, DirichletProblem, SolverOptions};
use plaplab::monotonicity::{beta_optimality_check, monotonicity_triple};
use plaplab::ucp2d::{beltrami_coefficients as coeffs, dual_stream_function, plateau_scan as scan};
use plaplab::{Error, MatrixField, NodalFunction, Rect, ScalarField, Sym2};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ConvergenceFailure { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(frozen, name = "Mesh")]
struct PyMesh {
    inner: plaplab::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> PyResult<Self> {
        let inner = plaplab::Mesh::new(vertices, triangles).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Structured triangulation of `[x0, x1] x [y0, y1]` with `n` squares per side.
    #[staticmethod]
    #[pyo3(signature = (n, x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0))]
    fn structured(n: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> PyResult<Self> {
        let inner = plaplab::build_structured_mesh(Rect::new(x0, x1, y0, y1), n).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads the text mesh format.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = plaplab::io::read_mesh(std::path::Path::new(path)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.inner.num_cells()
    }

    fn vertices(&self) -> Vec<[f64; 2]> {
        self.inner.vertices().to_vec()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    fn centroids(&self) -> Vec<[f64; 2]> {
        self.inner.centroids()
    }

    fn boundary_flags(&self) -> Vec<bool> {
        self.inner.boundary_vertex_flags().to_vec()
    }

    fn cell_areas(&self) -> Vec<f64> {
        self.inner.cell_areas().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, cells={})", self.inner.num_vertices(), self.inner.num_cells())
    }
}

#[derive(FromPyObject)]
enum CellData {
    Const(f64),
    Expr(String),
    Values(Vec<f64>),
}

#[derive(FromPyObject)]
enum NodalData {
    Expr(String),
    Values(Vec<f64>),
}

fn sigma_field(mesh: &plaplab::Mesh, s: CellData) -> PyResult<ScalarField> {
    match s {
        CellData::Const(c) => ScalarField::constant(mesh, c),
        CellData::Expr(e) => ScalarField::new(mesh, parse_expression(&e).map_err(py_err)?.on_cells(mesh)),
        CellData::Values(v) => ScalarField::new(mesh, v),
    }
    .map_err(py_err)
}

fn matrix_field(mesh: &plaplab::Mesh, a: Option<Vec<[f64; 3]>>) -> PyResult<MatrixField> {
    match a {
        None => Ok(MatrixField::identity(mesh)),
        Some(v) => MatrixField::new(mesh, v.into_iter().map(|m| Sym2::new(m[0], m[1], m[2])).collect()).map_err(py_err),
    }
}

fn nodal(mesh: &plaplab::Mesh, f: NodalData) -> PyResult<NodalFunction> {
    match f {
        NodalData::Expr(e) => Ok(parse_expression(&e).map_err(py_err)?.on_vertices(mesh)),
        NodalData::Values(v) => NodalFunction::new(mesh, v).map_err(py_err),
    }
}

fn options(tol: Option<f64>) -> SolverOptions {
    SolverOptions {
        tol,
        ..SolverOptions::default()
    }
}

/// Dirichlet solve. Returns a dict with `u`, `energy`, `residual_norm`,
/// `tolerance` and `iterations`.
#[pyfunction]
#[pyo3(signature = (mesh, sigma, p, f, a = None, tol = None))]
fn solve<'py>(
    py: Python<'py>,
    mesh: &PyMesh,
    sigma: CellData,
    p: f64,
    f: NodalData,
    a: Option<Vec<[f64; 3]>>,
    tol: Option<f64>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let m = &mesh.inner;
    let (s, a, f) = (sigma_field(m, sigma)?, matrix_field(m, a)?, nodal(m, f)?);
    let sol = py
        .detach(|| solve_dirichlet(&DirichletProblem::new(m, &s, &a, p, &f)?, &options(tol)))
        .map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("u", sol.u.values().to_vec())?;
    d.set_item("energy", sol.energy)?;
    d.set_item("residual_norm", sol.residual_norm)?;
    d.set_item("tolerance", sol.tolerance)?;
    d.set_item("iterations", sol.iterations)?;
    Ok(d)
}

/// `<L_sigma(f), g>`.
#[pyfunction]
#[pyo3(signature = (mesh, sigma, p, f, g, a = None, tol = None))]
fn dn_pairing(
    py: Python<'_>,
    mesh: &PyMesh,
    sigma: CellData,
    p: f64,
    f: NodalData,
    g: NodalData,
    a: Option<Vec<[f64; 3]>>,
    tol: Option<f64>,
) -> PyResult<f64> {
    let m = &mesh.inner;
    let (s, a, f, g) = (sigma_field(m, sigma)?, matrix_field(m, a)?, nodal(m, f)?, nodal(m, g)?);
    py.detach(|| {
        let sol = solve_dirichlet(&DirichletProblem::new(m, &s, &a, p, &f)?, &options(tol))?;
        pairing_with_state(m, &s, &a, p, &sol.u, &g)
    })
    .map_err(py_err)
}

/// `(lower, middle, upper)` of the monotonicity inequality.
#[pyfunction]
#[pyo3(signature = (mesh, sigma1, sigma2, p, f, a = None, tol = None))]
#[allow(clippy::too_many_arguments)]
fn monotonicity(
    py: Python<'_>,
    mesh: &PyMesh,
    sigma1: CellData,
    sigma2: CellData,
    p: f64,
    f: NodalData,
    a: Option<Vec<[f64; 3]>>,
    tol: Option<f64>,
) -> PyResult<(f64, f64, f64)> {
    let m = &mesh.inner;
    let (s1, s2) = (sigma_field(m, sigma1)?, sigma_field(m, sigma2)?);
    let (a, f) = (matrix_field(m, a)?, nodal(m, f)?);
    let t = py
        .detach(|| monotonicity_triple(m, &s1, &s2, &a, p, &f, "f", &options(tol)))
        .map_err(py_err)?;
    Ok((t.lower, t.middle, t.upper))
}

/// Argmin of `(1 + beta)^p' / beta` over the grid.
#[pyfunction]
fn beta_argmin(p: f64, betas: Vec<f64>) -> PyResult<f64> {
    Ok(beta_optimality_check(p, &betas).map_err(py_err)?.argmin)
}

/// `(|q1|, |q2|)` of the Beltrami-type equation for `F = |f|^((p-2)/2) f`.
#[pyfunction]
fn beltrami_coefficients(p: f64) -> PyResult<(f64, f64)> {
    let c = coeffs(p).map_err(py_err)?;
    Ok((c.q1_mag, c.q2_mag))
}

/// Upper-triangular `B` with `B^T B = A`, as rows.
#[pyfunction]
fn gram_schmidt(a11: f64, a12: f64, a22: f64) -> PyResult<[[f64; 2]; 2]> {
    gram_schmidt_factor(&Sym2::new(a11, a12, a22))
        .map(|b| b.0)
        .ok_or_else(|| PyValueError::new_err("matrix is not positive definite"))
}

/// Values of an expression at cell centroids or vertices.
#[pyfunction]
#[pyo3(signature = (expr, mesh, at = "cells"))]
fn evaluate(expr: &str, mesh: &PyMesh, at: &str) -> PyResult<Vec<f64>> {
    let e = parse_expression(expr).map_err(py_err)?;
    match at {
        "cells" => Ok(e.on_cells(&mesh.inner)),
        "vertices" => Ok(e.on_vertices(&mesh.inner).into_values()),
        _ => Err(PyValueError::new_err("at must be 'cells' or 'vertices'")),
    }
}

/// Stream function of the flux of `u`; returns `(v, dual_residual, round_trip_error)`.
#[pyfunction]
fn stream_function(mesh: &PyMesh, u: Vec<f64>, sigma: CellData, p: f64) -> PyResult<(Vec<f64>, f64, f64)> {
    let m = &mesh.inner;
    let s = sigma_field(m, sigma)?;
    let u = NodalFunction::new(m, u).map_err(py_err)?;
    let d = dual_stream_function(m, &u, &s, p).map_err(py_err)?;
    Ok((d.v.into_values(), d.dual_residual, d.round_trip_error))
}

/// Area fractions of the low-gradient components, largest first.
#[pyfunction]
#[pyo3(signature = (mesh, u, threshold = None))]
fn plateau_scan(mesh: &PyMesh, u: Vec<f64>, threshold: Option<f64>) -> PyResult<Vec<f64>> {
    let u = NodalFunction::new(&mesh.inner, u).map_err(py_err)?;
    let r = scan(&mesh.inner, &u, threshold).map_err(py_err)?;
    Ok(r.components.iter().map(|c| c.area_fraction).collect())
}

#[pymodule]
fn plaplab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(dn_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity, m)?)?;
    m.add_function(wrap_pyfunction!(beta_argmin, m)?)?;
    m.add_function(wrap_pyfunction!(beltrami_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(gram_schmidt, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stream_function, m)?)?;
    m.add_function(wrap_pyfunction!(plateau_scan, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
