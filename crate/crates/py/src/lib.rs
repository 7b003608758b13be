//! Python bindings: grids, grid functions, Legendre transforms, Monge-Ampere
//! masses, test curves, rays, filtrations and the check suites.

use hrma_core::checks::{run_check, run_suite, RunConfig, Suite};
use hrma_core::filtration::{phong_sturm_ray, weight_histogram};
use hrma_core::geodesic::{default_t_grid, energy_linearity, ray_dual, ray_from_curve};
use hrma_core::legendre::{biconjugate, legendre, subgradient_range};
use hrma_core::monge_ampere::ma_measure;
use hrma_core::{
    BergmanInstance, ConcaveTransform, ConvexGridFunction, DualGrid, Error, Grid, GridBox, GridFunction, NEG_INF,
};
use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::Resource(_) => PyMemoryError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Unsupported(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPyErr<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPyErr<T> for hrma_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

#[pyclass(name = "Grid", module = "hrma", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>, nodes: Vec<usize>) -> PyResult<Self> {
        Ok(Self(Grid::new(GridBox::new(&lower, &upper).py()?, &nodes).py()?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn nodes(&self) -> Vec<usize> {
        self.0.nodes_per_axis().to_vec()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.0.spacing().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node coordinates in storage order (last axis fastest).
    fn points(&self) -> Vec<Vec<f64>> {
        (0..self.0.len()).map(|i| self.0.point(i)[..self.0.dim()].to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(lower={:?}, upper={:?}, nodes={:?})", self.0.bbox().lower(), self.0.bbox().upper(), self.0.nodes_per_axis())
    }
}

#[pyclass(name = "GridFunction", module = "hrma", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridFunction(GridFunction);

#[pymethods]
impl PyGridFunction {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self(GridFunction::new(grid.0.clone(), values).py()?))
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self(GridFunction::from_text(text).py()?))
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn sup_distance(&self, other: &PyGridFunction) -> PyResult<f64> {
        self.0.sup_distance(&other.0).py()
    }

    fn is_convex(&self) -> bool {
        ConvexGridFunction::certify(self.0.clone()).is_ok()
    }

    /// Largest convex minorant sampled at the nodes.
    fn lower_convex_envelope(&self) -> PyResult<PyGridFunction> {
        Ok(Self(hrma_core::grid::lower_convex_envelope(&self.0).py()?.into_inner()))
    }

    fn __len__(&self) -> usize {
        self.0.grid().len()
    }
}

#[pyclass(name = "DualGrid", module = "hrma", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDualGrid(DualGrid);

#[pymethods]
impl PyDualGrid {
    #[new]
    fn new(grid: &PyGrid) -> Self {
        Self(DualGrid::new(grid.0.clone()))
    }

    /// Box covering the slope range of `f`, padded by one dual spacing.
    #[staticmethod]
    fn covering(f: &PyGridFunction, nodes: Vec<usize>) -> PyResult<Self> {
        Ok(Self(DualGrid::covering(&f.0, &nodes).py()?))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }
}

fn convex(f: &PyGridFunction) -> PyResult<ConvexGridFunction> {
    ConvexGridFunction::certify(f.0.clone()).py()
}

/// Discrete Legendre transform of `f` on the dual grid.
#[pyfunction(name = "legendre")]
fn py_legendre(f: &PyGridFunction, dual: &PyDualGrid) -> PyResult<PyGridFunction> {
    Ok(PyGridFunction(legendre(&f.0, &dual.0).py()?.into_inner()))
}

#[pyfunction(name = "biconjugate")]
fn py_biconjugate(f: &PyGridFunction, dual: &PyDualGrid) -> PyResult<PyGridFunction> {
    Ok(PyGridFunction(biconjugate(&f.0, &dual.0).py()?.into_inner()))
}

/// Monge-Ampere masses of a convex function, one per dual node.
#[pyfunction(name = "ma_measure")]
fn py_ma_measure(f: &PyGridFunction, dual: &PyDualGrid) -> PyResult<Vec<f64>> {
    Ok(ma_measure(&convex(f)?, &dual.0).py()?.masses().to_vec())
}

/// Dual nodes in the subgradient set of `f`.
#[pyfunction(name = "subgradient_mask")]
fn py_subgradient_mask(f: &PyGridFunction, dual: &PyDualGrid) -> PyResult<Vec<bool>> {
    let r = subgradient_range(&f.0, &dual.0).py()?;
    Ok((0..dual.0.grid().len()).map(|i| r.contains(i)).collect())
}

#[pyclass(name = "TestCurve", module = "hrma", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTestCurve(hrma_core::TestCurve);

fn concave_u(phi: &ConvexGridFunction, u: Vec<f64>, dual: &DualGrid) -> PyResult<ConcaveTransform> {
    let base = subgradient_range(phi, dual).py()?;
    if u.len() != dual.grid().len() {
        return Err(PyValueError::new_err("u needs one value per dual node"));
    }
    let vals = u.into_iter().enumerate().map(|(i, v)| if base.contains(i) { v } else { NEG_INF }).collect();
    let g = GridFunction::new(dual.grid().clone(), vals).py()?;
    ConcaveTransform::new(g, base, 1e-9).py()
}

#[pymethods]
impl PyTestCurve {
    /// `phi` up to `eta`, `-inf` beyond.
    #[staticmethod]
    fn constant_then_cutoff(phi: &PyGridFunction, lambdas: Vec<f64>, eta: f64) -> PyResult<Self> {
        Ok(Self(hrma_core::TestCurve::constant_then_cutoff(&convex(phi)?, lambdas, eta).py()?))
    }

    /// Envelope curve of `u` (one value per dual node; ignored off the subgradient set of `phi`).
    #[staticmethod]
    fn from_concave_u(phi: &PyGridFunction, u: Vec<f64>, lambdas: Vec<f64>, dual: &PyDualGrid) -> PyResult<Self> {
        let phi = convex(phi)?;
        let u = concave_u(&phi, u, &dual.0)?;
        Ok(Self(hrma_core::TestCurve::from_concave_transform(&phi, &u, lambdas, &dual.0).py()?))
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self(hrma_core::TestCurve::from_text(text).py()?))
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.0.lambdas().to_vec()
    }

    #[getter]
    fn lambda_c(&self) -> f64 {
        self.0.lambda_c()
    }

    fn sample(&self, j: usize) -> PyResult<PyGridFunction> {
        match self.0.samples().get(j) {
            Some(s) => Ok(PyGridFunction(s.as_grid_function().clone())),
            None => Err(PyValueError::new_err("sample index out of range")),
        }
    }

    fn is_valid(&self) -> bool {
        self.0.validate().valid
    }
}

#[pyclass(name = "Ray", module = "hrma", frozen, skip_from_py_object)]
struct PyRay(hrma_core::Ray);

#[pymethods]
impl PyRay {
    #[getter]
    fn t_grid(&self) -> Vec<f64> {
        self.0.t_grid().to_vec()
    }

    fn frame(&self, i: usize) -> PyResult<PyGridFunction> {
        match self.0.frames().get(i) {
            Some(f) => Ok(PyGridFunction(f.as_grid_function().clone())),
            None => Err(PyValueError::new_err("frame index out of range")),
        }
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn sup_distance(&self, other: &PyRay) -> PyResult<Vec<f64>> {
        hrma_core::geodesic::compare_rays(&self.0, &other.0).py()
    }

    /// Energy slope, intercept, fit residual and the slope predicted from the curve masses.
    fn energy_linearity<'py>(&self, py: Python<'py>, dual: &PyDualGrid) -> PyResult<Bound<'py, PyDict>> {
        let r = energy_linearity(&self.0, self.0.frame(0), &dual.0).py()?;
        let d = PyDict::new(py);
        d.set_item("slope", r.slope)?;
        d.set_item("intercept", r.intercept)?;
        d.set_item("max_abs_residual", r.max_abs_residual)?;
        d.set_item("predicted_slope", r.predicted_slope)?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.0.frames().len()
    }
}

fn t_grid_or_default(t: Option<Vec<f64>>) -> Vec<f64> {
    t.unwrap_or_else(default_t_grid)
}

/// Ray of a test curve: `sup_l (psi_l + t l)` per t.
#[pyfunction(name = "ray_from_curve", signature = (curve, t_grid=None))]
fn py_ray_from_curve(curve: &PyTestCurve, t_grid: Option<Vec<f64>>) -> PyResult<PyRay> {
    Ok(PyRay(ray_from_curve(&curve.0, &t_grid_or_default(t_grid)).py()?))
}

/// Dual ray: Legendre transform of `phi* - t u`.
#[pyfunction(name = "ray_dual", signature = (phi, u, dual, t_grid=None))]
fn py_ray_dual(phi: &PyGridFunction, u: Vec<f64>, dual: &PyDualGrid, t_grid: Option<Vec<f64>>) -> PyResult<PyRay> {
    let phi = convex(phi)?;
    let u = concave_u(&phi, u, &dual.0)?;
    Ok(PyRay(ray_dual(&phi, &u, &dual.0, &t_grid_or_default(t_grid)).py()?))
}

#[pyclass(name = "WeightedLatticeData", module = "hrma")]
struct PyWeights(hrma_core::WeightedLatticeData);

#[pymethods]
impl PyWeights {
    /// Points as 1- or 2-tuples of integers, one integer weight each.
    #[new]
    fn new(points: Vec<Vec<i64>>, weights: Vec<i64>) -> PyResult<Self> {
        let dim = points.first().map_or(1, Vec::len);
        if !(1..=2).contains(&dim) || points.iter().any(|p| p.len() != dim) {
            return Err(PyValueError::new_err("points must all have 1 or all have 2 coordinates"));
        }
        let pts = points.iter().map(|p| [p[0], p.get(1).copied().unwrap_or(0)]).collect();
        Ok(Self(hrma_core::WeightedLatticeData::new(dim, pts, weights).py()?))
    }

    /// Points and max-plus weights at degree `k`.
    fn closure(&mut self, k: usize) -> PyResult<(Vec<Vec<i64>>, Vec<i64>)> {
        let dim = self.0.dim();
        let c = self.0.multiplicative_closure(k).py()?;
        Ok((c.points.iter().map(|p| p[..dim].to_vec()).collect(), c.weights.clone()))
    }

    /// Rows `(lambda, dim V_lambda, dim F_lambda)` at degree `k`.
    fn histogram(&mut self, k: usize) -> PyResult<Vec<(i64, usize, usize)>> {
        Ok(weight_histogram(&mut self.0, k).py()?.rows.iter().map(|r| (r.lambda, r.dim_v, r.dim_f)).collect())
    }

    /// Phong-Sturm ray at degree `k` over the base potential `phi` and dual box `dual`.
    #[pyo3(signature = (phi, dual, k, t_grid=None))]
    fn phong_sturm_ray(&mut self, phi: &PyGridFunction, dual: &PyDualGrid, k: usize, t_grid: Option<Vec<f64>>) -> PyResult<PyRay> {
        let inst = BergmanInstance::new(convex(phi)?, dual.0.clone()).py()?;
        let s = inst.sections(self.0.multiplicative_closure(k).py()?).py()?;
        Ok(PyRay(phong_sturm_ray(&inst, &s, &t_grid_or_default(t_grid)).py()?))
    }
}

/// Runs one numbered check and returns its JSON report.
#[pyfunction(name = "run_check", signature = (id, seed=None))]
fn py_run_check(id: u32, seed: Option<u64>) -> PyResult<String> {
    let cfg = RunConfig { seed: seed.unwrap_or(RunConfig::default().seed), ..RunConfig::default() };
    let r = run_check(id, &cfg).py()?;
    Ok(serde_json_string(&r))
}

/// Runs a suite (`core`, `envelopes`, `rays`, `filtration`, `all`) and returns the JSON report.
#[pyfunction(name = "run_suite")]
fn py_run_suite(name: &str) -> PyResult<String> {
    let suite = Suite::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown suite `{name}`")))?;
    Ok(run_suite(suite, &RunConfig::default()).py()?.to_json())
}

fn serde_json_string(r: &hrma_core::checks::CheckResult) -> String {
    let report = hrma_core::checks::RunReport {
        suite: Suite::All,
        seed: RunConfig::default().seed,
        tol_scale: 1.0,
        checks: vec![r.clone()],
        pass: r.pass,
    };
    report.to_json()
}

#[pymodule]
fn hrma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGridFunction>()?;
    m.add_class::<PyDualGrid>()?;
    m.add_class::<PyTestCurve>()?;
    m.add_class::<PyRay>()?;
    m.add_class::<PyWeights>()?;
    m.add_function(wrap_pyfunction!(py_legendre, m)?)?;
    m.add_function(wrap_pyfunction!(py_biconjugate, m)?)?;
    m.add_function(wrap_pyfunction!(py_ma_measure, m)?)?;
    m.add_function(wrap_pyfunction!(py_subgradient_mask, m)?)?;
    m.add_function(wrap_pyfunction!(py_ray_from_curve, m)?)?;
    m.add_function(wrap_pyfunction!(py_ray_dual, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_check, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_suite, m)?)?;
    Ok(())
}
