//! Python bindings. Payoffs and test functions are built from named
//! families on the Rust side, so solves never call back into Python.

use glevy::{self as core, Direction, Error, GridSpec, SchemeConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.code()))
}

fn grid(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> PyResult<GridSpec> {
    GridSpec::new(lower, upper, points).map_err(to_py)
}

fn scheme(t: f64, max_dt: Option<f64>, cfl: Option<f64>) -> SchemeConfig {
    let mut cfg = SchemeConfig::default().with_final_time(t);
    if max_dt.is_some() {
        cfg.max_dt = max_dt;
    }
    if let Some(c) = cfl {
        cfg.cfl_safety = c;
    }
    cfg
}

#[pyclass(name = "UncertaintySet", frozen)]
struct PyUncertaintySet(core::UncertaintySet);

fn jump_vector(item: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
    match item.extract::<f64>() {
        Ok(z) => Ok(vec![z]),
        Err(_) => item.extract::<Vec<f64>>(),
    }
}

#[pymethods]
impl PyUncertaintySet {
    /// `scenarios` is a list of dicts with keys `jumps` (list of
    /// `(z, rate)`), `drift` (list) and `diffusion` (list of rows).
    #[new]
    #[pyo3(signature = (scenarios, dim = 1))]
    fn new(scenarios: Vec<Bound<'_, PyDict>>, dim: usize) -> PyResult<Self> {
        let mut raw = Vec::with_capacity(scenarios.len());
        for s in &scenarios {
            let mut data = core::ScenarioData::zero(dim);
            if let Some(jumps) = s.get_item("jumps")? {
                for pair in jumps.try_iter()? {
                    let pair = pair?;
                    let z = jump_vector(&pair.get_item(0)?)?;
                    let rate: f64 = pair.get_item(1)?.extract()?;
                    data = data.with_atom(z, rate);
                }
            }
            if let Some(q) = s.get_item("drift")? {
                data = data.with_drift(q.extract()?);
            }
            if let Some(a) = s.get_item("diffusion")? {
                data = data.with_diffusion(a.extract()?);
            }
            raw.push(data);
        }
        core::validate_uncertainty_set(&raw)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn g_poisson(lam: f64) -> PyResult<Self> {
        core::UncertaintySet::g_poisson(lam)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __len__(&self) -> usize {
        self.0.scenarios().len()
    }

    fn mass_bound(&self) -> f64 {
        self.0.mass_bound()
    }

    fn padding(&self, t: f64) -> f64 {
        self.0.padding(t)
    }
}

#[pyclass(name = "Payoff", frozen)]
struct PyPayoff(core::Payoff);

#[pymethods]
impl PyPayoff {
    #[staticmethod]
    fn clip_linear(clip: f64) -> PyResult<Self> {
        core::Payoff::clip_linear(clip).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn quadratic_clip(cap: f64) -> PyResult<Self> {
        core::Payoff::quadratic_clip(cap).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn indicator_ramp(low: f64, high: f64) -> PyResult<Self> {
        core::Payoff::indicator_ramp(low, high)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn constant(value: f64) -> PyResult<Self> {
        core::Payoff::constant(value).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn table(points: Vec<(f64, f64)>) -> PyResult<Self> {
        core::Payoff::table(points).map(Self).map_err(to_py)
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).map(Self).map_err(to_py)
    }

    fn shifted(&self, c: f64) -> PyResult<Self> {
        self.0.shifted(c).map(Self).map_err(to_py)
    }

    fn __add__(&self, other: &PyPayoff) -> PyResult<Self> {
        self.0.sum(&other.0).map(Self).map_err(to_py)
    }

    fn __neg__(&self) -> PyResult<Self> {
        self.scaled(-1.0)
    }

    fn __call__(&self, x: Vec<f64>) -> f64 {
        self.0.eval(&x)
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.0.bound()
    }
}

#[pyclass(name = "TestFunction", frozen)]
struct PyTestFunction(core::TestFunction);

#[pymethods]
impl PyTestFunction {
    #[staticmethod]
    fn bump(center: f64, radius: f64, height: f64) -> PyResult<Self> {
        core::TestFunction::bump(center, radius, height)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn one_minus_cos() -> PyResult<Self> {
        core::TestFunction::one_minus_cos().map(Self).map_err(to_py)
    }

    fn __call__(&self, x: Vec<f64>) -> f64 {
        self.0.eval(&x)
    }
}

#[pyclass(name = "Solution", frozen)]
struct PySolution {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    result: core::SolveResult,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.result
            .snapshots
            .iter()
            .map(|s| s.time_label())
            .collect()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.result.steps
    }

    fn evaluate(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.result.evaluate(t, &x).map_err(to_py)
    }

    /// Node values at time `t` in C order of the grid.
    fn values(&self, t: f64) -> PyResult<Vec<f64>> {
        Ok(self.result.snapshot(t).map_err(to_py)?.values().to_vec())
    }

    fn grid(&self) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        (self.lower.clone(), self.upper.clone(), self.points.clone())
    }
}

/// Solves the integro-PDE on the box `[lower, upper]` with `points` nodes
/// per axis and keeps the snapshots at `times` (default `[t]`).
#[pyfunction]
#[pyo3(signature = (payoff, uset, lower, upper, points, t, times = None, max_dt = None, cfl = None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    payoff: &PyPayoff,
    uset: &PyUncertaintySet,
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    t: f64,
    times: Option<Vec<f64>>,
    max_dt: Option<f64>,
    cfl: Option<f64>,
) -> PyResult<PySolution> {
    let spec = grid(lower.clone(), upper.clone(), points.clone())?;
    let cfg = scheme(t, max_dt, cfl);
    let times = times.unwrap_or_else(|| vec![t]);
    let (phi, set) = (payoff.0.clone(), uset.0.clone());
    let result = py
        .detach(move || core::solve(&phi, &set, &spec, &cfg, &times))
        .map_err(to_py)?;
    Ok(PySolution {
        lower,
        upper,
        points,
        result,
    })
}

#[pyfunction]
fn g_lambda(a: f64, lam: f64) -> PyResult<f64> {
    core::g_lambda(a, lam).map_err(to_py)
}

/// Closed-form G-Poisson expectation for a payoff monotone in the given
/// direction (`"increasing"` or `"decreasing"`).
#[pyfunction]
#[pyo3(signature = (payoff, direction, lam, t, x = 0.0, tol = 1e-12))]
fn gpoisson_closed_form(
    payoff: &PyPayoff,
    direction: &str,
    lam: f64,
    t: f64,
    x: f64,
    tol: f64,
) -> PyResult<f64> {
    let dir = match direction {
        "increasing" => Direction::Increasing,
        "decreasing" => Direction::Decreasing,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown direction `{other}`"
            )))
        }
    };
    core::gpoisson_closed_form(&payoff.0, dir, lam, t, x, tol).map_err(to_py)
}

#[pyfunction]
fn g_operator(f: &PyTestFunction, uset: &PyUncertaintySet) -> PyResult<f64> {
    core::g_operator(&f.0, &uset.0).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (f, uset, delta, lower, upper, points, max_dt = None))]
#[allow(clippy::too_many_arguments)]
fn small_time_quotient(
    py: Python<'_>,
    f: &PyTestFunction,
    uset: &PyUncertaintySet,
    delta: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    max_dt: Option<f64>,
) -> PyResult<f64> {
    let spec = grid(lower, upper, points)?;
    let cfg = scheme(delta, max_dt, None);
    let set = uset.0.clone();
    let f = &f.0;
    py.detach(move || core::small_time_quotient(f, &set, delta, &spec, &cfg))
        .map_err(to_py)
}

/// `Ê[φ(X_{t_m})]` computed through the nested engine, where `φ` is
/// applied to the sum of the increments over `times`.
#[pyfunction]
#[pyo3(signature = (payoff, uset, times, lower, upper, points, frozen_points))]
#[allow(clippy::too_many_arguments)]
fn expectation(
    py: Python<'_>,
    payoff: &PyPayoff,
    uset: &PyUncertaintySet,
    times: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    frozen_points: Vec<usize>,
) -> PyResult<f64> {
    let dim = uset.0.dim();
    let inc = grid(lower.clone(), upper.clone(), points)?;
    let frozen = grid(lower, upper, frozen_points)?;
    let eval = payoff.0.eval_fn();
    let xi = core::CylinderFunctional::new(
        times,
        dim,
        move |x: &[f64]| {
            let mut pos = vec![0.0; dim];
            for (i, v) in x.iter().enumerate() {
                pos[i % dim] += v;
            }
            eval(&pos)
        },
        payoff.0.bound(),
        payoff.0.lipschitz(),
    )
    .map_err(to_py)?;
    let cfg = core::EngineConfig::new(SchemeConfig::default(), inc, frozen);
    let set = uset.0.clone();
    py.detach(move || core::expectation(&xi, &set, &cfg))
        .map_err(to_py)
}

#[pyfunction]
fn gamma_transform(x: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = core::SymMatrix::from_rows(&x).map_err(to_py)?;
    Ok(core::gamma_transform(&m, gamma).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn j_matrix(n: usize, d: usize) -> Vec<Vec<f64>> {
    core::j_matrix(n, d).to_rows()
}

#[pymodule]
fn glevy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyUncertaintySet>()?;
    m.add_class::<PyPayoff>()?;
    m.add_class::<PyTestFunction>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(g_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(gpoisson_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(g_operator, m)?)?;
    m.add_function(wrap_pyfunction!(small_time_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(expectation, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_transform, m)?)?;
    m.add_function(wrap_pyfunction!(j_matrix, m)?)?;
    Ok(())
}
