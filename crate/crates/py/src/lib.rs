//! Python bindings: suite runner, scenario validation, square function and exact ball masses.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use conesq::error::Error;
use conesq::geometry::{BallSpec, Point};
use conesq::harness::{run_suite as run, ReportWriter, Scenario, SuiteContext, SUITES};
use conesq::measure::AtomicMeasure;
use num_complex::Complex64;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scenario_or_default(scenario: Option<&str>) -> PyResult<Scenario> {
    scenario.map_or_else(|| Ok(Scenario::segment(65)), |s| Scenario::parse(s).map_err(py_err))
}

/// Names of the verification suites.
#[pyfunction]
fn suites() -> Vec<&'static str> {
    SUITES.to_vec()
}

/// Runs a suite and returns its reports as dictionaries.
#[pyfunction]
#[pyo3(signature = (name, seed = 0, budget = None, scenario = None))]
fn run_suite<'py>(
    py: Python<'py>,
    name: &str,
    seed: u64,
    budget: Option<usize>,
    scenario: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let ctx = SuiteContext {
        scenario: scenario.map(Scenario::parse).transpose().map_err(py_err)?,
        seed,
        budget,
    };
    let mut w = ReportWriter::new(None, false).map_err(py_err)?;
    let reports = py.detach(|| run(name, &ctx, &mut w)).map_err(py_err)?;
    reports
        .iter()
        .map(|r| json_to_py(py, &serde_json::to_value(r).expect("report serializes")))
        .collect()
}

/// Parses and validates a scenario, returning it with all defaults filled in.
#[pyfunction]
fn validate_scenario<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = Scenario::parse(text).map_err(py_err)?;
    json_to_py(py, &serde_json::to_value(&s).expect("scenario serializes"))
}

/// Truncated square function of the scenario measure at each atom, with standard errors.
#[pyfunction]
#[pyo3(signature = (scenario = None, seed = 0, budget = None))]
fn square_function(py: Python<'_>, scenario: Option<&str>, seed: u64, budget: Option<usize>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mut sc = scenario_or_default(scenario)?;
    if let Some(b) = budget {
        sc.budget.samples_per_shell = b;
    }
    let inst = sc.instantiate().map_err(py_err)?;
    let mu = &inst.mu;
    let measure: Vec<Complex64> = mu.weights().iter().map(|&w| Complex64::new(w, 0.0)).collect();
    let cfg = sc.quadrature(seed);
    let vals = py
        .detach(|| {
            conesq::czdecomp::square_function_at_atoms(
                &inst.kernel,
                &inst.e,
                mu.points(),
                &[measure],
                mu.points(),
                sc.params.s_min,
                sc.params.t_max,
                &cfg,
            )
        })
        .map_err(py_err)?;
    Ok(vals[0].iter().copied().unzip())
}

/// Exact mass of a ball under the atomic measure `sum_i weights[i] delta_{points[i]}`.
#[pyfunction]
#[pyo3(signature = (points, weights, center, radius, closed = true))]
fn ball_mass(points: Vec<Vec<f64>>, weights: Vec<f64>, center: Vec<f64>, radius: f64, closed: bool) -> PyResult<f64> {
    let pts = points.iter().map(|p| Point::new(p)).collect::<Result<Vec<_>, _>>().map_err(py_err)?;
    let mu = AtomicMeasure::new(pts, weights).map_err(py_err)?;
    let c = Point::new(&center).map_err(py_err)?;
    let ball = if closed { BallSpec::closed(c, radius) } else { BallSpec::open(c, radius) };
    Ok(mu.ball_mass(&ball))
}

#[pymodule]
pub fn conesq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(suites, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(validate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(square_function, m)?)?;
    m.add_function(wrap_pyfunction!(ball_mass, m)?)?;
    Ok(())
}
