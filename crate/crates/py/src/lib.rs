//! Python bindings. Every function takes a case file path and returns plain
//! Python objects (dicts, lists, floats) decoded from the canonical JSON.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gridfeas::acopf::{solve_acopf, AcOpfOptions};
use gridfeas::acpf::{solve_newton_pf, PfOptions, PfSetpoints};
use gridfeas::dcopf::{solve_dcopf, solve_economic_dispatch};
use gridfeas::feasgap::{check_dc_infeasibility, generation_gap_experiment_with, ExperimentConfig, LossMode};
use gridfeas::netmodel::{read_case, validate_assumptions};
use gridfeas::Error;

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Error> {
    gridfeas::io::to_canonical_json(v)
}

pub fn load_case_json(path: &str) -> Result<String, Error> {
    to_json(&read_case(Path::new(path))?)
}

pub fn solve_ed_json(path: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    let (solution, diagnostics) = solve_economic_dispatch(&case)?;
    to_json(&serde_json::json!({ "solution": solution, "diagnostics": diagnostics }))
}

pub fn solve_dc_json(path: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    let (solution, diagnostics) = solve_dcopf(&case)?;
    to_json(&serde_json::json!({ "solution": solution, "diagnostics": diagnostics }))
}

pub fn solve_ac_json(path: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    to_json(&solve_acopf(&case, &AcOpfOptions::default())?)
}

pub fn power_flow_json(path: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    to_json(&solve_newton_pf(&case, &PfSetpoints::from_case(&case), &PfOptions::default())?)
}

pub fn check_feasibility_json(path: &str, loss_mode: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    let mode: LossMode = loss_mode.parse()?;
    to_json(&check_dc_infeasibility(&case, mode, &AcOpfOptions::default())?)
}

pub fn gap_experiment_json(
    path: &str,
    runs: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    jobs: Option<usize>,
) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    let mut cfg = ExperimentConfig::new(runs, (lo, hi), seed);
    cfg.jobs = jobs;
    to_json(&generation_gap_experiment_with(&case, &cfg)?)
}

pub fn validate_json(path: &str) -> Result<String, Error> {
    let case = read_case(Path::new(path))?;
    to_json(&validate_assumptions(&case))
}

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Case(_) | Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn decode(py: Python<'_>, r: Result<String, Error>) -> PyResult<Py<PyAny>> {
    let text = r.map_err(py_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Parsed case data.
#[pyfunction]
fn load_case(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, load_case_json(path))
}

/// Economic dispatch: `{"solution": ..., "diagnostics": ...}`.
#[pyfunction]
fn solve_ed(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, solve_ed_json(path))
}

/// DC OPF: `{"solution": ..., "diagnostics": ...}`.
#[pyfunction]
fn solve_dc(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, solve_dc_json(path))
}

#[pyfunction]
fn solve_ac(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, solve_ac_json(path))
}

#[pyfunction]
fn power_flow(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, power_flow_json(path))
}

#[pyfunction]
#[pyo3(signature = (path, loss_mode = "SlackAbsorbs"))]
fn check_feasibility(py: Python<'_>, path: &str, loss_mode: &str) -> PyResult<Py<PyAny>> {
    decode(py, check_feasibility_json(path, loss_mode))
}

/// List of per-run dicts ordered by `run_id`.
#[pyfunction]
#[pyo3(signature = (path, runs = 500, lo = 0.6, hi = 1.2, seed = 42, jobs = None))]
fn gap_experiment(
    py: Python<'_>,
    path: &str,
    runs: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    jobs: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| gap_experiment_json(path, runs, lo, hi, seed, jobs));
    decode(py, r)
}

#[pyfunction]
fn validate(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    decode(py, validate_json(path))
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> Option<f64> {
    gridfeas::feasgap::spearman(&x, &y)
}

#[pymodule]
fn gridfeas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load_case, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ed, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ac, m)?)?;
    m.add_function(wrap_pyfunction!(power_flow, m)?)?;
    m.add_function(wrap_pyfunction!(check_feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(gap_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    Ok(())
}
