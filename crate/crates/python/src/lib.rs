//! Python bindings: configuration, single runs, per-fault tests and the
//! full campaign. Results come back as plain dicts and lists.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lowswing::campaign::{run_campaign, summarize};
use lowswing::circuit::LinkModel;
use lowswing::config::{parse_seed, RunConfig};
use lowswing::dft::{run_all, GoldenReference};
use lowswing::error::Error;
use lowswing::fault::{enumerate_faults, reference_netlist, Fault, Netlist};
use lowswing::sim::{measure_lock, simulate_model, SimOptions};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::FaultNotInUniverse(_) | Error::UnknownBlock { .. } | Error::UnknownRole { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Builds a run config from the defaults plus `key -> value` overrides.
fn run_config(overrides: Option<HashMap<String, String>>) -> PyResult<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(kv) = overrides {
        // sorted so errors do not depend on dict order
        let mut kv: Vec<_> = kv.into_iter().collect();
        kv.sort();
        for (k, v) in kv {
            rc.set(&k, &v).map_err(py_err)?;
        }
    }
    rc.validate().map_err(py_err)?;
    Ok(rc)
}

fn netlist(rc: &RunConfig) -> PyResult<Netlist> {
    match &rc.netlists {
        Some(dir) => Netlist::load_dir(dir).map_err(py_err),
        None => Ok(reference_netlist()),
    }
}

fn seed(rc: &RunConfig, seed: Option<&str>) -> PyResult<u32> {
    let s = match seed {
        Some(s) => parse_seed(s).map_err(py_err)?,
        None => rc.seed.unwrap_or(rc.link.prbs_seed),
    };
    if s & 0x7F == 0 {
        return Err(PyValueError::new_err(format!("seed {s:#x} has no bits in the 7-bit PRBS register")));
    }
    Ok(s)
}

fn parse_fault(s: &str) -> PyResult<Fault> {
    s.parse::<Fault>().map_err(py_err)
}

/// Every fault id in the universe, as `device:defect`.
#[pyfunction]
#[pyo3(signature = (overrides=None))]
fn faults(overrides: Option<HashMap<String, String>>) -> PyResult<Vec<String>> {
    let rc = run_config(overrides)?;
    Ok(enumerate_faults(&netlist(&rc)?).iter().map(|f| f.to_string()).collect())
}

/// Effective link parameters after overrides.
#[pyfunction]
#[pyo3(signature = (overrides=None))]
fn config(py: Python<'_>, overrides: Option<HashMap<String, String>>) -> PyResult<PyObject> {
    let rc = run_config(overrides)?;
    let d = PyDict::new_bound(py);
    let c = &rc.link;
    d.set_item("vdd", c.vdd)?;
    d.set_item("data_rate", c.data_rate)?;
    d.set_item("n_phases", c.n_phases)?;
    d.set_item("divider", c.divider)?;
    d.set_item("window_lo", c.window_lo)?;
    d.set_item("window_hi", c.window_hi)?;
    d.set_item("prbs_seed", c.prbs_seed)?;
    d.set_item("duration", rc.duration)?;
    Ok(d.into())
}

/// Runs the link once. Returns the lock report plus per-bit traces.
#[pyfunction]
#[pyo3(signature = (duration=None, seed=None, faults=Vec::new(), start_phase=None, overrides=None))]
fn simulate(
    py: Python<'_>,
    duration: Option<f64>,
    seed: Option<&str>,
    faults: Vec<String>,
    start_phase: Option<usize>,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<PyObject> {
    let rc = run_config(overrides)?;
    let nl = netlist(&rc)?;
    let faults = faults.iter().map(|s| parse_fault(s)).collect::<PyResult<Vec<_>>>()?;
    let model = LinkModel::with_faults(&rc.link, &faults, &nl).map_err(py_err)?;
    let s = self::seed(&rc, seed)?;
    if start_phase.is_some_and(|p| p >= rc.link.n_phases) {
        return Err(PyValueError::new_err("start_phase outside the phase wheel"));
    }
    let opts = SimOptions { initial_phase: start_phase, initial_vc: None };
    let duration = duration.unwrap_or(rc.duration);
    let trace = py
        .allow_threads(|| simulate_model(&model, duration, s, opts))
        .map_err(py_err)?;
    let r = measure_lock(&trace, &rc.link);
    let d = PyDict::new_bound(py);
    d.set_item("locked", r.locked)?;
    d.set_item("lock_time", r.lock_time)?;
    d.set_item("coarse_corrections", r.coarse_corrections)?;
    d.set_item("lock_count", r.final_lock_count)?;
    d.set_item("final_phase_err", r.final_phase_err)?;
    d.set_item("final_vc", r.final_vc)?;
    d.set_item("dt", trace.dt)?;
    d.set_item("vc", trace.vc)?;
    d.set_item("vp", trace.vp)?;
    d.set_item("phase_idx", trace.phase_idx)?;
    d.set_item("window_exit", trace.window_exit)?;
    Ok(d.into())
}

/// DC, scan and BIST on one fault: a list of `(stage, detected, evidence)`.
#[pyfunction]
#[pyo3(signature = (fault, seed=None, overrides=None))]
fn test_fault(
    py: Python<'_>,
    fault: &str,
    seed: Option<&str>,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<Vec<(String, bool, String)>> {
    let rc = run_config(overrides)?;
    let nl = netlist(&rc)?;
    let f = parse_fault(fault)?;
    let s = self::seed(&rc, seed)?;
    let outcomes = py
        .allow_threads(|| {
            let golden = GoldenReference::new(&rc.link)?;
            let m = LinkModel::with_faults(&rc.link, std::slice::from_ref(&f), &nl)?;
            run_all(&m, &golden, s)
        })
        .map_err(py_err)?;
    Ok(outcomes.into_iter().map(|o| (o.stage.to_string(), o.detected, o.evidence)).collect())
}

/// Full fault campaign. `jobs=0` uses every core.
#[pyfunction]
#[pyo3(signature = (jobs=0, seed=None, overrides=None))]
fn campaign(
    py: Python<'_>,
    jobs: usize,
    seed: Option<&str>,
    overrides: Option<HashMap<String, String>>,
) -> PyResult<PyObject> {
    let rc = run_config(overrides)?;
    let nl = netlist(&rc)?;
    let s = self::seed(&rc, seed)?;
    let report = py
        .allow_threads(|| run_campaign(&rc.link, &nl, s, jobs))
        .map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("per_stage_cumulative", report.per_stage_cumulative.to_vec())?;
    d.set_item("overall", report.overall)?;
    let classes: Vec<(String, usize, usize)> = report
        .per_class
        .iter()
        .map(|r| (r.defect.as_str().to_string(), r.total, r.detected))
        .collect();
    d.set_item("per_class", classes)?;
    let verdicts: Vec<(String, bool, bool, bool)> = report
        .verdicts
        .iter()
        .map(|v| (v.fault.to_string(), v.dc, v.scan, v.bist))
        .collect();
    d.set_item("verdicts", verdicts)?;
    d.set_item("summary", summarize(&report))?;
    Ok(d.into())
}

#[pymodule]
fn lowswing_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(config, m)?)?;
    m.add_function(wrap_pyfunction!(faults, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(test_fault, m)?)?;
    m.add_function(wrap_pyfunction!(campaign, m)?)?;
    Ok(())
}
