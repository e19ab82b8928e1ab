//! Python bindings. Results come back as plain dicts and lists; configs and
//! anchors are passed as TOML text.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use biphoton::biphoton::solve;
use biphoton::calibration::{calibrate as run_calibration, default_anchors, load_anchors, CalibrationOptions};
use biphoton::config::{load_config, ExperimentConfig};
use biphoton::export::to_json;
use biphoton::pipeline::{analyze_streams, AnalysisOptions};
use biphoton::timestamps::read_timestamps;
use biphoton::Error;

create_exception!(pybiphoton, BiphotonError, PyException);
create_exception!(pybiphoton, ConfigError, BiphotonError);
create_exception!(pybiphoton, NumericalError, BiphotonError);
create_exception!(pybiphoton, StatisticsError, BiphotonError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::ConfigParse(_) | Error::ConfigInvalid { .. } => ConfigError::new_err(msg),
        Error::Numerical(_) => NumericalError::new_err(msg),
        Error::Statistics(_) => StatisticsError::new_err(msg),
        _ => BiphotonError::new_err(msg),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = to_json(v).map_err(py_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn config(text: &str) -> PyResult<ExperimentConfig> {
    load_config(text).map_err(py_err)
}

/// Fingerprint of a configuration given as TOML text.
#[pyfunction]
fn fingerprint(config_toml: &str) -> PyResult<String> {
    Ok(config(config_toml)?.fingerprint())
}

/// Waveform metrics plus `tau_ns` and `intensity` (pairs/s²) arrays.
#[pyfunction]
fn waveform(py: Python<'_>, config_toml: &str) -> PyResult<Py<PyAny>> {
    let cfg = config(config_toml)?;
    let sol = py.detach(|| solve(&cfg)).map_err(py_err)?;
    let out = to_py(py, &sol.metrics)?;
    let d = out.bind(py);
    let w = &sol.waveform;
    let tau: Vec<f64> = (0..w.psi.len()).map(|m| w.tau(m) * 1e9).collect();
    d.set_item("tau_ns", tau)?;
    d.set_item("intensity", w.rate_density.clone())?;
    Ok(out)
}

/// Fits the model to anchors (built-in set when `anchors_toml` is None).
/// The result includes `calibrated_toml` when the fit produced a config.
#[pyfunction]
#[pyo3(signature = (config_toml, anchors_toml=None))]
fn calibrate(py: Python<'_>, config_toml: &str, anchors_toml: Option<&str>) -> PyResult<Py<PyAny>> {
    let cfg = config(config_toml)?;
    let anchors = match anchors_toml {
        Some(t) => load_anchors(t).map_err(py_err)?,
        None => default_anchors(),
    };
    let r = py.detach(|| run_calibration(&cfg, &anchors, &CalibrationOptions::default())).map_err(py_err)?;
    let out = to_py(py, &r)?;
    if let Some(c) = &r.config {
        out.bind(py).set_item("calibrated_toml", c.to_toml())?;
    }
    Ok(out)
}

/// Analyzes a BPHT or CSV timestamp file. Returns the g² summary, the
/// Cauchy-Schwarz check and, with a third channel, conditional g².
#[pyfunction]
#[pyo3(signature = (path, duration_s=None, config_toml=None, bin_width_s=1e-9, window_s=1e-6))]
fn analyze(
    py: Python<'_>,
    path: std::path::PathBuf,
    duration_s: Option<f64>,
    config_toml: Option<&str>,
    bin_width_s: f64,
    window_s: f64,
) -> PyResult<Py<PyAny>> {
    let cfg = config_toml.map(config).transpose()?;
    let opts = AnalysisOptions { bin_width: bin_width_s, window: (-window_s.abs(), window_s.abs()), ..Default::default() };
    let duration = duration_s.map(|d| biphoton::detection::seconds_to_ps(d).max(0) as u64);
    let report = py
        .detach(|| -> biphoton::Result<_> {
            let model = match &cfg {
                Some(c) => Some((c, solve(c)?.metrics.pair_rate)),
                None => None,
            };
            let streams = read_timestamps(&path, duration)?;
            analyze_streams(&streams, model, &opts)
        })
        .map_err(py_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("summary", to_py(py, &report.summary)?)?;
    out.set_item("cs", to_py(py, &report.cs)?)?;
    match &report.g2c {
        Some(g) => out.set_item("g2c", to_py(py, g)?)?,
        None => out.set_item("g2c", py.None())?,
    }
    Ok(out.into_any().unbind())
}

#[pymodule]
fn pybiphoton(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("BiphotonError", py.get_type::<BiphotonError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("StatisticsError", py.get_type::<StatisticsError>())?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(waveform, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
