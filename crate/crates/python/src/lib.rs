//! Python bindings: phantom projects, staged runs and the validation metrics.
//!
//! Reports cross the boundary as JSON and come back as plain dicts.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;
use stentrecon_core::phantom::PhantomConfig;
use stentrecon_core::pipeline::{run_stage as run_one, stages_for_all, PipelineError, Project, ProjectManifest, Stage};
use stentrecon_core::raster::{otsu_threshold as otsu, GrayImage};
use stentrecon_core::surface::read_stl;
use stentrecon_core::validation::{accuracy as accuracy_report, mesh_volume as volume};

fn py_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Input(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(format!("[exit {}] {other}", other.exit_code())),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn load(manifest: &str, overrides: &[String]) -> PyResult<Project> {
    let mut p = Project::load(Path::new(manifest)).map_err(py_err)?;
    p.manifest = p.manifest.with_overrides(overrides).map_err(py_err)?;
    Ok(p)
}

/// Write `<dir>/project.json` for a phantom project and return its path.
#[pyfunction]
#[pyo3(signature = (dir, spacing=0.1))]
fn init_phantom(dir: &str, spacing: f64) -> PyResult<String> {
    let mut cfg = PhantomConfig::default();
    cfg.slice.spacing = spacing;
    let path = Path::new(dir).join("project.json");
    std::fs::create_dir_all(dir).map_err(|e| PyValueError::new_err(e.to_string()))?;
    std::fs::write(&path, ProjectManifest::phantom(cfg, "out").to_json())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(path.to_string_lossy().into_owned())
}

/// Run one stage and return its report.
#[pyfunction]
#[pyo3(signature = (manifest, stage, overrides=Vec::new()))]
fn run_stage<'py>(py: Python<'py>, manifest: &str, stage: &str, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let stage: Stage = stage.parse().map_err(PyValueError::new_err)?;
    let project = load(manifest, &overrides)?;
    let report = py.detach(|| run_one(&project, stage)).map_err(py_err)?;
    to_py(py, &serde_json::to_value(report).expect("report serializes"))
}

/// Run every configured stage in order and return their reports.
#[pyfunction]
#[pyo3(signature = (manifest, overrides=Vec::new()))]
fn run_all<'py>(py: Python<'py>, manifest: &str, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let project = load(manifest, &overrides)?;
    let reports = py
        .detach(|| {
            stages_for_all(&project.manifest)
                .into_iter()
                .map(|s| run_one(&project, s))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(py_err)?;
    to_py(py, &serde_json::to_value(reports).expect("reports serialize"))
}

/// Enclosed volume of a closed STL mesh, mm^3.
#[pyfunction]
fn mesh_volume(path: &str) -> PyResult<f64> {
    let mesh = read_stl(Path::new(path)).map_err(|e| PyValueError::new_err(e.to_string()))?;
    volume(&mesh).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// VA and PA in percent from reconstructed, phantom and overlap volumes.
#[pyfunction]
fn accuracy<'py>(py: Python<'py>, v_r: f64, v_p: f64, v_o: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = accuracy_report(v_r, v_p, v_o).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &serde_json::to_value(r).expect("report serializes"))
}

/// Otsu threshold of a row-major grayscale image.
#[pyfunction]
fn otsu_threshold(pixels: Vec<f64>, width: usize, height: usize) -> PyResult<f64> {
    let img = GrayImage::new(width, height, pixels).map_err(|e| PyValueError::new_err(e.to_string()))?;
    otsu(&img).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn stentrecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(init_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(mesh_volume, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(otsu_threshold, m)?)?;
    Ok(())
}
