//! Python bindings. Masks cross the boundary as nested lists of booleans
//! (anything that iterates rows of truthy values works, numpy included);
//! the file-based entry points mirror the `roadex` command line.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roadex::error::{Error, Stage};
use roadex::eval::{evaluate, evaluate_area, EvalReport};
use roadex::pipeline::{run_pipeline, InputPaths, Manifest};
use roadex::raster::BinaryMask;
use roadex::synth::{presets, render};
use roadex::{io, PipelineConfig};

fn py_err(e: Error) -> PyErr {
    match e.stage() {
        Some(Stage::Io) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mask(rows: Vec<Vec<bool>>) -> PyResult<BinaryMask> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("mask rows must have equal length"));
    }
    BinaryMask::from_vec(w, h, rows.into_iter().flatten().collect()).map_err(py_err)
}

type Rows = Vec<Vec<bool>>;

fn rows(m: &BinaryMask) -> Rows {
    m.as_slice().chunks(m.width()).map(<[bool]>::to_vec).collect()
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let value = serde_json::to_value(r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    for (k, v) in value.as_object().into_iter().flatten() {
        match v {
            serde_json::Value::Bool(b) => d.set_item(k, *b)?,
            serde_json::Value::String(s) => d.set_item(k, s)?,
            serde_json::Value::Number(n) if n.is_u64() => d.set_item(k, n.as_u64())?,
            serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
            other => d.set_item(k, other.to_string())?,
        }
    }
    Ok(d)
}

fn config(overrides: Option<HashMap<String, String>>) -> PyResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    let mut pairs: Vec<_> = overrides.unwrap_or_default().into_iter().collect();
    pairs.sort();
    for (k, v) in pairs {
        cfg.set(&k, &v).map_err(|e| py_err(e.at(Stage::Config)))?;
    }
    cfg.validate().map_err(|e| py_err(e.at(Stage::Config)))?;
    Ok(cfg)
}

/// Default configuration as a key to value-string mapping.
#[pyfunction]
fn default_config() -> std::collections::BTreeMap<String, String> {
    PipelineConfig::default().entries()
}

/// Buffer-matched completeness, correctness and quality of two masks.
#[pyfunction]
#[pyo3(signature = (prediction, reference, rho = 2.0))]
fn evaluate_masks<'py>(
    py: Python<'py>,
    prediction: Vec<Vec<bool>>,
    reference: Vec<Vec<bool>>,
    rho: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = evaluate("masks", &mask(prediction)?, &mask(reference)?, rho).map_err(py_err)?;
    report_dict(py, &r)
}

/// Pixel-exact area comparison of two masks.
#[pyfunction]
fn evaluate_area_masks<'py>(
    py: Python<'py>,
    prediction: Vec<Vec<bool>>,
    reference: Vec<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = evaluate_area("masks", &mask(prediction)?, &mask(reference)?).map_err(py_err)?;
    report_dict(py, &r)
}

/// Render a preset scene. Returns `(road, centerline)` masks and writes the
/// image/road/centerline triple to `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (preset = "curve", size = 400, width = 12.0, occlusion = 0.2, noise = 8.0, seed = 0, out_dir = None, id = "scene"))]
#[allow(clippy::too_many_arguments)]
fn synth(
    preset: &str,
    size: usize,
    width: f64,
    occlusion: f64,
    noise: f64,
    seed: u64,
    out_dir: Option<PathBuf>,
    id: &str,
) -> PyResult<(Rows, Rows)> {
    let spec = match preset {
        "straight" => presets::straight_road(size, width, noise, seed),
        "curve" => presets::occluded_curve(size, width, occlusion, noise, seed),
        other => return Err(PyValueError::new_err(format!("unknown preset '{other}'"))),
    };
    let scene = render(&spec).map_err(py_err)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        io::save_image(dir.join(format!("{id}.png")), &scene.image).map_err(py_err)?;
        io::save_mask(dir.join(format!("{id}_road.png")), &scene.road).map_err(py_err)?;
        io::save_mask(dir.join(format!("{id}_centerline.png")), &scene.centerline).map_err(py_err)?;
    }
    Ok((rows(&scene.road), rows(&scene.centerline)))
}

/// Full pipeline on image files. Returns the evaluation report, or `None`
/// without a centerline reference.
#[pyfunction]
#[pyo3(signature = (image, out_dir, road = None, centerline = None, train = None, config = None))]
fn run<'py>(
    py: Python<'py>,
    image: PathBuf,
    out_dir: PathBuf,
    road: Option<PathBuf>,
    centerline: Option<PathBuf>,
    train: Option<PathBuf>,
    config: Option<HashMap<String, String>>,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let cfg = self::config(config)?;
    let id = image.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
    let paths = InputPaths { image, train, road_ref: road, centerline_ref: centerline };
    let inputs = paths.load(&id).map_err(py_err)?;
    let mut manifest = Manifest::new("python", &id, &cfg);
    paths.record(&mut manifest).map_err(py_err)?;
    let out = py.detach(|| run_pipeline(&inputs, &cfg, &out_dir, manifest)).map_err(py_err)?;
    out.report.as_ref().map(|r| report_dict(py, r)).transpose()
}

#[pymodule]
#[pyo3(name = "roadex")]
fn roadex_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_masks, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_area_masks, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
