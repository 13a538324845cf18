//! Python bindings for `trayscan`.
//!
//! Built with maturin as the `trayscan` extension module. Masks cross the
//! boundary as flat `bytes` in row-major order.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use trayscan::backends::{
    Candidate, DetectorScript, ScriptedDetector, ScriptedVerifier, VerifierScript,
};
use trayscan::config::PipelineConfig;
use trayscan::crop::SortConfig;
use trayscan::detect::{self, DetectionConfig};
use trayscan::eval::{self, EvalOptions};
use trayscan::palette::Palette;
use trayscan::pipeline::{Pipeline, RunOptions, StageSummary};

create_exception!(trayscan, TrayscanError, PyException);

fn err(e: trayscan::Error) -> PyErr {
    TrayscanError::new_err(e.to_string())
}

#[pyclass(name = "BBox", module = "trayscan", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyBBox(trayscan::BBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> PyResult<Self> {
        trayscan::BBox::new(x_min, y_min, x_max, y_max)
            .map(PyBBox)
            .map_err(err)
    }

    #[getter]
    fn x_min(&self) -> f64 {
        self.0.x_min
    }

    #[getter]
    fn y_min(&self) -> f64 {
        self.0.y_min
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.0.x_max
    }

    #[getter]
    fn y_max(&self) -> f64 {
        self.0.y_max
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> f64 {
        self.0.height()
    }

    fn area(&self) -> f64 {
        trayscan::box_area(&self.0)
    }

    fn iou(&self, other: PyBBox) -> f64 {
        trayscan::box_iou(&self.0, &other.0)
    }

    fn as_tuple(&self) -> (f64, f64, f64, f64) {
        (self.0.x_min, self.0.y_min, self.0.x_max, self.0.y_max)
    }

    fn __repr__(&self) -> String {
        let b = self.0;
        format!("BBox({}, {}, {}, {})", b.x_min, b.y_min, b.x_max, b.y_max)
    }
}

#[pyfunction]
fn box_iou(a: PyBBox, b: PyBBox) -> f64 {
    trayscan::box_iou(&a.0, &b.0)
}

#[pyfunction]
fn box_area(b: PyBBox) -> f64 {
    trayscan::box_area(&b.0)
}

#[pyclass(name = "Detection", module = "trayscan", frozen, get_all)]
struct PyDetection {
    bbox: PyBBox,
    box_score: f64,
    text_score: f64,
    iteration: u32,
}

#[pymethods]
impl PyDetection {
    fn __repr__(&self) -> String {
        format!(
            "Detection({}, box_score={}, text_score={}, iteration={})",
            self.bbox.__repr__(),
            self.box_score,
            self.text_score,
            self.iteration
        )
    }
}

impl From<detect::Detection> for PyDetection {
    fn from(d: detect::Detection) -> Self {
        PyDetection {
            bbox: PyBBox(d.bbox),
            box_score: d.box_score,
            text_score: d.text_score,
            iteration: d.iteration,
        }
    }
}

#[pyclass(name = "Taxonomy", module = "trayscan", frozen)]
struct PyTaxonomy(trayscan::Taxonomy);

#[pymethods]
impl PyTaxonomy {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        trayscan::Taxonomy::by_name(name)
            .map(PyTaxonomy)
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name().as_str()
    }

    /// `[(class_id, class_name), ...]` including background.
    fn classes(&self) -> Vec<(u8, &'static str)> {
        self.0.classes().collect()
    }

    fn class_id(&self, name: &str) -> Option<u8> {
        self.0.class_id(name)
    }

    fn class_name(&self, id: u8) -> Option<&'static str> {
        self.0.class_name(id)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Taxonomy({:?})", self.name())
    }
}

#[pyclass(name = "LabelMask", module = "trayscan")]
struct PyLabelMask(trayscan::LabelMask);

#[pymethods]
impl PyLabelMask {
    #[new]
    fn new(width: u32, height: u32, labels: Vec<u8>) -> PyResult<Self> {
        trayscan::LabelMask::new(width, height, labels)
            .map(PyLabelMask)
            .map_err(err)
    }

    #[staticmethod]
    fn read_png(path: PathBuf) -> PyResult<Self> {
        trayscan::maskfile::read_mask_png(&path)
            .map(PyLabelMask)
            .map_err(err)
    }

    fn write_png(&self, path: PathBuf, taxonomy: &PyTaxonomy) -> PyResult<()> {
        trayscan::maskfile::write_mask_png(&path, &self.0, &Palette::default_for(&taxonomy.0))
            .map_err(err)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height()
    }

    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.labels())
    }

    fn get(&self, x: u32, y: u32) -> PyResult<u8> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "({x}, {y}) is outside the mask"
            )));
        }
        Ok(self.0.get(x, y))
    }

    fn count(&self, label: u8) -> usize {
        self.0.count(label)
    }

    fn __eq__(&self, other: PyRef<'_, PyLabelMask>) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("LabelMask({}x{})", self.0.width(), self.0.height())
    }
}

/// Keeps `(bbox, box_score, text_score)` candidates passing both thresholds.
#[pyfunction]
#[pyo3(signature = (candidates, box_threshold = 0.3, text_threshold = 0.2, iteration = 0))]
fn filter_candidates(
    candidates: Vec<(PyBBox, f64, f64)>,
    box_threshold: f64,
    text_threshold: f64,
    iteration: u32,
) -> Vec<PyDetection> {
    let config = DetectionConfig {
        box_threshold,
        text_threshold,
        ..Default::default()
    };
    let cands: Vec<Candidate> = candidates
        .into_iter()
        .map(|(b, s, t)| Candidate::new(b.0, s, t))
        .collect();
    detect::filter_candidates(&cands, &config, iteration)
        .into_iter()
        .map(Into::into)
        .collect()
}

/// `"YES"`, `"NO"` or `None` from the final word of a verifier answer.
#[pyfunction]
fn parse_verdict(answer: &str) -> Option<&'static str> {
    detect::parse_verdict(answer).map(|a| match a {
        detect::Answer::Yes => "YES",
        detect::Answer::No => "NO",
    })
}

#[pyfunction]
#[pyo3(signature = (boxes, row_tolerance_factor = 0.5))]
fn sort_reading_order(boxes: Vec<PyBBox>, row_tolerance_factor: f64) -> PyResult<Vec<usize>> {
    let config = SortConfig {
        row_tolerance_factor,
        ..Default::default()
    };
    config.validate().map_err(err)?;
    let boxes: Vec<trayscan::BBox> = boxes.into_iter().map(|b| b.0).collect();
    Ok(trayscan::crop::sort_reading_order(&boxes, &config))
}

/// Runs the detection loop on an image file with scripted backends.
#[pyfunction]
#[pyo3(signature = (image_path, detector_script, verifier_script, max_iterations = 20))]
fn run_scripted_detection<'py>(
    py: Python<'py>,
    image_path: PathBuf,
    detector_script: PathBuf,
    verifier_script: PathBuf,
    max_iterations: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let outcome = py
        .detach(|| -> trayscan::Result<_> {
            let image = image::open(&image_path)
                .map_err(|e| trayscan::Error::Input(format!("{}: {e}", image_path.display())))?
                .to_rgb8();
            let mut detector = ScriptedDetector::new(DetectorScript::load(&detector_script)?)?;
            let mut verifier = ScriptedVerifier::new(VerifierScript::load(&verifier_script)?)?;
            let config = DetectionConfig {
                max_iterations,
                ..Default::default()
            };
            detect::run_iterative_detection(&image, &mut detector, &mut verifier, &config)
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    let dets: Vec<PyDetection> = outcome.detections.into_iter().map(Into::into).collect();
    out.set_item("detections", dets)?;
    out.set_item("iterations_used", outcome.iterations_used)?;
    let verdict = match outcome.verdict {
        detect::Verdict::VerifiedClear => "VERIFIED_CLEAR",
        detect::Verdict::FlaggedResidual => "FLAGGED_RESIDUAL",
        detect::Verdict::FlaggedUnparseable => "FLAGGED_UNPARSEABLE",
        detect::Verdict::FlaggedMaxIterations => "FLAGGED_MAX_ITERATIONS",
    };
    out.set_item("verdict", verdict)?;
    out.set_item("raw_verifier_answer", outcome.raw_verifier_answer)?;
    Ok(out)
}

#[pyfunction]
fn class_iou(pred: &PyLabelMask, gt: &PyLabelMask, class_id: u8) -> PyResult<Option<f64>> {
    eval::class_iou(&pred.0, &gt.0, class_id).map_err(err)
}

/// Returns `({class_name: iou_or_None}, miou_or_None)`.
#[pyfunction]
#[pyo3(signature = (pred, gt, taxonomy, absent_as_one = false))]
fn image_miou<'py>(
    py: Python<'py>,
    pred: &PyLabelMask,
    gt: &PyLabelMask,
    taxonomy: &PyTaxonomy,
    absent_as_one: bool,
) -> PyResult<(Bound<'py, PyDict>, Option<f64>)> {
    let (row, miou) =
        eval::image_miou_with(&pred.0, &gt.0, &taxonomy.0, EvalOptions { absent_as_one })
            .map_err(err)?;
    let per_class = PyDict::new(py);
    for c in row {
        per_class.set_item(c.class, c.iou)?;
    }
    Ok((per_class, miou))
}

/// Takes `[(tray_id, detected, ground_truth), ...]`.
#[pyfunction]
fn count_accuracy<'py>(
    py: Python<'py>,
    trays: Vec<(String, usize, usize)>,
) -> PyResult<Bound<'py, PyDict>> {
    let trays: Vec<eval::TrayCount> = trays
        .into_iter()
        .map(|(tray_id, detected, ground_truth)| eval::TrayCount {
            tray_id,
            detected,
            ground_truth,
        })
        .collect();
    let report = eval::count_accuracy(&trays).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("total_trays", report.total_trays)?;
    out.set_item("exact_matches", report.exact_matches)?;
    out.set_item("over_count_trays", report.over_count_trays)?;
    out.set_item("under_count_trays", report.under_count_trays)?;
    out.set_item("accuracy", report.accuracy)?;
    out.set_item("accuracy_display", report.accuracy_display())?;
    let deltas = PyList::empty(py);
    for d in &report.deltas {
        deltas.append((d.tray_id.as_str(), d.detected, d.ground_truth, d.delta))?;
    }
    out.set_item("deltas", deltas)?;
    Ok(out)
}

fn summary_dict<'py>(py: Python<'py>, s: &StageSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("stage", s.stage.map(|st| st.name()))?;
    d.set_item("done", &s.done)?;
    d.set_item("flagged", &s.flagged)?;
    d.set_item("failed", &s.failed)?;
    d.set_item("refused", &s.refused)?;
    d.set_item("resumed", &s.resumed)?;
    Ok(d)
}

/// Runs one stage (`detect`, `crop`, `segment`) or `run-all` from a TOML
/// config. Returns one summary dict per stage that ran.
#[pyfunction]
#[pyo3(signature = (config_path, stage = "run-all", trays = None, resume = false, output_dir = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    stage: &str,
    trays: Option<String>,
    resume: bool,
    output_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let stage = stage.to_owned();
    let summaries = py
        .detach(move || -> trayscan::Result<Vec<StageSummary>> {
            let mut config = PipelineConfig::load(&config_path)?;
            if let Some(out) = output_dir {
                config.output_dir = out;
            }
            let pipeline = Pipeline::new(config)?;
            let opts = RunOptions { trays, resume };
            match stage.as_str() {
                "detect" => Ok(vec![pipeline.detect(&opts)?]),
                "crop" => Ok(vec![pipeline.crop(&opts)?]),
                "segment" => Ok(vec![pipeline.segment(&opts)?]),
                "run-all" => pipeline.run_all(&opts),
                other => Err(trayscan::Error::Config(format!("unknown stage {other:?}"))),
            }
        })
        .map_err(err)?;
    summaries.iter().map(|s| summary_dict(py, s)).collect()
}

#[pymodule(name = "trayscan")]
fn trayscan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrayscanError", m.py().get_type::<TrayscanError>())?;
    m.add_class::<PyBBox>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyTaxonomy>()?;
    m.add_class::<PyLabelMask>()?;
    m.add_function(wrap_pyfunction!(box_iou, m)?)?;
    m.add_function(wrap_pyfunction!(box_area, m)?)?;
    m.add_function(wrap_pyfunction!(filter_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(parse_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(sort_reading_order, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted_detection, m)?)?;
    m.add_function(wrap_pyfunction!(class_iou, m)?)?;
    m.add_function(wrap_pyfunction!(image_miou, m)?)?;
    m.add_function(wrap_pyfunction!(count_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
