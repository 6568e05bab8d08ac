//! Python bindings: experiment configuration and runs, image metrology,
//! mass models, statistics and the five variety classifiers.

use std::path::PathBuf;

use apricot_core::anfis::{fcm as fcm_core, FcmParams};
use apricot_core::classifiers::{evaluate_labels, ModelKind, SavedModel};
use apricot_core::imaging::{self, CalibrationScale, GrayImage};
use apricot_core::massmodel::{self, LinearModel};
use apricot_core::pipeline::{self, fit_classifier, ExperimentConfig};
use apricot_core::stats;
use apricot_core::synthgen::{default_varieties, render_views, sample_fruit, DEFAULT_MASS_NOISE};
use apricot_core::Variety;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(apricot, ApricotError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ApricotError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(err)
}

/// Experiment configuration; every field has a default.
#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(s) => ExperimentConfig::from_toml_str(s).map_err(err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::load(path).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn repeats(&self) -> usize {
        self.inner.repeats
    }

    #[setter]
    fn set_repeats(&mut self, v: usize) -> PyResult<()> {
        if v == 0 {
            return Err(err("repeats must be ≥ 1"));
        }
        self.inner.repeats = v;
        Ok(())
    }

    #[getter]
    fn samples_per_variety(&self) -> usize {
        self.inner.samples_per_variety
    }

    #[setter]
    fn set_samples_per_variety(&mut self, v: usize) {
        self.inner.samples_per_variety = v;
    }

    #[getter]
    fn models(&self) -> Vec<String> {
        self.inner.models.iter().map(|m| m.to_string()).collect()
    }

    #[setter]
    fn set_models(&mut self, v: Vec<String>) -> PyResult<()> {
        let kinds = v.iter().map(|s| s.parse()).collect::<Result<Vec<ModelKind>, _>>().map_err(err)?;
        if kinds.is_empty() {
            return Err(err("model roster is empty"));
        }
        self.inner.models = kinds;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(seed={}, repeats={}, samples_per_variety={}, models={:?})",
            self.inner.seed,
            self.inner.repeats,
            self.inner.samples_per_variety,
            self.models()
        )
    }
}

/// Linear mass model `W₀ + Σ Wᵢ·Fᵢ` over L, W, T, PA1, PA2, PA3.
#[pyclass(name = "MassModel", from_py_object)]
#[derive(Clone)]
struct PyMassModel {
    inner: LinearModel,
}

#[pymethods]
impl PyMassModel {
    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.to_vec()
    }

    #[getter]
    fn features(&self) -> String {
        self.inner.mask_label()
    }

    fn predict(&self, x: [f64; 6]) -> f64 {
        self.inner.predict(&x)
    }

    fn __repr__(&self) -> String {
        format!("MassModel({}, intercept={:.4})", self.inner.mask_label(), self.inner.intercept)
    }
}

/// A trained variety classifier; inputs are raw 7-feature rows.
#[pyclass(name = "Classifier")]
struct PyClassifier {
    inner: SavedModel,
}

#[pymethods]
impl PyClassifier {
    /// Trains `kind` (`mlp`, `rbf`, `anfis-grid`, `anfis-sub`, `anfis-fcm`).
    #[staticmethod]
    #[pyo3(signature = (kind, xs, labels, classes = 5, seed = 0, config = None))]
    fn train(
        kind: &str,
        xs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: usize,
        seed: u64,
        config: Option<PyConfig>,
    ) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(err)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(err(format!("label {bad} out of range for {classes} classes")));
        }
        let cfg = config.map(|c| c.inner).unwrap_or_default();
        let (inner, _, _) = fit_classifier(kind, (&xs, &labels), None, classes, &cfg, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(s).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.scores_raw(&x))
    }

    fn predict(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        xs.iter()
            .map(|x| {
                self.check(x)?;
                Ok(self.inner.predict_raw(x))
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Classifier({})", self.inner.kind)
    }
}

impl PyClassifier {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        match &self.inner.normalizer {
            Some(n) if n.input_dim() != x.len() => {
                Err(err(format!("expected {} features, got {}", n.input_dim(), x.len())))
            }
            _ => Ok(()),
        }
    }
}

/// Runs the full experiment, writing artifacts under `out_dir`; returns the
/// report as JSON.
#[pyfunction]
fn run_experiment(config: &PyConfig, out_dir: PathBuf) -> PyResult<String> {
    json(&pipeline::run_experiment(&config.inner, &out_dir).map_err(err)?)
}

/// Text table of a JSON report produced by `run_experiment`.
#[pyfunction]
fn render_report(report_json: &str) -> PyResult<String> {
    let report: pipeline::ExperimentReport = serde_json::from_str(report_json).map_err(err)?;
    Ok(pipeline::render_text(&report))
}

/// Synthesizes one fruit of `variety` and renders its three views; returns
/// `(ground truth JSON, [(width, height, pixels)] × 3)`.
#[pyfunction]
#[pyo3(signature = (variety, seed, config = None))]
#[allow(clippy::type_complexity)]
fn synth_fruit(variety: &str, seed: u64, config: Option<PyConfig>) -> PyResult<(String, Vec<(usize, usize, Vec<u8>)>)> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let params = default_varieties()
        .into_iter()
        .find(|p| p.variety.name().eq_ignore_ascii_case(variety))
        .ok_or_else(|| err(format!("unknown variety '{variety}'")))?;
    let fruit = sample_fruit(&params.with_std_scale(cfg.std_scale), seed, DEFAULT_MASS_NOISE).map_err(err)?;
    let views = render_views(&fruit, &cfg.render).map_err(err)?;
    Ok((
        json(&fruit)?,
        views.iter().map(|v| (v.width(), v.height(), v.pixels().to_vec())).collect(),
    ))
}

fn image(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<GrayImage> {
    GrayImage::new(width, height, pixels).map_err(err)
}

#[pyfunction]
fn otsu_threshold(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<u8> {
    imaging::otsu_threshold(&image(width, height, pixels)?).map_err(err)
}

/// `[L, W, T, PA1, PA2, PA3]` from three `(width, height, pixels)` views.
#[pyfunction]
fn extract_features(views: [(usize, usize, Vec<u8>); 3], mm_per_pixel: f64) -> PyResult<[f64; 6]> {
    let [a, b, c] = views;
    let imgs = [image(a.0, a.1, a.2)?, image(b.0, b.1, b.2)?, image(c.0, c.1, c.2)?];
    let scale = CalibrationScale::from_mm_per_pixel(mm_per_pixel).map_err(err)?;
    Ok(imaging::extract_features(&imgs, &scale).map_err(err)?.to_array())
}

/// Least-squares mass model on the features flagged in `active` (all six
/// when omitted).
#[pyfunction]
#[pyo3(signature = (features, masses, active = None))]
fn fit_mass(features: Vec<[f64; 6]>, masses: Vec<f64>, active: Option<[bool; 6]>) -> PyResult<PyMassModel> {
    let inner = massmodel::fit_least_squares(&features, &masses, active.unwrap_or([true; 6])).map_err(err)?;
    Ok(PyMassModel { inner })
}

/// `(F, p)` of a one-way ANOVA.
#[pyfunction]
fn anova(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let a = stats::anova_oneway(&groups).map_err(err)?;
    Ok((a.f, a.p))
}

/// Compact letter display from Tukey HSD at level `alpha`.
#[pyfunction]
#[pyo3(signature = (groups, alpha = 0.01))]
fn letter_groups(groups: Vec<Vec<f64>>, alpha: f64) -> PyResult<Vec<String>> {
    stats::letter_groups(&groups, alpha).map_err(err)
}

/// `(centers, memberships, objective history)` of fuzzy C-means.
#[pyfunction]
#[pyo3(signature = (data, clusters, seed = 0, fuzzifier = 2.0))]
#[allow(clippy::type_complexity)]
fn fcm(data: Vec<Vec<f64>>, clusters: usize, seed: u64, fuzzifier: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let params = FcmParams {
        clusters,
        fuzzifier,
        ..FcmParams::default()
    };
    let r = fcm_core(&data, &params, seed).map_err(err)?;
    Ok((r.centers, r.memberships, r.objective))
}

/// Confusion matrix, per-class recall (None when a class is absent),
/// accuracy and mean recall, all in percent.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn evaluate(truth: Vec<usize>, predicted: Vec<usize>, classes: usize) -> PyResult<(Vec<Vec<usize>>, Vec<Option<f64>>, f64, f64)> {
    let r = evaluate_labels(&truth, &predicted, classes).map_err(err)?;
    Ok((r.confusion, r.recall, r.accuracy, r.mean_recall))
}

#[pymodule]
fn apricot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ApricotError", m.py().get_type::<ApricotError>())?;
    m.add("VARIETIES", Variety::ALL.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    m.add("MODELS", ModelKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMassModel>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(synth_fruit, m)?)?;
    m.add_function(wrap_pyfunction!(otsu_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mass, m)?)?;
    m.add_function(wrap_pyfunction!(anova, m)?)?;
    m.add_function(wrap_pyfunction!(letter_groups, m)?)?;
    m.add_function(wrap_pyfunction!(fcm, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
