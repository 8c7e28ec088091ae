use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use scgan::checkpoint::{load_checkpoint, save_checkpoint};
use scgan::config::Experiment;
use scgan::data::{load_pair, make_two_moons_pair, write_pair};
use scgan::eval::target_accuracy;
use scgan::losses::LossReport;
use scgan::networks::{encode, predict};
use scgan::oracle::{gradcheck as run_gradcheck, Fixture, GradcheckSize, DEFAULT_ABS_FLOOR, DEFAULT_EPS, DEFAULT_REL_TOL};
use scgan::trainer::{fit, TrainState};
use scgan::types::{Mat, PseudoLabel};
use scgan::ScganError;

fn to_py(e: ScganError) -> PyErr {
    match e {
        ScganError::Config(_)
        | ScganError::Shape { .. }
        | ScganError::InvalidKey(_)
        | ScganError::LabelOutOfRange { .. }
        | ScganError::InvalidSample(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, width: usize) -> PyResult<Mat> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != width {
            return Err(PyValueError::new_err(format!("row {i} has {} values, expected {width}", r.len())));
        }
        flat.extend(r);
    }
    Ok(Mat::from_shape_vec((n, width), flat).expect("checked shape"))
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Resolved experiment configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: Experiment,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset = "two_moons", overrides = None))]
    fn new(preset: &str, overrides: Option<HashMap<String, String>>) -> PyResult<Self> {
        let mut ov: Vec<(String, String)> = overrides.unwrap_or_default().into_iter().collect();
        ov.sort();
        Experiment::resolve(preset, None, &ov)
            .map(|inner| PyConfig { inner })
            .map_err(to_py)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)?;
        self.inner.run.validate().map_err(to_py)
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv()
    }

    #[getter]
    fn preset(&self) -> String {
        self.inner.preset.clone()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.run.loss_weights.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.run.loss_weights.beta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.run.loss_weights.gamma
    }

    #[getter]
    fn pseudo_threshold(&self) -> f64 {
        self.inner.run.pseudo_threshold
    }

    #[getter]
    fn learning_rate(&self) -> f64 {
        self.inner.run.learning_rate
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }

    /// The synthetic pair described by this config.
    fn make_data(&self) -> PyResult<PyDomainPair> {
        self.inner
            .data
            .generate(self.inner.run.seed)
            .map(|inner| PyDomainPair { inner })
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Config(preset={:?}, seed={})", self.inner.preset, self.inner.run.seed)
    }
}

/// Labeled source samples plus unlabeled target samples.
#[pyclass(name = "DomainPair", from_py_object)]
#[derive(Clone)]
struct PyDomainPair {
    inner: scgan::data::DomainPair,
}

#[pymethods]
impl PyDomainPair {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_pair(&path).map(|inner| PyDomainPair { inner }).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_pair(&path, &self.inner).map_err(to_py)
    }

    fn source_pixels(&self) -> Vec<Vec<f64>> {
        self.inner.source.iter().map(|s| s.pixels().to_vec()).collect()
    }

    fn source_labels(&self) -> Vec<usize> {
        self.inner.source.iter().filter_map(|s| s.label()).collect()
    }

    fn target_pixels(&self) -> Vec<Vec<f64>> {
        self.inner.target.iter().map(|s| s.pixels().to_vec()).collect()
    }

    /// Evaluation-only target labels, if known.
    fn target_labels(&self) -> Option<Vec<usize>> {
        self.inner.target_labels().map(<[usize]>::to_vec)
    }

    fn digest(&self, domain: &str) -> PyResult<String> {
        match domain {
            "source" => Ok(self.inner.digest(scgan::types::Domain::Source)),
            "target" => Ok(self.inner.digest(scgan::types::Domain::Target)),
            _ => Err(PyValueError::new_err("domain must be 'source' or 'target'")),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.source.len() + self.inner.target.len()
    }
}

fn report_dict(r: &LossReport) -> HashMap<String, f64> {
    let mut d: HashMap<String, f64> = r.term_values().iter().map(|&(k, v)| (k.to_string(), v)).collect();
    d.insert("total_g".into(), r.total_g);
    d.insert("total_d".into(), r.total_d);
    d.insert("total_c".into(), r.total_c);
    d.insert("total".into(), r.total);
    d.insert("n_accepted".into(), r.n_accepted as f64);
    d
}

/// Trained parameters with the step they were reached at.
#[pyclass(name = "Model")]
struct PyModel {
    state: TrainState,
    config: Experiment,
    source_only: Option<f64>,
    final_accuracy: Option<f64>,
    pretrain_curve: Vec<f64>,
}

#[pymethods]
impl PyModel {
    /// Pretraining followed by adaptation, as configured.
    #[staticmethod]
    fn fit(py: Python<'_>, config: &PyConfig, data: &PyDomainPair) -> PyResult<Self> {
        let exp = config.inner.clone();
        let pair = data.inner.clone();
        let out = py.detach(move || fit(&exp.run, &pair, None)).map_err(to_py)?;
        Ok(PyModel {
            state: out.state,
            config: config.inner.clone(),
            source_only: out.source_only.map(|a| a.accuracy),
            final_accuracy: out.final_accuracy.map(|a| a.accuracy),
            pretrain_curve: out.pretrain_curve,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf, config: &PyConfig) -> PyResult<Self> {
        let state = load_checkpoint(&path, &config.inner.run).map_err(to_py)?;
        Ok(PyModel {
            state,
            config: config.inner.clone(),
            source_only: None,
            final_accuracy: None,
            pretrain_curve: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.state, &path).map_err(to_py)
    }

    #[getter]
    fn step(&self) -> u64 {
        self.state.step
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.state.params.num_params()
    }

    #[getter]
    fn source_only_accuracy(&self) -> Option<f64> {
        self.source_only
    }

    #[getter]
    fn final_accuracy(&self) -> Option<f64> {
        self.final_accuracy
    }

    #[getter]
    fn pretrain_curve(&self) -> Vec<f64> {
        self.pretrain_curve.clone()
    }

    /// One dict of loss terms per adaptation step.
    fn history(&self) -> Vec<HashMap<String, f64>> {
        self.state.history.iter().map(report_dict).collect()
    }

    fn encode(&self, pixels: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(pixels, self.config.run.image_shape.len())?;
        encode(&self.state.params, &x).map(|z| rows(&z)).map_err(to_py)
    }

    fn predict(&self, pixels: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = matrix(pixels, self.config.run.image_shape.len())?;
        predict(&self.state.params, &x).map_err(to_py)
    }

    fn target_accuracy(&self, data: &PyDomainPair) -> PyResult<f64> {
        target_accuracy(&self.state.params, &data.inner).map(|a| a.accuracy).map_err(to_py)
    }
}

/// `(class_id, confidence, accepted)` for one probability vector.
#[pyfunction]
fn pseudo_label(probs: Vec<f64>, threshold: f64) -> PyResult<(usize, f64, bool)> {
    if probs.is_empty() {
        return Err(PyValueError::new_err("empty probability vector"));
    }
    let p = PseudoLabel::from_probs(&probs, threshold);
    Ok((p.class_id, p.confidence, p.accepted))
}

#[pyfunction]
#[pyo3(signature = (n_per_domain = 500, rotation_deg = 35.0, noise_sd = 0.1, seed = 0))]
fn make_two_moons(n_per_domain: usize, rotation_deg: f64, noise_sd: f64, seed: u64) -> PyResult<PyDomainPair> {
    make_two_moons_pair(n_per_domain, rotation_deg, noise_sd, seed)
        .map(|inner| PyDomainPair { inner })
        .map_err(to_py)
}

/// `(loss, group, n_params, passed, worst_ratio)` rows.
#[pyfunction]
#[pyo3(signature = (size = "TINY", seed = 0))]
fn gradcheck(size: &str, seed: u64) -> PyResult<Vec<(String, String, usize, bool, f64)>> {
    let size: GradcheckSize = size.parse().map_err(PyValueError::new_err)?;
    let fx = Fixture::new(size.config(), seed);
    let table = run_gradcheck(&fx, DEFAULT_EPS, DEFAULT_REL_TOL, DEFAULT_ABS_FLOOR).map_err(to_py)?;
    Ok(table
        .into_iter()
        .map(|r| {
            (
                r.loss.to_string(),
                r.group.to_string(),
                r.n_params,
                r.comparison.passed,
                r.comparison.worst_ratio,
            )
        })
        .collect())
}

#[pymodule]
fn scgan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDomainPair>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(pseudo_label, m)?)?;
    m.add_function(wrap_pyfunction!(make_two_moons, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
