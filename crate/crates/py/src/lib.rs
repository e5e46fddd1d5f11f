//! Python bindings: cohorts, configs, trained artifacts and the experiment driver.

use std::path::PathBuf;

use painvas::data::{
    generate_synthetic_cohort, load_cohort, save_cohort, split_subject_independent, Cohort as CoreCohort,
    SequenceRecord, SyntheticConfig,
};
use painvas::pipeline::{
    run_alpha_experiment, run_inference, run_learning, write_experiment, Artifacts as CoreArtifacts, ExperimentConfig,
    FirstStage,
};
use painvas::{metrics, personalization, pspi};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: painvas::Error) -> PyErr {
    let io = matches!(&e, painvas::Error::Io { .. })
        || matches!(&e, painvas::Error::Stage { source, .. } if matches!(**source, painvas::Error::Io { .. }));
    if io {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Experiment configuration; every field has a default.
#[pyclass(name = "ExperimentConfig", module = "painvas_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Builds a config from a (possibly partial) JSON object string.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner: ExperimentConfig = match json {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ExperimentConfig::default(),
        };
        inner.validate().map_err(err)?;
        Ok(PyConfig { inner })
    }

    /// Loads a config file or the manifest.json of an earlier run.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::load(&path).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn first_stage(&self) -> &'static str {
        self.inner.first_stage.name()
    }

    #[setter]
    fn set_first_stage(&mut self, name: &str) -> PyResult<()> {
        self.inner.first_stage = name.parse::<FirstStage>().map_err(err)?;
        Ok(())
    }

    #[getter]
    fn alphas(&self) -> Vec<usize> {
        self.inner.alphas.clone()
    }

    #[setter]
    fn set_alphas(&mut self, alphas: Vec<usize>) {
        self.inner.alphas = alphas;
    }

    #[getter]
    fn repetitions(&self) -> usize {
        self.inner.repetitions
    }

    #[setter]
    fn set_repetitions(&mut self, r: usize) {
        self.inner.repetitions = r;
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(first_stage={:?}, seed={}, alphas={:?}, repetitions={})",
            self.inner.first_stage.name(),
            self.inner.seed,
            self.inner.alphas,
            self.inner.repetitions
        )
    }
}

/// A validated cohort of persons and their labelled sequences.
#[pyclass(name = "Cohort", module = "painvas_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCohort {
    inner: CoreCohort,
}

#[pymethods]
impl PyCohort {
    /// Generates a synthetic cohort; `config` is a partial JSON object string.
    #[staticmethod]
    #[pyo3(signature = (seed = 0, config = None))]
    fn synthetic(seed: u64, config: Option<&str>) -> PyResult<Self> {
        let cfg: SyntheticConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => SyntheticConfig::default(),
        };
        Ok(PyCohort {
            inner: generate_synthetic_cohort(&cfg, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        Ok(PyCohort {
            inner: load_cohort(&manifest).map_err(err)?,
        })
    }

    /// Writes the manifest and sequence CSVs; returns the manifest path.
    fn save(&self, dir: PathBuf) -> PyResult<String> {
        let path = save_cohort(&self.inner, &dir).map_err(err)?;
        Ok(path.display().to_string())
    }

    #[getter]
    fn person_ids(&self) -> Vec<String> {
        self.inner.persons.iter().map(|p| p.person_id.clone()).collect()
    }

    #[getter]
    fn num_sequences(&self) -> usize {
        self.inner.num_sequences()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim
    }

    fn __len__(&self) -> usize {
        self.inner.persons.len()
    }

    /// One sequence as a dict with `id`, `frames`, `pspi`, `vas`, `opi`.
    fn sequence<'py>(&self, py: Python<'py>, person_id: &str, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let seq = self.person(person_id)?.sequences.get(index).ok_or_else(|| {
            PyValueError::new_err(format!("person {person_id} has no sequence {index}"))
        })?;
        to_py(py, seq)
    }

    /// `(opi, vas)` for every sequence of a person.
    fn label_pairs(&self, person_id: &str) -> PyResult<Vec<(u8, u8)>> {
        Ok(self.person(person_id)?.label_pairs())
    }

    /// Subject-independent split into `(train, test)`.
    fn split(&self, n_train: usize, seed: u64) -> PyResult<(PyCohort, PyCohort)> {
        let (a, b) = split_subject_independent(&self.inner, n_train, seed).map_err(err)?;
        Ok((PyCohort { inner: a }, PyCohort { inner: b }))
    }

    fn __repr__(&self) -> String {
        format!(
            "Cohort(persons={}, sequences={}, feature_dim={})",
            self.inner.persons.len(),
            self.inner.num_sequences(),
            self.inner.feature_dim
        )
    }
}

impl PyCohort {
    fn person(&self, id: &str) -> PyResult<&painvas::data::PersonRecord> {
        self.inner
            .persons
            .iter()
            .find(|p| p.person_id == id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown person {id}")))
    }
}

/// Trained first stage, PCA, I-FES table and HCRF.
#[pyclass(name = "Artifacts", module = "painvas_py")]
struct PyArtifacts {
    inner: CoreArtifacts,
}

fn frames_record(frames: Vec<Vec<f64>>, pspi: Option<Vec<u8>>) -> SequenceRecord {
    let n = frames.len();
    SequenceRecord {
        id: "input".into(),
        frames,
        pspi: pspi.unwrap_or_else(|| vec![0; n]),
        au: None,
        vas: 0,
        opi: 0,
    }
}

#[pymethods]
impl PyArtifacts {
    /// Runs the learning phase on `train`.
    #[staticmethod]
    fn train(py: Python<'_>, config: &PyConfig, train: &PyCohort) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let cohort = train.inner.clone();
        let inner = py.detach(move || run_learning(&cfg, &cohort)).map_err(err)?;
        Ok(PyArtifacts { inner })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyArtifacts {
            inner: CoreArtifacts::load(&dir).map_err(err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<Vec<String>> {
        let files = self.inner.save(&dir).map_err(err)?;
        Ok(files.iter().map(|p| p.display().to_string()).collect())
    }

    #[getter]
    fn first_stage(&self) -> &'static str {
        self.inner.first_stage.name()
    }

    #[getter]
    fn regularization(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn pca_components(&self) -> usize {
        self.inner.pca.n_components()
    }

    /// Training-person I-FES scores as dicts.
    #[getter]
    fn train_ifes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.train_ifes)
    }

    /// Per-frame PSPI estimate in `[0, 1]`, or `None` for the raw-feature stage.
    /// `pspi` supplies labels for the ground-truth stage.
    #[pyo3(signature = (frames, pspi = None))]
    fn estimate_pspi(&self, frames: Vec<Vec<f64>>, pspi: Option<Vec<u8>>) -> PyResult<Option<Vec<f64>>> {
        self.inner.estimate_pspi(&frames_record(frames, pspi)).map_err(err)
    }

    /// VAS level for one landmark sequence given the person's I-FES.
    #[pyo3(signature = (frames, ifes, pspi = None))]
    fn predict_vas(&self, frames: Vec<Vec<f64>>, ifes: f64, pspi: Option<Vec<u8>>) -> PyResult<usize> {
        let stage = self.inner.stage_features(&frames_record(frames, pspi)).map_err(err)?;
        self.inner
            .hcrf
            .predict_vas(&CoreArtifacts::hcrf_input(&stage, ifes))
            .map_err(err)
    }

    /// Predicts every sequence of a person not used for its I-FES.
    fn infer<'py>(
        &self,
        py: Python<'py>,
        cohort: &PyCohort,
        person_id: &str,
        alpha: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let person = cohort.person(person_id)?;
        let out = run_inference(&self.inner, person, alpha, seed).map_err(err)?;
        to_py(py, &out)
    }
}

#[pyfunction]
fn compute_pspi(au4: u8, au6: u8, au7: u8, au9: u8, au10: u8, au43: u8) -> PyResult<u8> {
    let au = pspi::AuVector::new(au4, au6, au7, au9, au10, au43).map_err(err)?;
    Ok(pspi::compute_pspi(&au))
}

#[pyfunction]
#[pyo3(signature = (score, max_pspi = 16))]
fn scale_pspi(score: u8, max_pspi: u8) -> PyResult<f64> {
    pspi::scale_pspi(score, max_pspi).map_err(err)
}

/// I-FES from `(opi, vas)` pairs; returns a dict.
#[pyfunction]
fn compute_ifes<'py>(
    py: Python<'py>,
    person_id: &str,
    pairs: Vec<(u8, u8)>,
    alpha: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &personalization::compute_ifes(person_id, &pairs, alpha, seed).map_err(err)?)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&pred, &truth).map_err(err)
}

/// ICC(3,1), or `None` when undefined.
#[pyfunction]
fn icc31(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<Option<f64>> {
    metrics::icc31(&pred, &truth).map_err(err)
}

/// Full alpha sweep; returns the report dict and optionally writes the run directory.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn run_experiment<'py>(py: Python<'py>, config: &PyConfig, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let outcome = py.detach(|| run_alpha_experiment(&cfg)).map_err(err)?;
    if let Some(dir) = out_dir {
        write_experiment(&dir, &cfg, &outcome).map_err(err)?;
    }
    to_py(py, &outcome.report)
}

#[pymodule]
fn painvas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCohort>()?;
    m.add_class::<PyArtifacts>()?;
    m.add_function(wrap_pyfunction!(compute_pspi, m)?)?;
    m.add_function(wrap_pyfunction!(scale_pspi, m)?)?;
    m.add_function(wrap_pyfunction!(compute_ifes, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(icc31, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
