//! Python bindings: `import autocw`.
//!
//! Signals and feature matrices cross the boundary as plain lists of floats.

use autocw::acoustics::{self, ImpulseResponse, Signal};
use autocw::compose::{self, SearchConfig, SearchRecord, SearchResult};
use autocw::features::{self, ContextWindowSpec, FeatureConfig};
use autocw::probe::GradientProfile;
use autocw::task::{prepare_task, Task, TaskConfig};
use autocw::TrainConfig;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: autocw::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn signal(samples: Vec<f64>, sample_rate: u32) -> PyResult<Signal> {
    Signal::new(samples, sample_rate).map_err(py_err)
}

/// Context window with `n_past` frames before and `n_future` after the
/// centre frame.
#[pyclass(
    name = "ContextWindow",
    module = "autocw",
    skip_from_py_object,
    frozen,
    eq
)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyContextWindow {
    inner: ContextWindowSpec,
}

#[pymethods]
impl PyContextWindow {
    #[new]
    fn new(n_past: usize, n_future: usize) -> Self {
        Self {
            inner: ContextWindowSpec::new(n_past, n_future),
        }
    }

    #[getter]
    fn n_past(&self) -> usize {
        self.inner.n_past
    }

    #[getter]
    fn n_future(&self) -> usize {
        self.inner.n_future
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Share of context frames on the past side, in percent.
    fn rho_cw(&self) -> PyResult<f64> {
        features::rho_cw(self.inner).map_err(py_err)
    }

    fn offsets(&self) -> Vec<i64> {
        self.inner.offsets().collect()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "ContextWindow({}, {})",
            self.inner.n_past, self.inner.n_future
        )
    }
}

/// Per-offset input-gradient norms over a symmetric probe window.
#[pyclass(
    name = "GradientProfile",
    module = "autocw",
    skip_from_py_object,
    frozen
)]
#[derive(Clone)]
pub struct PyGradientProfile {
    inner: GradientProfile,
}

#[pymethods]
impl PyGradientProfile {
    #[new]
    #[pyo3(signature = (norms, n_minibatches = 1))]
    fn new(norms: Vec<f64>, n_minibatches: usize) -> PyResult<Self> {
        GradientProfile::new(norms, n_minibatches)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        GradientProfile::from_csv(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn cw_max(&self) -> usize {
        self.inner.cw_max()
    }

    #[getter]
    fn norms(&self) -> Vec<f64> {
        self.inner.norms().to_vec()
    }

    fn norm(&self, offset: i64) -> Option<f64> {
        self.inner.norm(offset)
    }

    fn items(&self) -> Vec<(i64, f64)> {
        self.inner.offsets().collect()
    }

    fn past_future_ratio(&self) -> PyResult<f64> {
        self.inner.past_future_ratio().map_err(py_err)
    }

    fn compose(&self, cw_len: usize) -> PyResult<PyContextWindow> {
        compose::compose_window(&self.inner, cw_len)
            .map(|inner| PyContextWindow { inner })
            .map_err(py_err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!("GradientProfile(cw_max={})", self.inner.cw_max())
    }
}

/// Train, dev and test feature sets for one reverberation level.
#[pyclass(name = "Task", module = "autocw", frozen)]
pub struct PyTask {
    inner: Task,
}

#[pymethods]
impl PyTask {
    /// Desk-scale task; the corpus and IR knobs override the desk defaults.
    #[new]
    #[pyo3(signature = (t60 = 0.0, seed = 0, n_utterances = None, n_classes = None, snr_db = None))]
    fn new(
        t60: f64,
        seed: u64,
        n_utterances: Option<usize>,
        n_classes: Option<usize>,
        snr_db: Option<f64>,
    ) -> PyResult<Self> {
        let mut cfg = TaskConfig::desk(t60, seed);
        if let Some(n) = n_utterances {
            cfg.corpus.n_utterances = n;
        }
        if let Some(n) = n_classes {
            cfg.corpus.n_classes = n;
        }
        cfg.snr_db = snr_db;
        prepare_task(&cfg)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.train.first().map_or(0, |m| m.n_features())
    }

    /// Utterance counts as `(train, dev, test)`.
    fn sizes(&self) -> (usize, usize, usize) {
        (
            self.inner.train.len(),
            self.inner.dev.len(),
            self.inner.test.len(),
        )
    }

    fn n_train_frames(&self) -> usize {
        self.inner.train.iter().map(|m| m.n_frames()).sum()
    }
}

/// Hyperparameters for probing and candidate trainings.
#[pyclass(name = "SearchConfig", module = "autocw", skip_from_py_object)]
#[derive(Clone)]
pub struct PySearchConfig {
    inner: SearchConfig,
}

#[pymethods]
impl PySearchConfig {
    #[new]
    #[pyo3(signature = (cw_min, cw_max, hidden = vec![64, 64], max_epochs = 8, batch_size = 32, lr = 0.008, seed = 0, jobs = 1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        cw_min: usize,
        cw_max: usize,
        hidden: Vec<usize>,
        max_epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
        jobs: usize,
    ) -> Self {
        let mut inner = SearchConfig::new(cw_min, cw_max);
        inner.hidden_dims = hidden;
        inner.seed = seed;
        inner.jobs = jobs;
        inner.train = TrainConfig {
            initial_lr: lr,
            batch_size,
            max_epochs,
            seed,
            ..TrainConfig::default()
        };
        Self { inner }
    }

    #[getter]
    fn cw_min(&self) -> usize {
        self.inner.cw_min
    }

    #[getter]
    fn cw_max(&self) -> usize {
        self.inner.cw_max
    }
}

/// One trained candidate window.
#[pyclass(
    name = "SearchRecord",
    module = "autocw",
    skip_from_py_object,
    frozen,
    get_all
)]
#[derive(Clone)]
pub struct PySearchRecord {
    cw_len: usize,
    window: PyContextWindow,
    dev_fer: f64,
    epochs: usize,
}

impl From<&SearchRecord> for PySearchRecord {
    fn from(r: &SearchRecord) -> Self {
        Self {
            cw_len: r.cw_len,
            window: PyContextWindow { inner: r.spec },
            dev_fer: r.dev_fer,
            epochs: r.epochs,
        }
    }
}

#[pymethods]
impl PySearchRecord {
    fn __repr__(&self) -> String {
        format!(
            "SearchRecord({}, dev_fer={:.2})",
            self.window.inner, self.dev_fer
        )
    }
}

#[pyclass(name = "SearchResult", module = "autocw", frozen)]
pub struct PySearchResult {
    inner: SearchResult,
}

#[pymethods]
impl PySearchResult {
    #[getter]
    fn records(&self) -> Vec<PySearchRecord> {
        self.inner.records.iter().map(Into::into).collect()
    }

    #[getter]
    fn best(&self) -> PySearchRecord {
        self.inner.best().into()
    }

    #[getter]
    fn n_full_trainings(&self) -> usize {
        self.inner.n_full_trainings
    }

    #[getter]
    fn n_probe_epochs(&self) -> usize {
        self.inner.n_probe_epochs
    }

    #[getter]
    fn profile(&self) -> Option<PyGradientProfile> {
        self.inner
            .profile
            .clone()
            .map(|inner| PyGradientProfile { inner })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv(false)
    }

    fn __str__(&self) -> String {
        self.inner.summary_line()
    }
}

#[pyfunction]
fn compose_window(profile: &PyGradientProfile, cw_len: usize) -> PyResult<PyContextWindow> {
    profile.compose(cw_len)
}

#[pyfunction]
fn probe_profile(task: &PyTask, cfg: &PySearchConfig) -> PyResult<PyGradientProfile> {
    compose::probe_profile(&task.inner.train, &cfg.inner)
        .map(|inner| PyGradientProfile { inner })
        .map_err(py_err)
}

#[pyfunction]
fn autocw_search(py: Python<'_>, task: &PyTask, cfg: &PySearchConfig) -> PyResult<PySearchResult> {
    let (t, c) = (&task.inner, &cfg.inner);
    py.detach(|| compose::autocw_search(&t.train, &t.dev, c))
        .map(|inner| PySearchResult { inner })
        .map_err(py_err)
}

#[pyfunction]
fn grid_search(py: Python<'_>, task: &PyTask, cfg: &PySearchConfig) -> PyResult<PySearchResult> {
    let (t, c) = (&task.inner, &cfg.inner);
    py.detach(|| compose::grid_search(&t.train, &t.dev, c))
        .map(|inner| PySearchResult { inner })
        .map_err(py_err)
}

/// Exponentially decaying noise IR with a unit direct path.
#[pyfunction]
#[pyo3(signature = (t60, sample_rate = 16000, length = None, seed = 0))]
fn exp_decay_ir(t60: f64, sample_rate: u32, length: Option<f64>, seed: u64) -> PyResult<Vec<f64>> {
    acoustics::exp_decay_ir(t60, sample_rate, length.unwrap_or(t60), seed)
        .map(|h| h.samples().to_vec())
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (ir, sample_rate = 16000))]
fn schroeder_t60(ir: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    let h = ImpulseResponse::from_samples(ir, sample_rate).map_err(py_err)?;
    acoustics::schroeder_t60(&h).map_err(py_err)
}

/// Full linear convolution, length `len(x) + len(h) - 1`.
#[pyfunction]
fn convolve(x: Vec<f64>, h: Vec<f64>) -> Vec<f64> {
    acoustics::fft_convolve(&x, &h)
}

#[pyfunction]
#[pyo3(signature = (y, noise, snr_db, sample_rate = 16000))]
fn mix_noise_at_snr(
    y: Vec<f64>,
    noise: Vec<f64>,
    snr_db: f64,
    sample_rate: u32,
) -> PyResult<Vec<f64>> {
    let y = signal(y, sample_rate)?;
    let v = signal(noise, sample_rate)?;
    acoustics::mix_noise_at_snr(&y, &v, snr_db)
        .map(|s| s.samples().to_vec())
        .map_err(py_err)
}

/// Frame-level features, one row per frame. `kind` is "fbank" or "mfcc".
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 16000, kind = "fbank"))]
fn extract_features(samples: Vec<f64>, sample_rate: u32, kind: &str) -> PyResult<Vec<Vec<f64>>> {
    let cfg = match kind {
        "fbank" => FeatureConfig::fbank(),
        "mfcc" => FeatureConfig::mfcc(),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown feature kind `{other}`"
            )))
        }
    };
    let m = features::extract_features(&signal(samples, sample_rate)?, &cfg).map_err(py_err)?;
    Ok(m.data.outer_iter().map(|r| r.to_vec()).collect())
}

#[pymodule(name = "autocw")]
pub fn autocw_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyContextWindow>()?;
    m.add_class::<PyGradientProfile>()?;
    m.add_class::<PyTask>()?;
    m.add_class::<PySearchConfig>()?;
    m.add_class::<PySearchRecord>()?;
    m.add_class::<PySearchResult>()?;
    m.add_function(wrap_pyfunction!(compose_window, m)?)?;
    m.add_function(wrap_pyfunction!(probe_profile, m)?)?;
    m.add_function(wrap_pyfunction!(autocw_search, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search, m)?)?;
    m.add_function(wrap_pyfunction!(exp_decay_ir, m)?)?;
    m.add_function(wrap_pyfunction!(schroeder_t60, m)?)?;
    m.add_function(wrap_pyfunction!(convolve, m)?)?;
    m.add_function(wrap_pyfunction!(mix_noise_at_snr, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    Ok(())
}
