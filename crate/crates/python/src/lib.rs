//! Python bindings. Structured values (cue sets, scores, reports) cross the
//! boundary as plain dicts and lists; every failure raises `EmocueError`.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use emocue_core::corpus::{load_corpus, CorpusSchema};
use emocue_core::embed;
use emocue_core::extract::{self, default_templates, StructuredExtractor};
use emocue_core::harness::{self, PairMode};
use emocue_core::metric;
use emocue_core::model::{CueSet, Dimension, EmbeddingVector, EvalSample};
use emocue_core::objectives::{self, AlignmentBatch, EmbeddingSequence, InfoNceDirection, MaskedBatch, Modality};
use emocue_core::textmetrics;

create_exception!(emocue, EmocueError, PyException);

fn fail<E: Into<emocue_core::Error>>(e: E) -> PyErr {
    EmocueError::new_err(e.into().to_string())
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    match value {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_bound_py_any(py),
            (None, Some(f)) => f.into_bound_py_any(py),
            _ => n.to_string().into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &serde_json::to_value(value).map_err(|e| EmocueError::new_err(e.to_string()))?,
    )
}

fn cue_set(map: BTreeMap<String, Vec<String>>) -> PyResult<CueSet> {
    serde_json::to_value(map)
        .and_then(serde_json::from_value)
        .map_err(|e| EmocueError::new_err(format!("invalid cue set: {e}")))
}

fn dimensions(names: Option<Vec<String>>) -> PyResult<Vec<Dimension>> {
    match names {
        None => Ok(Dimension::ALL.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| Dimension::parse(n).ok_or_else(|| EmocueError::new_err(format!("unknown dimension {n:?}"))))
            .collect(),
    }
}

/// Text embedder. Only the offline deterministic embedder is exposed; equal
/// texts after whitespace and case normalization map to equal vectors.
#[pyclass(name = "Embedder", frozen)]
struct PyEmbedder {
    inner: embed::Embedder,
}

#[pymethods]
impl PyEmbedder {
    #[new]
    #[pyo3(signature = (dim = 384))]
    fn new(dim: usize) -> PyResult<Self> {
        Ok(PyEmbedder {
            inner: embed::Embedder::deterministic(dim).map_err(fail)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.spec().dim
    }

    /// Unit-norm vector for `text`.
    fn embed(&self, text: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.embed(text).map_err(fail)?.vector.into())
    }

    fn __repr__(&self) -> String {
        format!("Embedder(dim={})", self.dim())
    }
}

/// Parse `[VISUAL] a; b [AUDIO] c [GLOBAL] d` into a cue-set dict.
#[pyfunction]
fn extract_structured<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &extract::extract_structured(text).map_err(fail)?)
}

/// Precision, recall and F1 between two sets of raw vectors.
#[pyfunction]
fn score_vectors<'py>(
    py: Python<'py>,
    candidate: Vec<Vec<f64>>,
    reference: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let wrap = |rows: Vec<Vec<f64>>| -> PyResult<Vec<EmbeddingVector>> {
        rows.into_iter()
            .map(|r| EmbeddingVector::from_raw(r).map_err(|e| EmocueError::new_err(e.to_string())))
            .collect()
    };
    serialize(
        py,
        &metric::score_dimension(&wrap(candidate)?, &wrap(reference)?).map_err(fail)?,
    )
}

/// Score two cue-set dicts per dimension. Unsupported dimensions map to None.
#[pyfunction]
#[pyo3(signature = (candidate, reference, embedder, supported = None))]
fn score_cues<'py>(
    py: Python<'py>,
    candidate: BTreeMap<String, Vec<String>>,
    reference: BTreeMap<String, Vec<String>>,
    embedder: &PyEmbedder,
    supported: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let sample = EvalSample {
        id: "sample".into(),
        supported_dimensions: dimensions(supported)?.into_iter().collect(),
        candidate_text: String::new(),
        reference_text: String::new(),
        candidate_cues: Some(cue_set(candidate)?),
        reference_cues: Some(cue_set(reference)?),
    };
    let mut vectors = embedder
        .inner
        .embed_cue_set(sample.candidate_cues.as_ref().unwrap())
        .map_err(fail)?;
    vectors.extend(
        embedder
            .inner
            .embed_cue_set(sample.reference_cues.as_ref().unwrap())
            .map_err(fail)?,
    );
    serialize(py, &metric::score_sample(&sample, &vectors).map_err(fail)?)
}

/// Score a JSONL corpus end to end. Missing cue blocks are filled by the
/// structured extractor; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (path, embedder, label = None))]
fn score_corpus<'py>(
    py: Python<'py>,
    path: &str,
    embedder: &PyEmbedder,
    label: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let path = Path::new(path);
    let corpus = load_corpus(path, CorpusSchema::CandidateReference).map_err(fail)?;
    let template = &default_templates()[0];
    let corpus = harness::extract_corpus(&corpus, &StructuredExtractor, template, 1).map_err(fail)?;
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    let mut report = metric::score_corpus(&corpus, &embedder.inner, &label).map_err(fail)?;
    let texts: Vec<(&str, &str)> = corpus
        .samples()
        .iter()
        .map(|s| (s.candidate_text.as_str(), s.reference_text.as_str()))
        .collect();
    report.baselines = Some(textmetrics::corpus_baselines(&texts).map_err(fail)?);
    serialize(py, &report)
}

/// Sentence BLEU-n of `candidate` against one reference.
#[pyfunction]
#[pyo3(signature = (candidate, reference, max_n = 4))]
fn bleu(candidate: &str, reference: &str, max_n: usize) -> PyResult<f64> {
    let refs = [textmetrics::tokenize(reference)];
    Ok(textmetrics::bleu(&textmetrics::tokenize(candidate), &refs, max_n)
        .map_err(fail)?
        .score)
}

/// Corpus means of BLEU-1, BLEU-4 and CIDEr over (candidate, reference) pairs.
#[pyfunction]
fn baselines<'py>(py: Python<'py>, pairs: Vec<(String, String)>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &textmetrics::corpus_baselines(&pairs).map_err(fail)?)
}

fn direction(symmetric: bool) -> InfoNceDirection {
    if symmetric {
        InfoNceDirection::Symmetric
    } else {
        InfoNceDirection::AnchorToTarget
    }
}

/// Cosine InfoNCE with temperature `tau`; returns loss and gradients.
#[pyfunction]
#[pyo3(signature = (anchors, targets, tau, symmetric = false))]
fn infonce_loss<'py>(
    py: Python<'py>,
    anchors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    tau: f64,
    symmetric: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let batch = AlignmentBatch::new(anchors, targets, tau).map_err(fail)?;
    serialize(
        py,
        &objectives::infonce_loss_with(&batch, direction(symmetric)).map_err(fail)?,
    )
}

/// Largest relative error between analytic and central-difference gradients.
#[pyfunction]
#[pyo3(signature = (anchors, targets, tau, step = 1e-5, symmetric = false))]
fn check_infonce(
    anchors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    tau: f64,
    step: f64,
    symmetric: bool,
) -> PyResult<f64> {
    let batch = AlignmentBatch::new(anchors, targets, tau).map_err(fail)?;
    Ok(objectives::check_infonce(&batch, direction(symmetric), step)
        .map_err(fail)?
        .max_relative_error)
}

/// Order-discrimination BCE at probability `p`: (loss, dloss/dp).
#[pyfunction]
fn temporal_bce(p: f64, ordered: bool) -> (f64, f64) {
    let out = objectives::temporal_bce(p, ordered);
    (out.loss, out.grad)
}

/// Masked-frame reconstruction loss: (loss, gradient wrt `predicted`).
#[pyfunction]
fn mfm_loss(original: Vec<Vec<f64>>, predicted: Vec<Vec<f64>>, mask: Vec<usize>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let original = EmbeddingSequence::new(original, Modality::Video).map_err(fail)?;
    let batch = MaskedBatch::new(original, predicted, mask).map_err(fail)?;
    let out = objectives::mfm_loss(&batch);
    Ok((out.loss, out.grad_predicted))
}

/// Seeded pairs of differently worded texts that plant the same cues.
#[pyfunction]
#[pyo3(signature = (n_pairs = 50, seed = 0, overlapping = false))]
fn synthesize_style_pairs<'py>(
    py: Python<'py>,
    n_pairs: usize,
    seed: u64,
    overlapping: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = if overlapping {
        PairMode::Overlapping
    } else {
        PairMode::Identical
    };
    let pairs = harness::synthesize_style_pairs(
        &harness::default_cue_pool(),
        &harness::default_style_templates(),
        n_pairs,
        seed,
        mode,
    )
    .map_err(fail)?;
    serialize(py, &pairs)
}

#[pymodule]
pub fn emocue(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EmocueError", m.py().get_type::<EmocueError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEmbedder>()?;
    m.add_function(wrap_pyfunction!(extract_structured, m)?)?;
    m.add_function(wrap_pyfunction!(score_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(score_cues, m)?)?;
    m.add_function(wrap_pyfunction!(score_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(baselines, m)?)?;
    m.add_function(wrap_pyfunction!(infonce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(check_infonce, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_bce, m)?)?;
    m.add_function(wrap_pyfunction!(mfm_loss, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_style_pairs, m)?)?;
    Ok(())
}
