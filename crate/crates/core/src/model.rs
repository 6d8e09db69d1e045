//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, NumericError};

/// Version tag written into every serialized [`MetricReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CueError {
    #[error("cue text is empty after trimming")]
    EmptyCue,
}

/// One of the three cue categories a description is decomposed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Visual,
    Audio,
    Global,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Visual, Dimension::Audio, Dimension::Global];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Visual => "visual",
            Dimension::Audio => "audio",
            Dimension::Global => "global",
        }
    }

    /// Column heading used in rendered tables.
    pub fn heading(self) -> &'static str {
        match self {
            Dimension::Visual => "Vis-Emo",
            Dimension::Audio => "Aud-Emo",
            Dimension::Global => "Glo-Emo",
        }
    }

    pub fn parse(s: &str) -> Option<Dimension> {
        match s.trim().to_lowercase().as_str() {
            "visual" => Some(Dimension::Visual),
            "audio" => Some(Dimension::Audio),
            "global" => Some(Dimension::Global),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Trim and collapse internal whitespace runs to a single space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity of a cue for deduplication, caching and the test embedder:
/// whitespace-normalized and case-folded.
pub fn cue_key(text: &str) -> String {
    normalize_whitespace(text).to_lowercase()
}

/// The smallest unit of emotional evidence, e.g. "furrowed brows".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomicCue(String);

impl AtomicCue {
    pub fn new(text: &str) -> Result<Self, CueError> {
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(CueError::EmptyCue);
        }
        Ok(AtomicCue(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn key(&self) -> String {
        self.0.to_lowercase()
    }
}

impl fmt::Display for AtomicCue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Cues of one description split by dimension. Exact duplicates (after
/// normalization) are collapsed, keeping the first occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCueSet", into = "RawCueSet")]
pub struct CueSet {
    visual: Vec<AtomicCue>,
    audio: Vec<AtomicCue>,
    global: Vec<AtomicCue>,
}

#[derive(Serialize, Deserialize)]
struct RawCueSet {
    #[serde(default)]
    visual: Vec<String>,
    #[serde(default)]
    audio: Vec<String>,
    #[serde(default)]
    global: Vec<String>,
}

impl TryFrom<RawCueSet> for CueSet {
    type Error = CueError;

    fn try_from(raw: RawCueSet) -> Result<Self, Self::Error> {
        CueSet::new(raw.visual, raw.audio, raw.global)
    }
}

impl From<CueSet> for RawCueSet {
    fn from(set: CueSet) -> Self {
        let texts = |cues: Vec<AtomicCue>| cues.into_iter().map(|c| c.0).collect();
        RawCueSet {
            visual: texts(set.visual),
            audio: texts(set.audio),
            global: texts(set.global),
        }
    }
}

fn dedup_cues<I, S>(texts: I) -> Result<Vec<AtomicCue>, CueError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for text in texts {
        let cue = AtomicCue::new(text.as_ref())?;
        if seen.insert(cue.key()) {
            out.push(cue);
        }
    }
    Ok(out)
}

impl CueSet {
    pub fn new<I, S>(visual: I, audio: I, global: I) -> Result<Self, CueError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Ok(CueSet {
            visual: dedup_cues(visual)?,
            audio: dedup_cues(audio)?,
            global: dedup_cues(global)?,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, dim: Dimension) -> &[AtomicCue] {
        match dim {
            Dimension::Visual => &self.visual,
            Dimension::Audio => &self.audio,
            Dimension::Global => &self.global,
        }
    }

    /// Replace one dimension, normalizing and deduplicating the new cues.
    pub fn with_dimension<I, S>(mut self, dim: Dimension, texts: I) -> Result<Self, CueError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let cues = dedup_cues(texts)?;
        match dim {
            Dimension::Visual => self.visual = cues,
            Dimension::Audio => self.audio = cues,
            Dimension::Global => self.global = cues,
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.visual.len() + self.audio.len() + self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All cues with their dimension, in visual, audio, global order.
    pub fn iter(&self) -> impl Iterator<Item = (Dimension, &AtomicCue)> {
        Dimension::ALL
            .into_iter()
            .flat_map(move |d| self.get(d).iter().map(move |c| (d, c)))
    }
}

/// One candidate description paired with its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub supported_dimensions: BTreeSet<Dimension>,
    pub candidate_text: String,
    pub reference_text: String,
    #[serde(default)]
    pub candidate_cues: Option<CueSet>,
    #[serde(default)]
    pub reference_cues: Option<CueSet>,
}

impl EvalSample {
    pub fn supports(&self, dim: Dimension) -> bool {
        self.supported_dimensions.contains(&dim)
    }

    /// Whether either side still needs cue extraction.
    pub fn needs_extraction(&self) -> bool {
        self.candidate_cues.is_none() || self.reference_cues.is_none()
    }
}

/// A unit-norm vector produced by an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalize `values`. Fails on empty, non-finite or zero input.
    pub fn from_raw(values: Vec<f64>) -> Result<Self, NumericError> {
        if values.is_empty() {
            return Err(NumericError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite);
        }
        let norm = numeric::l2_norm(&values);
        if norm == 0.0 {
            return Err(NumericError::ZeroVector);
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, NumericError> {
        numeric::cosine(&self.values, &other.values)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = NumericError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::from_raw(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Precision, recall and F1 for one dimension, on the [0, 1] scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub candidate_count: usize,
    pub reference_count: usize,
    /// Both sides had no cues; scored 1 but left out of corpus averages.
    #[serde(default)]
    pub vacuous: bool,
}

impl DimensionScore {
    /// Build a score from P and R, deriving F1 as their harmonic mean.
    pub fn from_pr(precision: f64, recall: f64, candidate_count: usize, reference_count: usize) -> Self {
        DimensionScore {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            candidate_count,
            reference_count,
            vacuous: false,
        }
    }
}

pub(crate) fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores for the three dimensions; `None` marks an unsupported dimension.
pub type DimensionScores = BTreeMap<Dimension, Option<DimensionScore>>;

/// Corpus means of the n-gram baselines, on their native scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub bleu1: f64,
    pub bleu4: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub label: String,
    pub per_sample: BTreeMap<String, DimensionScores>,
    pub corpus: DimensionScores,
    /// Average of every non-null corpus P and R, on the 0-100 scale.
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BaselineScores>,
}
