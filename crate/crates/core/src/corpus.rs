//! JSONL corpus ingestion and serialization.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "s1", "supported_dimensions": ["visual", "audio", "global"],
//!  "candidate_text": "...", "reference_text": "...",
//!  "candidate_cues": {"visual": [...], "audio": [...], "global": [...]} | null,
//!  "reference_cues": {...} | null}
//! ```
//!
//! A `null` cue block means the text still has to go through extraction.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{CueSet, Dimension, EvalSample};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
}

/// Which fields a corpus line must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusSchema {
    /// Candidate and reference texts are both required.
    #[default]
    CandidateReference,
    /// Only the reference side is required; candidate fields default to empty.
    ReferenceOnly,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    supported_dimensions: Vec<String>,
    candidate_text: Option<String>,
    reference_text: String,
    #[serde(default)]
    candidate_cues: Option<CueSet>,
    #[serde(default)]
    reference_cues: Option<CueSet>,
}

/// An ordered list of samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    samples: Vec<EvalSample>,
}

impl Corpus {
    pub fn new(samples: Vec<EvalSample>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Corpus { samples })
    }

    pub fn samples(&self) -> &[EvalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<EvalSample> {
        self.samples
    }

    pub fn parse(content: &str, schema: CorpusSchema) -> Result<Self, CorpusError> {
        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let sample = parse_line(line, line_no, schema)?;
            if !seen.insert(sample.id.clone()) {
                return Err(CorpusError::DuplicateId(sample.id));
            }
            samples.push(sample);
        }
        Ok(Corpus { samples })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}

fn parse_line(line: &str, line_no: usize, schema: CorpusSchema) -> Result<EvalSample, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line: line_no, message };
    let raw: RawSample = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;

    let mut supported = BTreeSet::new();
    for name in &raw.supported_dimensions {
        let dim = Dimension::parse(name).ok_or_else(|| malformed(format!("unknown dimension {name:?}")))?;
        supported.insert(dim);
    }
    if supported.is_empty() {
        return Err(malformed("supported_dimensions is empty".into()));
    }
    let candidate_text = match (raw.candidate_text, schema) {
        (Some(t), _) => t,
        (None, CorpusSchema::ReferenceOnly) => String::new(),
        (None, CorpusSchema::CandidateReference) => return Err(malformed("missing field `candidate_text`".into())),
    };
    Ok(EvalSample {
        id: raw.id,
        supported_dimensions: supported,
        candidate_text,
        reference_text: raw.reference_text,
        candidate_cues: raw.candidate_cues,
        reference_cues: raw.reference_cues,
    })
}

pub fn load_corpus(path: &Path, schema: CorpusSchema) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::parse(&content, schema)
}
