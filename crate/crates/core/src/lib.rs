//! Cue-level evaluation for explainable multimodal emotion recognition.
//!
//! The pipeline mirrors how an explanation is judged against a human
//! annotation: free text is decomposed into atomic cues per dimension
//! ([`extract`]), each cue is mapped to a unit vector ([`embed`]), and the two
//! cue sets are matched by maximum cosine similarity to produce precision,
//! recall and F1 per dimension ([`metric`]). Conventional n-gram baselines live
//! in [`textmetrics`], the contrastive and auxiliary training objectives with
//! analytic gradients in [`objectives`], and the robustness experiments in
//! [`harness`].

pub mod corpus;
pub mod embed;
pub mod error;
pub mod extract;
pub mod harness;
pub mod metric;
pub mod model;
pub mod numeric;
pub mod objectives;
pub mod remote;
pub mod report;
pub mod textmetrics;

pub use error::{Error, ErrorKind, Result};
pub use model::{AtomicCue, CueSet, Dimension, DimensionScore, EvalSample, MetricReport};
