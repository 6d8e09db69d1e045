//! Crate-wide error and its coarse classification.

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::embed::EmbedError;
use crate::extract::ExtractError;
use crate::harness::HarnessError;
use crate::metric::MetricError;
use crate::model::CueError;
use crate::numeric::NumericError;
use crate::objectives::ObjectiveError;
use crate::report::ReportError;
use crate::textmetrics::TextMetricError;

/// What went wrong, at the granularity a caller acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Input data is missing, malformed or degenerate.
    Data,
    /// A remote service failed or returned something unusable.
    Remote,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    TextMetric(#[from] TextMetricError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn extract_kind(e: &ExtractError) -> ErrorKind {
    match e {
        ExtractError::Transport(_) | ExtractError::Unparseable { .. } => ErrorKind::Remote,
        ExtractError::Template { .. } => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

fn embed_kind(e: &EmbedError) -> ErrorKind {
    match e {
        EmbedError::Transport(_) | EmbedError::DimensionMismatch { .. } | EmbedError::CountMismatch { .. } => {
            ErrorKind::Remote
        }
        EmbedError::InvalidSpec(_) => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

fn metric_kind(e: &MetricError) -> ErrorKind {
    match e {
        MetricError::Embed(e) => embed_kind(e),
        _ => ErrorKind::Data,
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Extract(e) => extract_kind(e),
            Error::Embed(e) => embed_kind(e),
            Error::Metric(e) => metric_kind(e),
            Error::Harness(e) => match e {
                HarnessError::Extraction { source, .. } => extract_kind(source),
                HarnessError::Scoring { source, .. } | HarnessError::Metric(source) => metric_kind(source),
                HarnessError::Embed(e) => embed_kind(e),
                HarnessError::TemplateCount(_)
                | HarnessError::DuplicateTemplate(_)
                | HarnessError::Placeholder { .. }
                | HarnessError::TooFewStyles(_)
                | HarnessError::ZeroPairs
                | HarnessError::Pool(_) => ErrorKind::Usage,
                _ => ErrorKind::Data,
            },
            Error::Objective(ObjectiveError::BadStep(_) | ObjectiveError::BadWeights(..)) => ErrorKind::Usage,
            Error::Usage(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}
