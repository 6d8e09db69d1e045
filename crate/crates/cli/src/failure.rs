use std::fmt;

use emocue_core::ErrorKind;

/// A terminal error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Remote => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<emocue_core::Error> for Failure {
    fn from(e: emocue_core::Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                emocue_core::Error::from(e).into()
            }
        })*
    };
}

via_core_error!(
    emocue_core::corpus::CorpusError,
    emocue_core::extract::ExtractError,
    emocue_core::embed::EmbedError,
    emocue_core::metric::MetricError,
    emocue_core::textmetrics::TextMetricError,
    emocue_core::objectives::ObjectiveError,
    emocue_core::harness::HarnessError,
    emocue_core::report::ReportError,
);
