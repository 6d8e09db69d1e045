//! Decomposition of free-form descriptions into per-dimension cue lists.
//!
//! Two extractors implement [`CueExtractor`]: [`LlmExtractor`] prompts a
//! chat-completion model with a [`PromptTemplate`] and caches the parsed
//! answer, and [`StructuredExtractor`] parses descriptions that are already
//! annotated with `[VISUAL]`/`[AUDIO]`/`[GLOBAL]` sections.

mod cache;
mod llm;
mod structured;
mod template;

use thiserror::Error;

use crate::model::{CueError, CueSet};
use crate::remote::TransportError;

pub use cache::{ExtractionCache, ExtractionCacheKey};
pub use llm::{
    parse_model_output, ChatClient, ChatMessage, ChatRequest, HttpChatClient, LlmExtractor, LLM_API_KEY_ENV,
};
pub use structured::{extract_structured, StructuredExtractor};
pub use template::{default_templates, load_templates, PromptTemplate, PLACEHOLDER};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("description is empty")]
    EmptyDescription,
    #[error("template {id:?}: {reason}")]
    Template { id: String, reason: String },
    #[error("no [VISUAL], [AUDIO] or [GLOBAL] section marker found")]
    MissingMarkers,
    #[error("extraction request failed: {0}")]
    Transport(#[from] TransportError),
    #[error("model output is not the mandated cue JSON ({reason}): {raw}")]
    Unparseable { raw: String, reason: String },
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error("extraction cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Cues extracted from one description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub cues: CueSet,
    pub template_id: String,
    pub raw_model_output: String,
    pub cached: bool,
}

pub trait CueExtractor: Send + Sync {
    fn extract(&self, description: &str, template: &PromptTemplate) -> Result<ExtractionResult, ExtractError>;
}
