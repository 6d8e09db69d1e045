use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use crate::model::{CueSet, Dimension};
use crate::remote::{http_agent, post_json, RetryPolicy, TransportError};

use super::{CueExtractor, ExtractError, ExtractionCache, ExtractionCacheKey, ExtractionResult, PromptTemplate};

/// Environment variable holding the bearer token for the chat endpoint.
pub const LLM_API_KEY_ENV: &str = "EMOCUE_LLM_API_KEY";

const SYSTEM_PROMPT: &str = "You extract atomic emotional cues from descriptions of video clips. \
Respond with a single JSON object and nothing else, of the form \
{\"visual\": [string], \"audio\": [string], \"global\": [string]}. \
Each string is one atomic cue. Use an empty list for a dimension with no cues.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// Ask the endpoint to constrain output to a JSON object.
    pub json_only: bool,
}

/// A chat-completion endpoint.
pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Client for the common `/chat/completions` JSON API.
pub struct HttpChatClient {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        HttpChatClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            agent: http_agent(timeout),
        }
    }

    pub fn api_key_from_env() -> Option<String> {
        std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty())
    }
}

impl ChatClient for HttpChatClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if request.json_only {
            body["response_format"] = json!({"type": "json_object"});
        }
        let url = format!("{}/chat/completions", self.base_url);
        let resp = post_json(&self.agent, &url, self.api_key.as_deref(), &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::fatal(format!("{url}: response has no choices[0].message.content")))
    }
}

/// Parse the mandated `{"visual":[..],"audio":[..],"global":[..]}` answer.
/// A surrounding markdown code fence is tolerated; blank entries are dropped.
pub fn parse_model_output(raw: &str) -> Result<CueSet, ExtractError> {
    let unparseable = |reason: String| ExtractError::Unparseable {
        raw: raw.to_string(),
        reason,
    };
    let mut text = raw.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        text = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    let value: Value = serde_json::from_str(text).map_err(|e| unparseable(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| unparseable("top level is not an object".into()))?;

    let mut lists: [Vec<String>; 3] = Default::default();
    for (key, v) in obj {
        let dim = Dimension::parse(key).ok_or_else(|| unparseable(format!("unexpected key {key:?}")))?;
        let items = v
            .as_array()
            .ok_or_else(|| unparseable(format!("{key} is not a list")))?;
        for item in items {
            let s = item
                .as_str()
                .ok_or_else(|| unparseable(format!("{key} contains a non-string entry")))?;
            if !s.trim().is_empty() {
                lists[dim as usize].push(s.to_string());
            }
        }
    }
    let [visual, audio, global] = lists;
    Ok(CueSet::new(visual, audio, global)?)
}

/// Extractor backed by a chat model, with a mandatory result cache.
pub struct LlmExtractor {
    client: Box<dyn ChatClient>,
    cache: Arc<ExtractionCache>,
    retry: RetryPolicy,
}

impl LlmExtractor {
    pub fn new(client: Box<dyn ChatClient>, cache: Arc<ExtractionCache>, retry: RetryPolicy) -> Self {
        LlmExtractor { client, cache, retry }
    }

    pub fn cache(&self) -> &ExtractionCache {
        &self.cache
    }

    fn request(template: &PromptTemplate, description: &str) -> ChatRequest {
        ChatRequest {
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: SYSTEM_PROMPT.into(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: template.render(description),
                },
            ],
            temperature: 0.0,
            json_only: true,
        }
    }
}

impl CueExtractor for LlmExtractor {
    fn extract(&self, description: &str, template: &PromptTemplate) -> Result<ExtractionResult, ExtractError> {
        if description.trim().is_empty() {
            return Err(ExtractError::EmptyDescription);
        }
        let key = ExtractionCacheKey::new(self.client.model_id(), template.id(), description);
        if let Some(cues) = self.cache.get(&key) {
            return Ok(ExtractionResult {
                raw_model_output: serde_json::to_string(&cues).expect("cue set serializes"),
                cues,
                template_id: template.id().to_string(),
                cached: true,
            });
        }
        let request = Self::request(template, description);
        let raw = self
            .retry
            .run(|| self.client.complete(&request), |e: &TransportError| e.retryable)?;
        let cues = parse_model_output(&raw)?;
        self.cache.insert(key, cues.clone())?;
        Ok(ExtractionResult {
            cues,
            template_id: template.id().to_string(),
            raw_model_output: raw,
            cached: false,
        })
    }
}
