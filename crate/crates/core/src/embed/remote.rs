use std::time::Duration;

use serde_json::{json, Value};

use crate::remote::{http_agent, post_json, TransportError};

use super::EmbeddingBackend;

/// Environment variable holding the bearer token for the embedding endpoint.
pub const EMBED_API_KEY_ENV: &str = "EMOCUE_EMBED_API_KEY";

/// Client for the common `/embeddings` JSON API
/// (`{"model", "input": [..]}` → `{"data": [{"index", "embedding"}]}`).
pub struct HttpEmbeddingBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbeddingBackend {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        HttpEmbeddingBackend {
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            agent: http_agent(timeout),
        }
    }

    pub fn api_key_from_env() -> Option<String> {
        std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty())
    }
}

fn parse_response(url: &str, resp: &Value, expected: usize) -> Result<Vec<Vec<f64>>, TransportError> {
    let bad = |what: &str| TransportError::fatal(format!("{url}: {what}"));
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("response has no data array"))?;
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("data item has no embedding"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| bad("embedding has a non-numeric entry")))
            .collect::<Result<Vec<_>, _>>()?;
        *out.get_mut(index).ok_or_else(|| bad("embedding index out of range"))? = Some(values);
    }
    out.into_iter()
        .map(|v| v.ok_or_else(|| bad("missing embedding for an input")))
        .collect()
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let body = json!({ "model": self.model, "input": texts });
        let resp = post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)?;
        parse_response(&self.url, &resp, texts.len())
    }
}
