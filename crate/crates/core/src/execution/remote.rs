//! Generic HTTP adapter driven by a JSON endpoint configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AdapterError, RawHit, RawOutput, RunControls, SystemAdapter};
use crate::query::Query;

const MAX_RETRIES: u32 = 2;
const BACKOFF_BASE_MS: u64 = 100;
const SNIPPET_CHARS: usize = 200;

/// Request body field names. `None` omits the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestMapping {
    pub text: String,
    pub max_depth: Option<String>,
    pub seed: Option<String>,
    pub query_id: Option<String>,
    pub language: Option<String>,
}

impl Default for RequestMapping {
    fn default() -> Self {
        RequestMapping {
            text: "query".into(),
            max_depth: Some("max_results".into()),
            seed: Some("seed".into()),
            query_id: Some("query_id".into()),
            language: None,
        }
    }
}

/// Where hits live in the response body. `hits` is a dotted path to the
/// array; the other fields are keys inside each hit (a hit may also be a
/// bare string id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseMapping {
    pub hits: String,
    pub id: String,
    pub score: Option<String>,
    pub rank: Option<String>,
}

impl Default for ResponseMapping {
    fn default() -> Self {
        ResponseMapping {
            hits: "results".into(),
            id: "id".into(),
            score: Some("score".into()),
            rank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Endpoint; `{query_id}` is substituted.
    pub url: String,
    #[serde(default = "default_method")]
    pub method: String,
    /// Header templates; `{token}` is replaced by the auth token.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// Environment variable holding the auth token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub request: RequestMapping,
    #[serde(default)]
    pub response: ResponseMapping,
    /// Extra fields merged into every request.
    #[serde(default)]
    pub defaults: Map<String, Value>,
}

fn default_method() -> String {
    "POST".into()
}

impl RemoteConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("failed to read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid adapter config: {e}"))
    }

    fn request_fields(&self, query: &Query, controls: &RunControls) -> Map<String, Value> {
        let mut body = self.defaults.clone();
        let m = &self.request;
        body.insert(m.text.clone(), Value::from(query.text.clone()));
        if let Some(k) = &m.max_depth {
            body.insert(k.clone(), Value::from(controls.max_depth));
        }
        if let Some(k) = &m.seed {
            body.insert(k.clone(), Value::from(controls.seed));
        }
        if let Some(k) = &m.query_id {
            body.insert(k.clone(), Value::from(query.query_id.clone()));
        }
        if let Some(k) = &m.language {
            body.insert(k.clone(), Value::from(query.language.clone()));
        }
        body
    }
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.')
        .filter(|p| !p.is_empty())
        .try_fold(value, |v, key| v.get(key))
}

fn parse_hits(body: &str, mapping: &ResponseMapping) -> Result<RawOutput, AdapterError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| AdapterError::Failed(format!("response is not JSON: {e}")))?;
    let hits = lookup(&value, &mapping.hits)
        .and_then(Value::as_array)
        .ok_or_else(|| AdapterError::Failed(format!("response has no array at {:?}", mapping.hits)))?;
    let hits = hits
        .iter()
        .map(|h| match h {
            Value::String(id) => RawHit::new(id.clone()),
            other => RawHit {
                id: match lookup(other, &mapping.id) {
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => String::new(),
                },
                score: mapping
                    .score
                    .as_deref()
                    .and_then(|k| lookup(other, k))
                    .and_then(Value::as_f64),
                rank: mapping
                    .rank
                    .as_deref()
                    .and_then(|k| lookup(other, k))
                    .and_then(Value::as_u64)
                    .map(|r| r as usize),
            },
        })
        .collect();
    Ok(RawOutput { hits })
}

fn snippet(body: &str) -> String {
    body.chars().take(SNIPPET_CHARS).collect()
}

/// Sends one request for `query`, retrying transport failures at most twice
/// with exponential backoff. Timeouts are not retried.
pub fn remote_adapter_query(
    config: &RemoteConfig,
    query: &Query,
    controls: &RunControls,
) -> Result<RawOutput, AdapterError> {
    let token = config
        .auth_token_env
        .as_deref()
        .and_then(|name| std::env::var(name).ok())
        .unwrap_or_default();
    let url = config.url.replace("{query_id}", &query.query_id);
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(controls.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let fields = config.request_fields(query, controls);

    let mut attempt = 0;
    loop {
        let result = if config.method.eq_ignore_ascii_case("GET") {
            let mut req = agent.get(&url);
            for (k, v) in &config.headers {
                req = req.header(k, v.replace("{token}", &token));
            }
            for (k, v) in &fields {
                let v = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                req = req.query(k, v);
            }
            req.call()
        } else {
            let mut req = agent.post(&url);
            for (k, v) in &config.headers {
                req = req.header(k, v.replace("{token}", &token));
            }
            req.send_json(Value::Object(fields.clone()))
        };
        match result {
            Ok(mut resp) => {
                let status = resp.status();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| match e {
                        ureq::Error::Timeout(_) => AdapterError::Timeout,
                        other => AdapterError::Failed(format!("reading body: {other}")),
                    })?;
                if !status.is_success() {
                    return Err(AdapterError::Failed(format!(
                        "HTTP {}: {}",
                        status.as_u16(),
                        snippet(&body)
                    )));
                }
                return parse_hits(&body, &config.response);
            }
            Err(ureq::Error::Timeout(_)) => return Err(AdapterError::Timeout),
            Err(e) if attempt < MAX_RETRIES => {
                log::debug!("transport failure for {}: {e}; retrying", query.query_id);
                std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << attempt));
                attempt += 1;
            }
            Err(e) => return Err(AdapterError::Failed(format!("transport failure: {e}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteAdapter {
    id: String,
    config: RemoteConfig,
}

impl RemoteAdapter {
    pub fn new(id: impl Into<String>, config: RemoteConfig) -> Self {
        RemoteAdapter {
            id: id.into(),
            config,
        }
    }
}

impl SystemAdapter for RemoteAdapter {
    fn adapter_id(&self) -> &str {
        &self.id
    }

    fn search(&self, query: &Query, controls: &RunControls) -> Result<RawOutput, AdapterError> {
        remote_adapter_query(&self.config, query, controls)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_mapping_with_nested_paths() {
        let mapping = ResponseMapping {
            hits: "data.items".into(),
            id: "pn".into(),
            score: Some("relevance".into()),
            rank: Some("pos".into()),
        };
        let body = r#"{"data":{"items":[{"pn":"CN1A","relevance":0.9,"pos":1},{"pn":"US2B","pos":2},"EP3C"]}}"#;
        let out = parse_hits(body, &mapping).unwrap();
        assert_eq!(out.hits.len(), 3);
        assert_eq!(out.hits[0], RawHit { id: "CN1A".into(), score: Some(0.9), rank: Some(1) });
        assert_eq!(out.hits[1].score, None);
        assert_eq!(out.hits[2].id, "EP3C");
        assert!(parse_hits("{}", &mapping).is_err());
        assert!(parse_hits("not json", &mapping).is_err());
    }

    #[test]
    fn config_defaults_and_request_fields() {
        let cfg: RemoteConfig = serde_json::from_str(
            r#"{"url":"http://localhost/search","defaults":{"mode":"novelty"},"request":{"text":"q","language":"lang"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, "POST");
        let q = Query {
            query_id: "CN1".into(),
            text: "a pump".into(),
            language: "en".into(),
            char_length: 6,
            truncated: false,
        };
        let controls = RunControls { seed: 7, max_depth: 50, ..Default::default() };
        let fields = cfg.request_fields(&q, &controls);
        assert_eq!(fields["q"], "a pump");
        assert_eq!(fields["mode"], "novelty");
        assert_eq!(fields["lang"], "en");
        // request mapping uses #[serde(default)] per field
        assert_eq!(fields["max_results"], 50);
        assert_eq!(fields["seed"], 7);
    }
}
