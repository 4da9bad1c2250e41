//! JSON-over-HTTP clients.
//!
//! | endpoint         | request                          | response                         |
//! |------------------|----------------------------------|----------------------------------|
//! | `POST /embed`    | `{"texts": [..]}`                | `{"vectors": [[..]], "dim": d}`  |
//! | `POST /rerank`   | `{"query": s, "documents": [..]}`| `{"scores": [..]}`               |
//! | `POST /describe` | `{"mode": m, "input": s}`        | `{"text": s}`                    |

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{normalize, DescribeMode, Describer, Embedder, EncoderError, Reranker};
use crate::prompts;

pub const EMBED_URL_VAR: &str = "RANGER_EMBED_URL";
pub const RERANK_URL_VAR: &str = "RANGER_RERANK_URL";
pub const DESCRIBE_URL_VAR: &str = "RANGER_DESCRIBE_URL";
pub const TRANSLATE_URL_VAR: &str = "RANGER_TRANSLATE_URL";
pub const TIMEOUT_VAR: &str = "RANGER_HTTP_TIMEOUT_MS";

const DEFAULT_TIMEOUT_MS: u64 = 60_000;
const DEFAULT_MAX_IN_FLIGHT: usize = 4;
const DEFAULT_MAX_INPUT_CHARS: usize = 24_000;

#[derive(Debug, Clone)]
pub struct WireConfig {
    /// Base URL; the endpoint path is appended unless already present.
    pub url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Describer inputs longer than this fail with `ContextOverflow`.
    pub max_input_chars: usize,
}

impl WireConfig {
    pub fn new(url: impl Into<String>) -> Self {
        WireConfig {
            url: url.into(),
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            max_input_chars: DEFAULT_MAX_INPUT_CHARS,
        }
    }

    /// Config from the URL variable `var`, or `None` if unset or empty.
    pub fn from_env(var: &str) -> Option<Self> {
        let url = std::env::var(var).ok().filter(|u| !u.trim().is_empty())?;
        let mut cfg = WireConfig::new(url.trim());
        if let Some(ms) = std::env::var(TIMEOUT_VAR).ok().and_then(|v| v.parse::<u64>().ok()) {
            cfg.timeout = Duration::from_millis(ms);
        }
        Some(cfg)
    }

    fn endpoint(&self, path: &str) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with(path) {
            base.to_string()
        } else {
            format!("{base}{path}")
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(max: usize) -> Self {
        InFlight {
            max: max.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub(crate) struct Client {
    agent: ureq::Agent,
    config: WireConfig,
    limiter: InFlight,
}

impl Client {
    pub(crate) fn new(config: WireConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Client {
            agent,
            limiter: InFlight::new(config.max_in_flight),
            config,
        }
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, EncoderError> {
        let url = self.config.endpoint(path);
        let _permit = self.limiter.acquire();
        let mut response = self.agent.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::Json(e) => EncoderError::MalformedResponse(e.to_string()),
            other => EncoderError::BackendUnavailable(format!("{url}: {other}")),
        })?;
        response
            .body_mut()
            .read_json::<R>()
            .map_err(|e| EncoderError::MalformedResponse(format!("{url}: {e}")))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    documents: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct DescribeRequest<'a> {
    mode: DescribeMode,
    input: &'a str,
}

#[derive(Deserialize)]
struct DescribeResponse {
    text: String,
}

#[derive(Debug)]
pub struct WireEmbedder {
    client: Client,
    dim: Mutex<Option<usize>>,
}

impl WireEmbedder {
    /// `dim` pins the expected dimension; otherwise the first response fixes it.
    pub fn new(config: WireConfig, dim: Option<usize>) -> Self {
        WireEmbedder {
            client: Client::new(config),
            dim: Mutex::new(dim),
        }
    }
}

impl Embedder for WireEmbedder {
    fn dim(&self) -> usize {
        self.dim.lock().unwrap_or_else(|e| e.into_inner()).unwrap_or(0)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EncoderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self.client.post("/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(EncoderError::LengthMismatch {
                expected: texts.len(),
                got: resp.vectors.len(),
            });
        }
        let mut pinned = self.dim.lock().unwrap_or_else(|e| e.into_inner());
        let expected = *pinned.get_or_insert(resp.dim);
        let mut out = Vec::with_capacity(resp.vectors.len());
        for v in resp.vectors {
            if v.len() != expected || resp.dim != expected {
                return Err(EncoderError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
            let v = normalize(v)
                .ok_or_else(|| EncoderError::MalformedResponse("zero or non-finite vector".into()))?;
            out.push(v);
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub struct WireReranker {
    client: Client,
}

impl WireReranker {
    pub fn new(config: WireConfig) -> Self {
        WireReranker {
            client: Client::new(config),
        }
    }
}

impl Reranker for WireReranker {
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, EncoderError> {
        if documents.is_empty() {
            return Ok(Vec::new());
        }
        let resp: RerankResponse = self.client.post("/rerank", &RerankRequest { query, documents })?;
        if resp.scores.len() != documents.len() {
            return Err(EncoderError::LengthMismatch {
                expected: documents.len(),
                got: resp.scores.len(),
            });
        }
        resp.scores
            .into_iter()
            .map(|s| {
                if s.is_finite() {
                    Ok(s.clamp(0.0, 1.0))
                } else {
                    Err(EncoderError::MalformedResponse(format!("score {s}")))
                }
            })
            .collect()
    }
}

/// Sends the rendered prompt template plus input.
#[derive(Debug)]
pub struct WireDescriber {
    client: Client,
}

impl WireDescriber {
    pub fn new(config: WireConfig) -> Self {
        WireDescriber {
            client: Client::new(config),
        }
    }
}

impl Describer for WireDescriber {
    fn describe(&self, input: &str, mode: DescribeMode) -> Result<String, EncoderError> {
        let limit = self.client.config.max_input_chars;
        let len = input.chars().count();
        if len > limit {
            return Err(EncoderError::ContextOverflow { len, limit });
        }
        let prompt = prompts::render(mode, input);
        let resp: DescribeResponse = self.client.post("/describe", &DescribeRequest { mode, input: &prompt })?;
        Ok(resp.text)
    }
}
