//! The three model roles used by annotation and search.
//!
//! * [`Describer`] writes natural-language descriptions of code.
//! * [`Embedder`] maps text to unit vectors.
//! * [`Reranker`] scores (query, document) pairs in `[0, 1]`.
//!
//! Each role has a deterministic local implementation in [`local`] and an
//! HTTP client in [`wire`].

pub mod local;
pub mod wire;

use serde::{Deserialize, Serialize};

pub use local::{tokenize, LocalDescriber, LocalEmbedder, LocalReranker};
pub use wire::{WireConfig, WireDescriber, WireEmbedder, WireReranker};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("vector dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input of {len} characters exceeds the limit of {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend returned {got} results for {expected} inputs")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescribeMode {
    /// High-level purpose summary from source code.
    SummarizeCode,
    /// `name - description` lines for the important members of the code.
    ListMembers,
    /// Summary composed from the descriptions of child entities.
    SummarizeFromMembers,
}

impl DescribeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DescribeMode::SummarizeCode => "summarize_code",
            DescribeMode::ListMembers => "list_members",
            DescribeMode::SummarizeFromMembers => "summarize_from_members",
        }
    }
}

/// Sentinel for "no important members".
pub const NO_MEMBERS: &str = "---None---";
/// Output for an empty member list.
pub const NO_DESCRIPTION: &str = "No description found";

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// One unit-norm vector per input text, in order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EncoderError>;
}

pub trait Reranker: Send + Sync {
    /// One score in `[0, 1]` per document, in order.
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, EncoderError>;
}

pub trait Describer: Send + Sync {
    fn describe(&self, input: &str, mode: DescribeMode) -> Result<String, EncoderError>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EncoderError> {
        (**self).embed(texts)
    }
}

impl<T: Reranker + ?Sized> Reranker for &T {
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, EncoderError> {
        (**self).rerank(query, documents)
    }
}

impl<T: Describer + ?Sized> Describer for &T {
    fn describe(&self, input: &str, mode: DescribeMode) -> Result<String, EncoderError> {
        (**self).describe(input, mode)
    }
}

/// A full set of backends.
pub struct Backends {
    pub describer: Box<dyn Describer>,
    pub embedder: Box<dyn Embedder>,
    pub reranker: Box<dyn Reranker>,
}

impl Backends {
    pub fn local() -> Self {
        Backends {
            describer: Box::new(LocalDescriber::default()),
            embedder: Box::new(LocalEmbedder::default()),
            reranker: Box::new(LocalReranker),
        }
    }

    /// Wire clients for every role whose URL variable is set, local ones otherwise.
    pub fn from_env() -> Self {
        let mut b = Backends::local();
        if let Some(cfg) = WireConfig::from_env(wire::DESCRIBE_URL_VAR) {
            b.describer = Box::new(WireDescriber::new(cfg));
        }
        if let Some(cfg) = WireConfig::from_env(wire::EMBED_URL_VAR) {
            b.embedder = Box::new(WireEmbedder::new(cfg, None));
        }
        if let Some(cfg) = WireConfig::from_env(wire::RERANK_URL_VAR) {
            b.reranker = Box::new(WireReranker::new(cfg));
        }
        b
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scale `v` to unit length. Returns `None` for the zero vector.
pub fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}
