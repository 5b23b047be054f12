//! Model backends: generation, image/text embedding in one shared space,
//! sentence embedding, and entity tagging.
//!
//! [`HttpBackend`] speaks the JSON wire protocol in [`wire`];
//! [`FixtureBackend`] replays recorded responses so that whole pipeline runs
//! are reproducible offline.

mod fixture;
mod http;
pub mod wire;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{parse_response, GeneratedToken, ImageRef, ModelResponse};

pub use fixture::{write_records, FixtureBackend, FixtureRecord, RecordingBackend};
pub use http::{HttpBackend, HttpConfig};

/// Number of top candidates requested at the classification position.
pub const DEFAULT_K_TOK: usize = 10;

/// A dense vector produced by one of the encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteVector);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Unit-L2 copy of this vector.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Embedding(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    pub want_top_candidates: usize,
    pub want_logprobs: bool,
    /// Replay key for fixture lookups such as `plain/<sample id>`.
    /// Never sent over the wire and not part of the content hash.
    #[serde(skip)]
    pub trace_key: Option<String>,
}

impl GenerationRequest {
    /// Hex SHA-256 of the request content (excluding the trace key).
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub surface: String,
    pub kind: String,
}

/// Unparsed output of a generation call, identical to the `/generate` reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGeneration {
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<GeneratedToken>,
}

/// The operations every model backend provides. Implementations must be
/// safe to call concurrently.
pub trait Backend: Send + Sync {
    fn generate_raw(&self, req: &GenerationRequest) -> Result<RawGeneration>;

    fn embed_text(&self, text: &str) -> Result<Embedding>;

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding>;

    fn embed_sentence(&self, text: &str) -> Result<Embedding>;

    /// Raw tagger output; callers normally want [`Backend::extract_entities`].
    fn tag_entities(&self, text: &str) -> Result<Vec<EntitySpan>>;

    /// Generates and parses the verdict response.
    fn generate(&self, req: &GenerationRequest) -> Result<ModelResponse> {
        let raw = self.generate_raw(req)?;
        parse_response(&raw.text, &raw.tokens, req.want_top_candidates)
    }

    /// Entities in first-occurrence order, deduplicated case-insensitively by surface.
    fn extract_entities(&self, text: &str) -> Result<Vec<EntitySpan>> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(dedup_entities(self.tag_entities(text)?))
    }
}

pub fn dedup_entities(spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    let mut seen = HashSet::new();
    spans
        .into_iter()
        .filter(|s| !s.surface.trim().is_empty())
        .filter(|s| seen.insert(s.surface.trim().to_lowercase()))
        .collect()
}

pub(crate) fn require_text(text: &str, what: &'static str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::EmptyInput(what))
    } else {
        Ok(())
    }
}

/// Enforces that an embedding space keeps one dimension for the session.
#[derive(Debug, Default)]
pub(crate) struct DimGuard(AtomicUsize);

impl DimGuard {
    pub(crate) fn with_dim(dim: usize) -> Self {
        DimGuard(AtomicUsize::new(dim))
    }

    pub(crate) fn check(&self, v: Embedding) -> Result<Embedding> {
        let got = v.dim();
        match self.0.compare_exchange(0, got, Ordering::SeqCst, Ordering::SeqCst) {
            Ok(_) => Ok(v),
            Err(expected) if expected == got => Ok(v),
            Err(expected) => Err(Error::DimMismatch { expected, got }),
        }
    }
}
