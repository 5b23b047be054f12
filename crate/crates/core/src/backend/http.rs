use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{EntitiesReply, GenerateBody, ImageBody, TextBody, VectorReply};
use super::{require_text, Backend, DimGuard, Embedding, EntitySpan, GenerationRequest, RawGeneration};
use crate::error::{Error, Result};
use crate::model::ImageRef;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub max_retries: u32,
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            timeout: Duration::from_secs(120),
            max_retries: 2,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Backend talking to a sidecar (or any conforming server) over JSON POSTs.
pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    shared_dim: DimGuard,
    sentence_dim: DimGuard,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend {
            cfg,
            client,
            shared_dim: DimGuard::default(),
            sentence_dim: DimGuard::default(),
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, endpoint: &str, body: &B) -> Result<R> {
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), endpoint);
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 1));
            }
            match self.client.post(&url).json(body).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<R>()
                        .map_err(|e| Error::BackendUnavailable(format!("{url}: bad reply: {e}")));
                }
                // Client errors will not improve on retry.
                Ok(resp) if resp.status().is_client_error() => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    return Err(Error::BackendUnavailable(format!("{url}: {status}: {text}")));
                }
                Ok(resp) => last_err = format!("{url}: {}", resp.status()),
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(Error::BackendUnavailable(last_err))
    }

    fn vector(&self, endpoint: &str, body: &impl Serialize, guard: &DimGuard) -> Result<Embedding> {
        let reply: VectorReply = self.post(endpoint, body)?;
        guard.check(Embedding::new(reply.vector)?)
    }
}

impl Backend for HttpBackend {
    fn generate_raw(&self, req: &GenerationRequest) -> Result<RawGeneration> {
        if req.turns.is_empty() {
            return Err(Error::EmptyInput("generation turns"));
        }
        self.post("generate", &GenerateBody::from_request(req)?)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        require_text(text, "embed_text")?;
        self.vector("embed_text", &TextBody { text: text.into() }, &self.shared_dim)
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        let body = ImageBody { image_b64: image.to_base64()? };
        self.vector("embed_image", &body, &self.shared_dim)
    }

    fn embed_sentence(&self, text: &str) -> Result<Embedding> {
        require_text(text, "embed_sentence")?;
        self.vector("embed_sentence", &TextBody { text: text.into() }, &self.sentence_dim)
    }

    fn tag_entities(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let reply: EntitiesReply = self.post("ner", &TextBody { text: text.into() })?;
        Ok(reply.entities)
    }
}
