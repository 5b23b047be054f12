//! Explanation-driven dynamic retrieval for image-text claim verification.
//!
//! A vision-language model first answers without evidence. Three confidence
//! scores decide whether to retrieve; if so, a positive and a negative
//! example are pulled from an annotated corpus and the model answers again
//! with them in context.

pub mod backend;
pub mod confidence;
pub mod error;
pub mod exec;
pub mod index;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod retriever;
pub mod testkit;
pub mod trigger;

pub use backend::{Backend, Embedding, FixtureBackend, HttpBackend, HttpConfig, RecordingBackend};
pub use confidence::{ConfidenceTriple, SupportLexicons, TokenClassifier};
pub use error::{Error, Result};
pub use exec::Execution;
pub use index::{build_index, EvidenceIndex};
pub use model::{BinaryLabel, CorpusEntry, FineGrainedLabel, ImageRef, ModelResponse, Sample};
pub use pipeline::{Engine, Mode, Report, RunConfig, SampleOutcome};
pub use trigger::{hybrid_search, SearchConfig, ThresholdTriple, ValidationCache};
