use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hex_digest, require_text, Backend, DimGuard, Embedding, EntitySpan, GenerationRequest, RawGeneration};
use crate::error::{Error, Result};
use crate::model::ImageRef;

const DEFAULT_SYNTHETIC_DIM: usize = 32;
const DEFAULT_SYNTHETIC_SENTENCE_DIM: usize = 16;

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureRecord {
    /// Session settings. With `synthetic`, unknown embedding inputs get a
    /// hash-seeded unit vector and unknown NER inputs a capitalization
    /// heuristic; generations must always be recorded.
    Meta {
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        sentence_dim: Option<usize>,
        #[serde(default)]
        synthetic: bool,
    },
    /// Keyed by the request's content hash when `request` is given, else by
    /// `key` (a content hash or a trace key like `plain/<sample id>`).
    Generate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request: Option<GenerationRequest>,
        response: RawGeneration,
    },
    EmbedText {
        text: String,
        vector: Vec<f64>,
    },
    EmbedImage {
        image: String,
        vector: Vec<f64>,
    },
    EmbedSentence {
        text: String,
        vector: Vec<f64>,
    },
    Ner {
        text: String,
        entities: Vec<EntitySpan>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Synthetic {
    dim: usize,
    sentence_dim: usize,
}

/// Deterministic record/replay backend.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    generations: BTreeMap<String, RawGeneration>,
    text: BTreeMap<String, Vec<f64>>,
    image: BTreeMap<String, Vec<f64>>,
    sentence: BTreeMap<String, Vec<f64>>,
    ner: BTreeMap<String, Vec<EntitySpan>>,
    synthetic: Option<Synthetic>,
    shared_dim: DimGuard,
    sentence_dim: DimGuard,
    generate_calls: AtomicUsize,
    calls_by_key: Mutex<BTreeMap<String, usize>>,
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Falls back to hash-seeded vectors for inputs without a recording.
    pub fn synthetic(dim: usize, sentence_dim: usize) -> Self {
        FixtureBackend {
            synthetic: Some(Synthetic { dim, sentence_dim }),
            shared_dim: DimGuard::with_dim(dim),
            sentence_dim: DimGuard::with_dim(sentence_dim),
            ..Self::default()
        }
    }

    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut fx = FixtureBackend::new();
        for r in records {
            fx.insert(r);
        }
        fx
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut fx = FixtureBackend::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            fx.insert(rec);
        }
        Ok(fx)
    }

    pub fn insert(&mut self, rec: FixtureRecord) {
        match rec {
            FixtureRecord::Meta { dim, sentence_dim, synthetic } => {
                if let Some(d) = dim {
                    self.shared_dim = DimGuard::with_dim(d);
                }
                if let Some(d) = sentence_dim {
                    self.sentence_dim = DimGuard::with_dim(d);
                }
                self.synthetic = synthetic.then(|| Synthetic {
                    dim: dim.unwrap_or(DEFAULT_SYNTHETIC_DIM),
                    sentence_dim: sentence_dim.unwrap_or(DEFAULT_SYNTHETIC_SENTENCE_DIM),
                });
            }
            FixtureRecord::Generate { key, request, response } => {
                let key = match (request, key) {
                    (Some(req), _) => req.content_hash(),
                    (None, Some(k)) => k,
                    (None, None) => return,
                };
                self.generations.insert(key, response);
            }
            FixtureRecord::EmbedText { text, vector } => {
                self.text.insert(text, vector);
            }
            FixtureRecord::EmbedImage { image, vector } => {
                self.image.insert(image, vector);
            }
            FixtureRecord::EmbedSentence { text, vector } => {
                self.sentence.insert(text, vector);
            }
            FixtureRecord::Ner { text, entities } => {
                self.ner.insert(text, entities);
            }
        }
    }

    pub fn with(mut self, rec: FixtureRecord) -> Self {
        self.insert(rec);
        self
    }

    /// Records in a stable order, suitable for [`FixtureBackend::save`].
    pub fn records(&self) -> Vec<FixtureRecord> {
        let mut out = Vec::new();
        if let Some(s) = self.synthetic {
            out.push(FixtureRecord::Meta {
                dim: Some(s.dim),
                sentence_dim: Some(s.sentence_dim),
                synthetic: true,
            });
        }
        out.extend(self.generations.iter().map(|(k, v)| FixtureRecord::Generate {
            key: Some(k.clone()),
            request: None,
            response: v.clone(),
        }));
        out.extend(self.text.iter().map(|(k, v)| FixtureRecord::EmbedText { text: k.clone(), vector: v.clone() }));
        out.extend(self.image.iter().map(|(k, v)| FixtureRecord::EmbedImage { image: k.clone(), vector: v.clone() }));
        out.extend(self.sentence.iter().map(|(k, v)| FixtureRecord::EmbedSentence { text: k.clone(), vector: v.clone() }));
        out.extend(self.ner.iter().map(|(k, v)| FixtureRecord::Ner { text: k.clone(), entities: v.clone() }));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, &self.records())
    }

    /// Total `generate_raw` calls served so far.
    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }

    /// `generate_raw` calls per trace key (or content hash when no trace key).
    pub fn calls_by_key(&self) -> BTreeMap<String, usize> {
        self.calls_by_key.lock().expect("call table poisoned").clone()
    }

    fn lookup_vector(
        &self,
        table: &BTreeMap<String, Vec<f64>>,
        kind: &str,
        input: &str,
        guard: &DimGuard,
        synthetic_dim: impl Fn(Synthetic) -> usize,
    ) -> Result<Embedding> {
        let v = match (table.get(input), self.synthetic) {
            (Some(v), _) => Embedding::new(v.clone())?,
            (None, Some(s)) => synthetic_vector(kind, input, synthetic_dim(s)),
            (None, None) => return Err(Error::MissingFixture(format!("{kind} `{input}`"))),
        };
        guard.check(v)
    }
}

/// Writes fixture records as JSON lines.
pub fn write_records(path: &Path, records: &[FixtureRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Unit vector seeded from a SHA-256 of `kind` and `input`.
fn synthetic_vector(kind: &str, input: &str, dim: usize) -> Embedding {
    let digest = hex_digest(format!("{kind}\u{0}{input}").as_bytes());
    let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = Embedding(v);
        if let Ok(n) = e.normalized() {
            return n;
        }
    }
}

const NER_STOPWORDS: &[&str] = &[
    "A", "An", "The", "This", "That", "These", "Those", "It", "Its", "In", "On", "At", "Of", "And", "But", "Or",
    "I", "We", "He", "She", "They", "Image", "Text", "Pair",
];

/// Capitalized words not in a small stop list.
fn heuristic_entities(text: &str) -> Vec<EntitySpan> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
        .filter(|w| !NER_STOPWORDS.contains(w))
        .map(|w| EntitySpan { surface: w.to_string(), kind: "MISC".into() })
        .collect()
}

impl Backend for FixtureBackend {
    fn generate_raw(&self, req: &GenerationRequest) -> Result<RawGeneration> {
        if req.turns.is_empty() {
            return Err(Error::EmptyInput("generation turns"));
        }
        let hash = req.content_hash();
        let counted_key = req.trace_key.clone().unwrap_or_else(|| hash.clone());
        self.generate_calls.fetch_add(1, Ordering::SeqCst);
        *self
            .calls_by_key
            .lock()
            .expect("call table poisoned")
            .entry(counted_key)
            .or_default() += 1;
        self.generations
            .get(&hash)
            .or_else(|| req.trace_key.as_ref().and_then(|k| self.generations.get(k)))
            .cloned()
            .ok_or_else(|| {
                Error::MissingFixture(format!(
                    "generation {} (hash {hash})",
                    req.trace_key.as_deref().unwrap_or("<no trace key>")
                ))
            })
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        require_text(text, "embed_text")?;
        self.lookup_vector(&self.text, "embed_text", text, &self.shared_dim, |s| s.dim)
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        self.lookup_vector(&self.image, "embed_image", &image.key(), &self.shared_dim, |s| s.dim)
    }

    fn embed_sentence(&self, text: &str) -> Result<Embedding> {
        require_text(text, "embed_sentence")?;
        self.lookup_vector(&self.sentence, "embed_sentence", text, &self.sentence_dim, |s| s.sentence_dim)
    }

    fn tag_entities(&self, text: &str) -> Result<Vec<EntitySpan>> {
        match (self.ner.get(text), self.synthetic) {
            (Some(e), _) => Ok(e.clone()),
            (None, Some(_)) => Ok(heuristic_entities(text)),
            (None, None) => Err(Error::MissingFixture(format!("ner `{text}`"))),
        }
    }
}

/// Wraps another backend and keeps every exchange as a fixture record, so a
/// live session can later be replayed through [`FixtureBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<FixtureRecord>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend { inner, log: Mutex::new(Vec::new()) }
    }

    fn push(&self, rec: FixtureRecord) {
        self.log.lock().expect("recording poisoned").push(rec);
    }

    /// Recorded exchanges as a replay backend.
    pub fn replay(&self) -> FixtureBackend {
        FixtureBackend::from_records(self.log.lock().expect("recording poisoned").clone())
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn generate_raw(&self, req: &GenerationRequest) -> Result<RawGeneration> {
        let raw = self.inner.generate_raw(req)?;
        self.push(FixtureRecord::Generate { key: None, request: Some(req.clone()), response: raw.clone() });
        Ok(raw)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        let v = self.inner.embed_text(text)?;
        self.push(FixtureRecord::EmbedText { text: text.into(), vector: v.0.clone() });
        Ok(v)
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        let v = self.inner.embed_image(image)?;
        self.push(FixtureRecord::EmbedImage { image: image.key(), vector: v.0.clone() });
        Ok(v)
    }

    fn embed_sentence(&self, text: &str) -> Result<Embedding> {
        let v = self.inner.embed_sentence(text)?;
        self.push(FixtureRecord::EmbedSentence { text: text.into(), vector: v.0.clone() });
        Ok(v)
    }

    fn tag_entities(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let e = self.inner.tag_entities(text)?;
        self.push(FixtureRecord::Ner { text: text.into(), entities: e.clone() });
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Role, Turn};
    use crate::model::GeneratedToken;

    fn req(key: &str) -> GenerationRequest {
        GenerationRequest {
            system_prompt: "sys".into(),
            turns: vec![Turn { role: Role::User, text: "claim".into(), image: None }],
            want_top_candidates: 10,
            want_logprobs: true,
            trace_key: Some(key.into()),
        }
    }

    fn raw() -> RawGeneration {
        RawGeneration {
            text: "The pair is real because ok".into(),
            tokens: vec![GeneratedToken { token: "x".into(), logprob: Some(-0.1), top: vec![] }],
        }
    }

    #[test]
    fn generation_replays_by_trace_key() {
        let fx = FixtureBackend::new().with(FixtureRecord::Generate {
            key: Some("plain/s1".into()),
            request: None,
            response: raw(),
        });
        let a = fx.generate_raw(&req("plain/s1")).unwrap();
        let b = fx.generate_raw(&req("plain/s1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(fx.generate_calls(), 2);
        assert_eq!(fx.calls_by_key()["plain/s1"], 2);
        assert!(matches!(fx.generate_raw(&req("plain/s2")), Err(Error::MissingFixture(_))));
    }

    #[test]
    fn generation_replays_by_content_hash() {
        let r = req("ignored");
        let fx = FixtureBackend::new().with(FixtureRecord::Generate { key: None, request: Some(r.clone()), response: raw() });
        let mut other_key = r.clone();
        other_key.trace_key = None;
        assert_eq!(fx.generate_raw(&other_key).unwrap(), raw());
    }

    #[test]
    fn stored_vectors_pass_through() {
        let fx = FixtureBackend::new()
            .with(FixtureRecord::EmbedText { text: "hello".into(), vector: vec![0.6, 0.8] })
            .with(FixtureRecord::EmbedImage { image: "a.jpg".into(), vector: vec![1.0, 0.0] });
        assert_eq!(fx.embed_text("hello").unwrap().0, vec![0.6, 0.8]);
        assert_eq!(fx.embed_text("hello").unwrap(), fx.embed_text("hello").unwrap());
        let img = fx.embed_image(&ImageRef::Path("a.jpg".into())).unwrap();
        assert_eq!(img.dim(), fx.embed_text("hello").unwrap().dim());
        assert!(matches!(fx.embed_text("other"), Err(Error::MissingFixture(_))));
        assert!(matches!(fx.embed_text(""), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn dim_change_is_detected() {
        let fx = FixtureBackend::new()
            .with(FixtureRecord::EmbedText { text: "a".into(), vector: vec![0.6, 0.8] })
            .with(FixtureRecord::EmbedText { text: "b".into(), vector: vec![1.0, 0.0, 0.0] });
        fx.embed_text("a").unwrap();
        assert!(matches!(fx.embed_text("b"), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn entities_from_fixture_and_dedup() {
        let fx = FixtureBackend::new()
            .with(FixtureRecord::Ner {
                text: "Obama visited Paris".into(),
                entities: vec![
                    EntitySpan { surface: "Obama".into(), kind: "PER".into() },
                    EntitySpan { surface: "Paris".into(), kind: "LOC".into() },
                ],
            })
            .with(FixtureRecord::Ner {
                text: "Paris, paris".into(),
                entities: vec![
                    EntitySpan { surface: "Paris".into(), kind: "LOC".into() },
                    EntitySpan { surface: "paris".into(), kind: "LOC".into() },
                ],
            });
        let names = |t: &str| fx.extract_entities(t).unwrap().into_iter().map(|e| e.surface).collect::<Vec<_>>();
        assert_eq!(names("Obama visited Paris"), ["Obama", "Paris"]);
        assert_eq!(names("Paris, paris"), ["Paris"]);
        assert!(names("").is_empty());
    }

    #[test]
    fn synthetic_vectors_are_unit_and_stable() {
        let fx = FixtureBackend::synthetic(8, 4);
        let a = fx.embed_text("anything").unwrap();
        assert_eq!(a.dim(), 8);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a, FixtureBackend::synthetic(8, 4).embed_text("anything").unwrap());
        assert_ne!(a, fx.embed_text("something else").unwrap());
        assert_eq!(fx.embed_sentence("s").unwrap().dim(), 4);
        let names: Vec<_> = fx.extract_entities("The Obama visit to Paris").unwrap().into_iter().map(|e| e.surface).collect();
        assert_eq!(names, ["Obama", "Paris"]);
    }

    #[test]
    fn save_and_load_round_trip() {
        let fx = FixtureBackend::synthetic(4, 4)
            .with(FixtureRecord::EmbedText { text: "t".into(), vector: vec![0.5, 0.5, 0.5, 0.5] })
            .with(FixtureRecord::Generate { key: Some("k".into()), request: None, response: raw() });
        let f = tempfile::NamedTempFile::new().unwrap();
        fx.save(f.path()).unwrap();
        let back = FixtureBackend::load(f.path()).unwrap();
        assert_eq!(back.records(), fx.records());
    }

    #[test]
    fn recording_replays_identically() {
        let live = FixtureBackend::synthetic(6, 3).with(FixtureRecord::Generate {
            key: Some("plain/s1".into()),
            request: None,
            response: raw(),
        });
        let rec = RecordingBackend::new(live);
        let r = req("plain/s1");
        let g = rec.generate_raw(&r).unwrap();
        let v = rec.embed_text("claim text").unwrap();
        let replay = rec.replay();
        let mut unkeyed = r.clone();
        unkeyed.trace_key = None;
        assert_eq!(replay.generate_raw(&unkeyed).unwrap(), g);
        assert_eq!(replay.embed_text("claim text").unwrap(), v);
    }

    proptest::proptest! {
        #[test]
        fn synthetic_vectors_always_finite(input in ".{1,40}", dim in 1usize..64) {
            proptest::prop_assume!(!input.trim().is_empty());
            let fx = FixtureBackend::synthetic(dim, dim);
            for v in [fx.embed_text(&input).unwrap(), fx.embed_sentence(&input).unwrap(),
                      fx.embed_image(&ImageRef::Path(input.clone())).unwrap()] {
                proptest::prop_assert!(v.0.iter().all(|x| x.is_finite()));
                proptest::prop_assert_eq!(v.dim(), dim);
            }
        }
    }
}
