//! Entity-enriched multimodal index: each corpus entry is the unit-normalized
//! average of its image, text and entity-string embeddings. A parallel index
//! of explanation embeddings backs fine-grained label inference.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{dot, Backend, Embedding, EntitySpan};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{BinaryLabel, CorpusEntry, FineGrainedLabel, ImageRef};

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;
const FORMAT_NAME: &str = "exdr-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub corpus_id: String,
    pub fused: Embedding,
    pub fine_label: FineGrainedLabel,
    pub binary_label: BinaryLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub corpus_id: String,
    pub expl_vec: Embedding,
    pub fine_label: FineGrainedLabel,
}

/// Both halves of a built index, each sorted by corpus id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvidenceIndex {
    pub records: Vec<IndexRecord>,
    pub explanations: Vec<ExplanationRecord>,
}

/// `(v + t + e) / 3`, L2-normalized.
pub fn fuse_features(v: &Embedding, t: &Embedding, e: &Embedding) -> Result<Embedding> {
    for other in [t, e] {
        if other.dim() != v.dim() {
            return Err(Error::DimMismatch { expected: v.dim(), got: other.dim() });
        }
    }
    let avg: Vec<f64> = (0..v.dim()).map(|i| (v.0[i] + t.0[i] + e.0[i]) / 3.0).collect();
    Embedding(avg).normalized()
}

/// Entity surfaces joined with `", "` in the given order.
pub fn entity_string(entities: &[EntitySpan]) -> String {
    entities.iter().map(|e| e.surface.as_str()).collect::<Vec<_>>().join(", ")
}

/// Fused query-side feature for an image, its claim text, and the
/// explanation entities are drawn from. Without entities the claim text
/// stands in for the entity string.
pub fn fused_feature(backend: &dyn Backend, image: &ImageRef, text: &str, explanation: Option<&str>) -> Result<Embedding> {
    let v = backend.embed_image(image)?;
    let t = backend.embed_text(text)?;
    let entities = match explanation {
        Some(expl) => entity_string(&backend.extract_entities(expl)?),
        None => String::new(),
    };
    let e = if entities.is_empty() { t.clone() } else { backend.embed_text(&entities)? };
    fuse_features(&v, &t, &e)
}

/// Builds the fused and explanation indexes over `corpus`.
pub fn build_index(corpus: &[CorpusEntry], backend: &dyn Backend, exec: Execution) -> Result<EvidenceIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let built = exec.try_map(corpus, |entry| -> Result<(IndexRecord, ExplanationRecord)> {
        let wrap = |e| Error::for_entry(&entry.id, e);
        let fused = fused_feature(backend, &entry.image, &entry.text, Some(&entry.explanation)).map_err(wrap)?;
        let expl_vec = backend.embed_text(&entry.explanation).and_then(|v| v.normalized()).map_err(wrap)?;
        Ok((
            IndexRecord {
                corpus_id: entry.id.clone(),
                fused,
                fine_label: entry.fine_label,
                binary_label: entry.binary_label(),
            },
            ExplanationRecord { corpus_id: entry.id.clone(), expl_vec, fine_label: entry.fine_label },
        ))
    })?;
    let (mut records, mut explanations): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    records.sort_by(|a, b| a.corpus_id.cmp(&b.corpus_id));
    explanations.sort_by(|a, b| a.corpus_id.cmp(&b.corpus_id));
    Ok(EvidenceIndex { records, explanations })
}

/// Descending score, then ascending id.
pub(crate) fn hit_order(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Exact top-`k` by dot product among records passing `filter`.
pub fn query_topk<F>(index: &[IndexRecord], q: &Embedding, k: usize, filter: F) -> Result<Vec<(String, f64)>>
where
    F: Fn(&IndexRecord) -> bool + Sync,
{
    query_topk_with(index, q, k, filter, Execution::Sequential)
}

pub fn query_topk_with<F>(
    index: &[IndexRecord],
    q: &Embedding,
    k: usize,
    filter: F,
    exec: Execution,
) -> Result<Vec<(String, f64)>>
where
    F: Fn(&IndexRecord) -> bool + Sync,
{
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let scored = exec.map(index, |r| filter(r).then(|| dot(q.as_slice(), r.fused.as_slice())));
    let mut hits: Vec<(f64, &str)> =
        scored.into_iter().zip(index).filter_map(|(s, r)| s.map(|s| (s, r.corpus_id.as_str()))).collect();
    if hits.is_empty() {
        return Err(Error::EmptyPool);
    }
    hits.sort_by(hit_order);
    hits.truncate(k);
    Ok(hits.into_iter().map(|(s, id)| (id.to_string(), s)).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Fused(IndexRecord),
    Explanation(ExplanationRecord),
}

fn check_unit(id: &str, v: &Embedding) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::NotUnitNorm { id: id.to_string(), norm });
    }
    Ok(())
}

impl EvidenceIndex {
    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.fused.dim())
    }

    /// Writes a header line followed by one JSON line per record.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dim: self.dim(),
            count: self.records.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Fused(r.clone()))?;
            w.write_all(b"\n")?;
        }
        for r in &self.explanations {
            serde_json::to_writer(&mut w, &Line::Explanation(r.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads and validates an index file (format, counts, unit norms).
    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::IndexFormat("empty file".into())),
        };
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!("unsupported {} v{}", header.format, header.version)));
        }
        let mut idx = EvidenceIndex::default();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)? {
                Line::Fused(r) => {
                    check_unit(&r.corpus_id, &r.fused)?;
                    if r.fused.dim() != header.dim {
                        return Err(Error::DimMismatch { expected: header.dim, got: r.fused.dim() });
                    }
                    if r.binary_label != r.fine_label.binary() {
                        return Err(Error::IndexFormat(format!("{}: binary label contradicts fine label", r.corpus_id)));
                    }
                    idx.records.push(r);
                }
                Line::Explanation(r) => {
                    check_unit(&r.corpus_id, &r.expl_vec)?;
                    idx.explanations.push(r);
                }
            }
        }
        if idx.records.len() != header.count {
            return Err(Error::IndexFormat(format!("header says {} records, found {}", header.count, idx.records.len())));
        }
        Ok(idx)
    }
}
