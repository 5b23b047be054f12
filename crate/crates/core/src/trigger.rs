//! Retrieval trigger predicate and the two-stage threshold search: uniform
//! Monte Carlo exploration of the empirical score box, then a local grid
//! around the best few candidates.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceTriple;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple {
    pub theta_label: f64,
    pub theta_tok: f64,
    pub theta_sent: f64,
}

impl ThresholdTriple {
    pub fn new(theta_label: f64, theta_tok: f64, theta_sent: f64) -> Self {
        ThresholdTriple { theta_label, theta_tok, theta_sent }
    }

    fn from_array(a: [f64; 3]) -> Self {
        ThresholdTriple::new(a[0], a[1], a[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta_label, self.theta_tok, self.theta_sent]
    }

    fn lex_cmp(&self, other: &Self) -> Ordering {
        self.as_array()
            .iter()
            .zip(other.as_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Retrieval fires only when all three scores fall strictly below their thresholds.
pub fn should_trigger(c: &ConfidenceTriple, t: &ThresholdTriple) -> bool {
    c.tau_label < t.theta_label && c.tau_tok < t.theta_tok && c.tau_sent < t.theta_sent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub sample_id: String,
    pub confidence: ConfidenceTriple,
    /// The un-augmented prediction matched gold.
    pub correct_plain: bool,
    /// The retrieval-augmented prediction matched gold.
    pub correct_aug: bool,
}

/// Per-sample outcomes on the validation set, computed once so that scoring
/// a threshold triple is pure arithmetic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationCache {
    records: Vec<CacheRecord>,
}

impl ValidationCache {
    pub fn new(records: Vec<CacheRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCache);
        }
        Ok(ValidationCache { records })
    }

    pub fn records(&self) -> &[CacheRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-dimension `[min, max]` of the observed scores.
    pub fn ranges(&self) -> Result<[(f64, f64); 3]> {
        if self.records.is_empty() {
            return Err(Error::EmptyCache);
        }
        let mut r = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for rec in &self.records {
            for (d, v) in rec.confidence.as_array().into_iter().enumerate() {
                r[d].0 = r[d].0.min(v);
                r[d].1 = r[d].1.max(v);
            }
        }
        Ok(r)
    }

    /// `(correct count, trigger count)` under `t`.
    pub fn evaluate(&self, t: &ThresholdTriple) -> (usize, usize) {
        self.records.iter().fold((0, 0), |(score, triggers), r| {
            if should_trigger(&r.confidence, t) {
                (score + r.correct_aug as usize, triggers + 1)
            } else {
                (score + r.correct_plain as usize, triggers)
            }
        })
    }
}

/// Number of validation samples whose selected prediction is correct.
pub fn score(t: &ThresholdTriple, cache: &ValidationCache) -> Result<usize> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    Ok(cache.evaluate(t).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_iter: usize,
    pub top_k_centers: usize,
    /// Local step as a fraction of each dimension's empirical range.
    pub delta: f64,
    /// Local grid extends `-radius..=radius` steps per dimension.
    pub local_radius: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { n_iter: 100, top_k_centers: 5, delta: 0.02, local_radius: 2, seed: 0 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k_centers == 0 || self.n_iter < self.top_k_centers {
            return Err(Error::Config("need n_iter >= top_k_centers >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be positive".into()));
        }
        Ok(())
    }
}

/// A scored threshold candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub thresholds: ThresholdTriple,
    pub score: usize,
    pub triggers: usize,
}

impl Candidate {
    /// Best first: higher score, then fewer triggers, then lexicographically smaller.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .score
            .cmp(&self.score)
            .then(self.triggers.cmp(&other.triggers))
            .then_with(|| self.thresholds.lex_cmp(&other.thresholds))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    /// Best candidate of the Monte Carlo stage alone.
    pub best_global: Candidate,
    pub evaluated: usize,
}

fn evaluate_all(cache: &ValidationCache, triples: &[ThresholdTriple], exec: Execution) -> Vec<Candidate> {
    exec.map(triples, |t| {
        let (score, triggers) = cache.evaluate(t);
        Candidate { thresholds: *t, score, triggers }
    })
}

fn best_of(cands: &[Candidate]) -> Candidate {
    *cands.iter().min_by(|a, b| a.rank(b)).expect("non-empty candidate set")
}

pub fn hybrid_search(cache: &ValidationCache, cfg: &SearchConfig) -> Result<SearchResult> {
    hybrid_search_with(cache, cfg, Execution::default())
}

/// Two-stage search. Deterministic for a given seed regardless of `exec`.
pub fn hybrid_search_with(cache: &ValidationCache, cfg: &SearchConfig, exec: Execution) -> Result<SearchResult> {
    cfg.validate()?;
    let ranges = cache.ranges()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let global: Vec<ThresholdTriple> = (0..cfg.n_iter)
        .map(|_| {
            ThresholdTriple::from_array(ranges.map(|(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }))
        })
        .collect();
    let mut stage1 = evaluate_all(cache, &global, exec);
    let best_global = best_of(&stage1);

    stage1.sort_by(|a, b| a.rank(b));
    let steps = ranges.map(|(lo, hi)| cfg.delta * (hi - lo));
    let r = cfg.local_radius as i64;
    let offsets: Vec<[i64; 3]> = (-r..=r)
        .flat_map(|i| (-r..=r).flat_map(move |j| (-r..=r).map(move |k| [i, j, k])))
        .collect();
    let local: Vec<ThresholdTriple> = stage1
        .iter()
        .take(cfg.top_k_centers)
        .flat_map(|center| {
            let c = center.thresholds.as_array();
            offsets.iter().map(move |off| {
                ThresholdTriple::from_array(std::array::from_fn(|d| {
                    (c[d] + off[d] as f64 * steps[d]).clamp(ranges[d].0, ranges[d].1)
                }))
            })
        })
        .collect();
    let stage2 = evaluate_all(cache, &local, exec);

    let best = best_of(&[best_global, best_of(&stage2)]);
    Ok(SearchResult { best, best_global, evaluated: global.len() + local.len() })
}

/// Frozen thresholds as written by `exdr tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub theta_label: f64,
    pub theta_tok: f64,
    pub theta_sent: f64,
    pub val_score: usize,
    pub n_iter: usize,
    pub seed: u64,
}

impl ThresholdsFile {
    pub fn from_search(res: &SearchResult, cfg: &SearchConfig) -> Self {
        let t = res.best.thresholds;
        ThresholdsFile {
            theta_label: t.theta_label,
            theta_tok: t.theta_tok,
            theta_sent: t.theta_sent,
            val_score: res.best.score,
            n_iter: cfg.n_iter,
            seed: cfg.seed,
        }
    }

    pub fn thresholds(&self) -> ThresholdTriple {
        ThresholdTriple::new(self.theta_label, self.theta_tok, self.theta_sent)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}
