//! End-to-end orchestration: plain verdict, confidence, trigger decision,
//! contrastive retrieval, augmented verdict, final selection and reporting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Backend, DEFAULT_K_TOK};
use crate::confidence::{confidence_of, ConfidenceTriple, SupportLexicons, TokenClassifier};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::index::{fused_feature, EvidenceIndex};
use crate::metrics::{MetricsReport, RunCounts};
use crate::model::{parse_response, parse_verdict, BinaryLabel, CorpusEntry, FineGrainedLabel, ModelResponse, Sample};
use crate::prompts::{plain_request, PromptSet};
use crate::retriever::{
    assemble_augmented_prompt, infer_fine_label, retrieve_contrastive, ContrastivePair, InferredLabel, DEFAULT_K_VOTE,
};
use crate::trigger::{hybrid_search_with, should_trigger, CacheRecord, SearchConfig, SearchResult, ThresholdTriple, ThresholdsFile, ValidationCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoRag,
    FullRag,
    DynamicRag,
}

impl Mode {
    pub fn key(self) -> &'static str {
        match self {
            Mode::NoRag => "no",
            Mode::FullRag => "full",
            Mode::DynamicRag => "dynamic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "no" | "norag" | "none" => Ok(Mode::NoRag),
            "full" | "fullrag" => Ok(Mode::FullRag),
            "dynamic" | "dynamicrag" | "dyn" => Ok(Mode::DynamicRag),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected no, full or dynamic)"))),
        }
    }
}

/// Parses a comma-separated mode list such as `no,full,dynamic`.
pub fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    let set: BTreeSet<Mode> = s.split(',').filter(|p| !p.trim().is_empty()).map(Mode::from_str).collect::<Result<_>>()?;
    if set.is_empty() {
        return Err(Error::Config("no modes given".into()));
    }
    Ok(set.into_iter().collect())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub modes: Vec<Mode>,
    pub thresholds: Option<ThresholdTriple>,
    pub k_vote: usize,
    pub k_tok: usize,
    pub prompt3_literal: bool,
    pub prompts: PromptSet,
    pub lexicons: SupportLexicons,
    pub exec: Execution,
    /// Worker limit; 0 leaves the pool size to rayon.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            modes: vec![Mode::DynamicRag],
            thresholds: None,
            k_vote: DEFAULT_K_VOTE,
            k_tok: DEFAULT_K_TOK,
            prompt3_literal: false,
            prompts: PromptSet::default(),
            lexicons: SupportLexicons::default(),
            exec: Execution::default(),
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, has_index: bool) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("no modes selected".into()));
        }
        if self.k_vote == 0 || self.k_tok == 0 {
            return Err(Error::Config("k_vote and k_tok must be positive".into()));
        }
        if self.modes.contains(&Mode::DynamicRag) && self.thresholds.is_none() {
            return Err(Error::Config("dynamic mode needs thresholds".into()));
        }
        if self.modes.iter().any(|m| *m != Mode::NoRag) && !has_index {
            return Err(Error::Config("full and dynamic modes need an evidence index".into()));
        }
        self.lexicons.validate()
    }
}

/// Result of one sample under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub mode: Mode,
    #[serde(default)]
    pub gold: Option<BinaryLabel>,
    pub plain_pred: Option<BinaryLabel>,
    pub triggered: bool,
    pub augmented_pred: Option<BinaryLabel>,
    pub final_pred: Option<BinaryLabel>,
    pub confidence: ConfidenceTriple,
    pub evidence: Option<ContrastivePair>,
    pub inferred_label: Option<FineGrainedLabel>,
    /// Set when the sample failed; failed samples are left out of metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PlainPass {
    pub response: Option<ModelResponse>,
    pub pred: Option<BinaryLabel>,
    pub confidence: ConfidenceTriple,
}

#[derive(Debug, Clone)]
pub struct Augmentation {
    pub inferred: InferredLabel,
    pub pair: ContrastivePair,
    pub pred: Option<BinaryLabel>,
}

/// Everything a run needs, borrowed for its duration.
pub struct Engine<'a> {
    backend: &'a dyn Backend,
    index: Option<&'a EvidenceIndex>,
    corpus: HashMap<String, CorpusEntry>,
    cfg: &'a RunConfig,
    classifier: TokenClassifier<'a>,
}

impl<'a> Engine<'a> {
    pub fn new(backend: &'a dyn Backend, cfg: &'a RunConfig, index: Option<&'a EvidenceIndex>, corpus: &[CorpusEntry]) -> Result<Self> {
        cfg.validate(index.is_some())?;
        if let Some(idx) = index {
            if idx.records.is_empty() {
                return Err(Error::EmptyIndex);
            }
            if let Some(r) = idx.records.iter().find(|r| !corpus.iter().any(|c| c.id == r.corpus_id)) {
                return Err(Error::MissingCorpusEntry(r.corpus_id.clone()));
            }
        }
        Ok(Engine {
            backend,
            index,
            corpus: corpus.iter().map(|c| (c.id.clone(), c.clone())).collect(),
            cfg,
            classifier: TokenClassifier::new(&cfg.lexicons, backend),
        })
    }

    pub fn config(&self) -> &RunConfig {
        self.cfg
    }

    /// Plain generation and its confidence. An unparseable answer yields no
    /// prediction and the all-zero confidence. Missing logprobs are only
    /// tolerated when `need_confidence` is false.
    pub fn plain(&self, sample: &Sample, need_confidence: bool) -> Result<PlainPass> {
        let req = plain_request(sample, &self.cfg.prompts, self.cfg.k_tok);
        let raw = self.backend.generate_raw(&req)?;
        match parse_response(&raw.text, &raw.tokens, self.cfg.k_tok) {
            Ok(resp) => {
                let confidence = confidence_of(&resp, &self.classifier, self.cfg.k_tok)?;
                Ok(PlainPass { pred: Some(resp.predicted), response: Some(resp), confidence })
            }
            Err(Error::UnparseableResponse(_)) => {
                Ok(PlainPass { response: None, pred: None, confidence: ConfidenceTriple::UNPARSEABLE })
            }
            Err(Error::MissingLogprobs) if !need_confidence => {
                let (verdict, _) = parse_verdict(&raw.text)?;
                Ok(PlainPass { response: None, pred: Some(verdict.label), confidence: ConfidenceTriple::UNPARSEABLE })
            }
            Err(e) => Err(e),
        }
    }

    /// Retrieval and the augmented generation for one sample.
    pub fn augment(&self, sample: &Sample, plain: &PlainPass) -> Result<Augmentation> {
        let index = self.index.ok_or_else(|| Error::Config("retrieval needs an evidence index".into()))?;
        let explanation = plain.response.as_ref().map(|r| r.explanation.as_str()).filter(|e| !e.trim().is_empty());
        let fused_q = fused_feature(self.backend, &sample.image, &sample.text, explanation)?;
        let expl_vec = self.backend.embed_text(explanation.unwrap_or(&sample.text))?.normalized()?;
        let inferred = infer_fine_label(&expl_vec, &index.explanations, self.cfg.k_vote)?;
        let predicted = plain.pred.unwrap_or_else(|| inferred.label.binary());
        let pair = retrieve_contrastive(&fused_q, inferred.label, predicted, &index.records)?;
        let req = assemble_augmented_prompt(sample, &pair, &self.corpus, &self.cfg.prompts, self.cfg.prompt3_literal, self.cfg.k_tok)?;
        let raw = self.backend.generate_raw(&req)?;
        let pred = match parse_verdict(&raw.text) {
            Ok((v, _)) => Some(v.label),
            Err(Error::UnparseableResponse(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Augmentation { inferred, pair, pred })
    }

    /// One outcome per configured mode. The plain pass is shared, and the
    /// augmented pass runs at most once.
    pub fn process(&self, sample: &Sample) -> Vec<SampleOutcome> {
        let modes = &self.cfg.modes;
        let base = |mode| SampleOutcome {
            sample_id: sample.id.clone(),
            mode,
            gold: sample.gold_binary,
            plain_pred: None,
            triggered: false,
            augmented_pred: None,
            final_pred: None,
            confidence: ConfidenceTriple::UNPARSEABLE,
            evidence: None,
            inferred_label: None,
            error: None,
        };
        let failed = |mode, e: &Error| SampleOutcome { error: Some(e.to_string()), ..base(mode) };

        let plain = match self.plain(sample, modes.contains(&Mode::DynamicRag)) {
            Ok(p) => p,
            Err(e) => return modes.iter().map(|&m| failed(m, &e)).collect(),
        };
        let triggered: Vec<bool> = modes
            .iter()
            .map(|m| match m {
                Mode::NoRag => false,
                Mode::FullRag => true,
                Mode::DynamicRag => should_trigger(&plain.confidence, self.cfg.thresholds.as_ref().expect("validated")),
            })
            .collect();
        let aug = triggered.contains(&true).then(|| self.augment(sample, &plain));

        modes
            .iter()
            .zip(triggered)
            .map(|(&mode, trig)| {
                let mut o = SampleOutcome { plain_pred: plain.pred, confidence: plain.confidence, triggered: trig, ..base(mode) };
                if !trig {
                    o.final_pred = plain.pred;
                    return o;
                }
                match aug.as_ref().expect("augmented when triggered") {
                    Ok(a) => {
                        o.augmented_pred = a.pred;
                        o.final_pred = a.pred;
                        o.evidence = Some(a.pair.clone());
                        o.inferred_label = Some(a.inferred.label);
                    }
                    Err(e) => o.error = Some(e.to_string()),
                }
                o
            })
            .collect()
    }

    pub fn run(&self, samples: &[Sample]) -> Result<Report> {
        check_unique_ids(samples)?;
        let exec = self.cfg.exec;
        let per_sample = exec.with_jobs(self.cfg.jobs, || exec.map(samples, |s| self.process(s)));
        let mut outcomes: Vec<SampleOutcome> = per_sample.into_iter().flatten().collect();
        sort_outcomes(&mut outcomes);
        let mut summary = summarize(&outcomes)?;
        summary.settings = Some(self.settings());
        Ok(Report { outcomes, summary })
    }

    fn settings(&self) -> Value {
        json!({
            "modes": self.cfg.modes.iter().map(|m| m.key()).collect::<Vec<_>>(),
            "thresholds": self.cfg.thresholds,
            "k_vote": self.cfg.k_vote,
            "k_tok": self.cfg.k_tok,
            "prompt3_wording": if self.cfg.prompt3_literal { "literal" } else { "derived" },
        })
    }

    /// Plain and augmented correctness for every labeled validation sample.
    /// Samples whose backend calls fail are skipped and returned by id.
    pub fn validation_cache(&self, samples: &[Sample]) -> Result<(ValidationCache, Vec<(String, String)>)> {
        check_unique_ids(samples)?;
        if let Some(s) = samples.iter().find(|s| s.gold_binary.is_none()) {
            return Err(Error::Config(format!("validation sample `{}` has no gold label", s.id)));
        }
        let exec = self.cfg.exec;
        let results = exec.with_jobs(self.cfg.jobs, || {
            exec.map(samples, |s| -> Result<CacheRecord> {
                let gold = s.gold_binary.expect("checked above");
                let plain = self.plain(s, true)?;
                let aug = self.augment(s, &plain)?;
                Ok(CacheRecord {
                    sample_id: s.id.clone(),
                    confidence: plain.confidence,
                    correct_plain: plain.pred == Some(gold),
                    correct_aug: aug.pred == Some(gold),
                })
            })
        });
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (s, r) in samples.iter().zip(results) {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => failures.push((s.id.clone(), e.to_string())),
            }
        }
        records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Ok((ValidationCache::new(records)?, failures))
    }

    pub fn tune(&self, samples: &[Sample], search: &SearchConfig) -> Result<TuneResult> {
        let (cache, failures) = self.validation_cache(samples)?;
        let result = hybrid_search_with(&cache, search, self.cfg.exec)?;
        Ok(TuneResult { thresholds: ThresholdsFile::from_search(&result, search), result, cache, failures })
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub thresholds: ThresholdsFile,
    pub result: SearchResult,
    pub cache: ValidationCache,
    pub failures: Vec<(String, String)>,
}

fn check_unique_ids(samples: &[Sample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}

fn sort_outcomes(outcomes: &mut [SampleOutcome]) {
    outcomes.sort_by(|a, b| a.sample_id.cmp(&b.sample_id).then(a.mode.cmp(&b.mode)));
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    /// `None` when no sample is both labeled and free of failures.
    pub metrics: Option<MetricsReport>,
    pub n_triggered: usize,
    pub n_positive_fallback: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub modes: BTreeMap<Mode, ModeSummary>,
    pub n_samples: usize,
    pub n_evaluated: usize,
    pub n_failed: usize,
    pub n_unlabeled: usize,
    pub settings: Option<Value>,
}

impl Summary {
    pub fn to_json(&self) -> Value {
        let modes: serde_json::Map<String, Value> = self
            .modes
            .iter()
            .map(|(m, s)| {
                let mut block = s.metrics.as_ref().map_or_else(|| json!({}), MetricsReport::to_json);
                block["n_triggered"] = json!(s.n_triggered);
                block["n_positive_fallback"] = json!(s.n_positive_fallback);
                (m.key().to_string(), block)
            })
            .collect();
        let mut v = json!({
            "modes": modes,
            "n_samples": self.n_samples,
            "n_evaluated": self.n_evaluated,
            "n_failed": self.n_failed,
            "n_unlabeled": self.n_unlabeled,
        });
        if let Some(s) = &self.settings {
            v["settings"] = s.clone();
        }
        v
    }
}

/// Aggregates outcomes into per-mode metrics.
///
/// The metric set is every labeled sample with no failure in any mode, so
/// all modes share one denominator. A missing final prediction counts as
/// wrong. RE is reported for the dynamic mode when all three modes ran.
pub fn summarize(outcomes: &[SampleOutcome]) -> Result<Summary> {
    let mut by_sample: BTreeMap<&str, Vec<&SampleOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_sample.entry(o.sample_id.as_str()).or_default().push(o);
    }
    let modes: BTreeSet<Mode> = outcomes.iter().map(|o| o.mode).collect();

    let failed: BTreeSet<&str> =
        by_sample.iter().filter(|(_, os)| os.iter().any(|o| o.error.is_some())).map(|(id, _)| *id).collect();
    let unlabeled: BTreeSet<&str> =
        by_sample.iter().filter(|(_, os)| os.iter().any(|o| o.gold.is_none())).map(|(id, _)| *id).collect();
    let evaluated: BTreeSet<&str> =
        by_sample.keys().copied().filter(|id| !failed.contains(id) && !unlabeled.contains(id)).collect();

    let in_set = |m: Mode| -> Vec<&SampleOutcome> {
        outcomes.iter().filter(|o| o.mode == m && evaluated.contains(o.sample_id.as_str())).collect()
    };
    let correct = |o: &SampleOutcome| o.final_pred.is_some() && o.final_pred == o.gold;
    let n_correct = |m: Mode| in_set(m).into_iter().filter(|o| correct(o)).count();
    let all_three = modes.len() == 3;

    let mut summary_modes = BTreeMap::new();
    for &m in &modes {
        let set = in_set(m);
        let n_triggered = outcomes.iter().filter(|o| o.mode == m && o.triggered).count();
        let n_positive_fallback = outcomes
            .iter()
            .filter(|o| o.mode == m && o.evidence.as_ref().is_some_and(|e| e.positive_fallback))
            .count();
        let metrics = if set.is_empty() {
            None
        } else {
            let golds: Vec<BinaryLabel> = set.iter().map(|o| o.gold.expect("labeled")).collect();
            let preds: Vec<BinaryLabel> =
                set.iter().zip(&golds).map(|(o, g)| o.final_pred.unwrap_or(g.opposite())).collect();
            let triggered: Vec<&&SampleOutcome> = set.iter().filter(|o| o.triggered).collect();
            let counts = RunCounts {
                n_total: set.len(),
                n_retrieved: triggered.len(),
                n_err_classified: triggered.iter().filter(|o| o.plain_pred != o.gold).count(),
                n_dyn: if modes.contains(&Mode::DynamicRag) { n_correct(Mode::DynamicRag) } else { 0 },
                n_full: if modes.contains(&Mode::FullRag) { n_correct(Mode::FullRag) } else { 0 },
                n_no: if modes.contains(&Mode::NoRag) { n_correct(Mode::NoRag) } else { 0 },
            };
            Some(MetricsReport::compute(&preds, &golds, counts, all_three && m == Mode::DynamicRag)?)
        };
        summary_modes.insert(m, ModeSummary { metrics, n_triggered, n_positive_fallback });
    }
    Ok(Summary {
        modes: summary_modes,
        n_samples: by_sample.len(),
        n_evaluated: evaluated.len(),
        n_failed: failed.len(),
        n_unlabeled: unlabeled.difference(&failed).count(),
        settings: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Sorted by sample id, then mode.
    pub outcomes: Vec<SampleOutcome>,
    pub summary: Summary,
}

impl Report {
    pub fn outcomes_for(&self, mode: Mode) -> impl Iterator<Item = &SampleOutcome> {
        self.outcomes.iter().filter(move |o| o.mode == mode)
    }

    /// Writes `summary.json` and `outcomes.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_summary(&dir.join("summary.json"), &self.summary)?;
        write_outcomes(&dir.join("outcomes.jsonl"), &self.outcomes)
    }
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&summary.to_json())?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_outcomes(path: &Path, outcomes: &[SampleOutcome]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for o in outcomes {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes(path: &Path) -> Result<Vec<SampleOutcome>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    sort_outcomes(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        assert_eq!(parse_modes("dynamic,no,full").unwrap(), [Mode::NoRag, Mode::FullRag, Mode::DynamicRag]);
        assert_eq!(parse_modes("NoRag").unwrap(), [Mode::NoRag]);
        assert!(parse_modes("sometimes").is_err());
        assert!(parse_modes("").is_err());
    }

    #[test]
    fn config_requirements() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(true), Err(Error::Config(_))));
        let cfg = RunConfig { modes: vec![Mode::FullRag], ..RunConfig::default() };
        assert!(matches!(cfg.validate(false), Err(Error::Config(_))));
        let cfg = RunConfig { modes: vec![Mode::NoRag], ..RunConfig::default() };
        cfg.validate(false).unwrap();
    }

    fn outcome(id: &str, mode: Mode, gold: BinaryLabel, plain: BinaryLabel, trig: bool, aug: Option<BinaryLabel>) -> SampleOutcome {
        SampleOutcome {
            sample_id: id.into(),
            mode,
            gold: Some(gold),
            plain_pred: Some(plain),
            triggered: trig,
            augmented_pred: aug,
            final_pred: if trig { aug } else { Some(plain) },
            confidence: ConfidenceTriple::default(),
            evidence: None,
            inferred_label: None,
            error: None,
        }
    }

    #[test]
    fn summary_counts_and_exclusions() {
        use BinaryLabel::{Fake as F, Real as R};
        let mut os = vec![
            outcome("a", Mode::NoRag, F, R, false, None),
            outcome("a", Mode::DynamicRag, F, R, true, Some(F)),
            outcome("b", Mode::NoRag, R, R, false, None),
            outcome("b", Mode::DynamicRag, R, R, false, None),
            // Unparseable augmented answer counts as wrong.
            outcome("c", Mode::NoRag, R, F, false, None),
            outcome("c", Mode::DynamicRag, R, F, true, None),
        ];
        let mut bad = outcome("d", Mode::DynamicRag, R, R, true, None);
        bad.error = Some("backend unavailable".into());
        os.push(bad);
        os.push(outcome("d", Mode::NoRag, R, R, false, None));

        let s = summarize(&os).unwrap();
        assert_eq!((s.n_samples, s.n_evaluated, s.n_failed), (4, 3, 1));
        let dynm = s.modes[&Mode::DynamicRag].metrics.as_ref().unwrap();
        assert_eq!(dynm.counts.n_retrieved, 2);
        assert_eq!(dynm.counts.n_err_classified, 2);
        assert!((dynm.acc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dynm.ri, Some(1.0));
        assert!(dynm.re.is_none());
        let no = s.modes[&Mode::NoRag].metrics.as_ref().unwrap();
        assert!(no.ri.is_none());
        assert_eq!(s.to_json()["modes"]["no"]["ri"], "*");
    }

    #[test]
    fn outcomes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let os = vec![outcome("b", Mode::NoRag, BinaryLabel::Real, BinaryLabel::Real, false, None)];
        let p = dir.path().join("o.jsonl");
        write_outcomes(&p, &os).unwrap();
        assert_eq!(read_outcomes(&p).unwrap(), os);
    }
}
