//! Builders for scripted fixture worlds: generations with chosen confidence
//! profiles, a small labeled corpus, and the files a CLI run expects.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::backend::{FixtureBackend, FixtureRecord, RawGeneration};
use crate::error::Result;
use crate::model::{BinaryLabel, CorpusEntry, FineGrainedLabel, GeneratedToken, ImageRef, Sample, TokenLogprob};

const REAL_FILLERS: &[&str] = &["genuine", "authentic", "true", "legitimate", "accurate", "consistent", "plausible", "likely", "legit"];
const FAKE_FILLERS: &[&str] = &["false", "fraud", "unrelated", "fictional", "inconsistent", "missing", "fabric", "fict", "mis"];

/// Shape of a plain answer's confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    /// Probability of the predicted label word; the other label gets `1 - p`.
    pub p_pred: f64,
    /// Lexicon candidates (out of 10) that support the prediction, counting
    /// the label word itself.
    pub n_support: usize,
    /// Probability of the single explanation token.
    pub p_sent: f64,
}

impl Profile {
    pub const LOW: Profile = Profile { p_pred: 0.55, n_support: 3, p_sent: 0.3 };
    pub const HIGH: Profile = Profile { p_pred: 0.9, n_support: 8, p_sent: 0.9 };
}

pub const K_TOK: usize = 10;

/// A verdict response with token logprobs, 10 lexicon-only candidates at the
/// label position, and a one-token explanation.
pub fn plain_generation(pred: BinaryLabel, explanation: &str, profile: Profile) -> RawGeneration {
    assert!((1..=K_TOK - 1).contains(&profile.n_support), "support must leave room for the other label word");
    let label_word = pred.as_str();
    let other_word = pred.opposite().as_str();
    let (same, opposite) = match pred {
        BinaryLabel::Real => (REAL_FILLERS, FAKE_FILLERS),
        BinaryLabel::Fake => (FAKE_FILLERS, REAL_FILLERS),
    };
    let mut top = vec![
        TokenLogprob { token: label_word.into(), logprob: profile.p_pred.ln() },
        TokenLogprob { token: other_word.into(), logprob: (1.0 - profile.p_pred).ln() },
    ];
    let fillers = same.iter().take(profile.n_support - 1).chain(opposite.iter().take(K_TOK - 1 - profile.n_support));
    for (i, w) in fillers.enumerate() {
        top.push(TokenLogprob { token: (*w).into(), logprob: (1e-3 / (i + 2) as f64).ln() });
    }
    let expl = format!(" {explanation}");
    let tok = |t: &str, lp: f64| GeneratedToken { token: t.into(), logprob: Some(lp), top: vec![] };
    let mut label_tok = tok(&format!(" {label_word}"), profile.p_pred.ln());
    label_tok.top = top;
    let tokens = vec![
        tok("The", -0.01),
        tok(" pair", -0.01),
        tok(" is", -0.01),
        label_tok,
        tok(" because", -0.01),
        tok(&expl, profile.p_sent.ln()),
    ];
    RawGeneration { text: format!("The pair is {label_word} because{expl}"), tokens }
}

/// A verdict with no token stream, as used for augmented answers.
pub fn verdict_generation(label: BinaryLabel, explanation: &str) -> RawGeneration {
    RawGeneration { text: format!("The pair is {label} because {explanation}"), tokens: vec![] }
}

/// Two entries per binary class spread across fine labels, plus one entry
/// for every remaining fake category.
pub fn toy_corpus() -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    let mut push = |id: String, fine: FineGrainedLabel, expl: &str| {
        out.push(CorpusEntry {
            id: id.clone(),
            image: ImageRef::Path(format!("corpus/{id}.jpg")),
            text: format!("Corpus claim {id} about Geneva"),
            explanation: format!("{expl} Reported by Reuters in {id}."),
            fine_label: fine,
        })
    };
    push("c00".into(), FineGrainedLabel::RealNews, "The image and caption agree.");
    push("c01".into(), FineGrainedLabel::RealNews, "Dates and places match the event.");
    for (i, fine) in FineGrainedLabel::ALL.iter().filter(|f| **f != FineGrainedLabel::RealNews).enumerate() {
        push(format!("c{:02}", i + 2), *fine, "The caption misattributes the scene.");
    }
    out
}

/// One sample of a scripted world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Script {
    pub gold: BinaryLabel,
    pub plain: BinaryLabel,
    pub profile: Profile,
    pub augmented: BinaryLabel,
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:02}")
}

/// A fixture world whose generations follow `scripts`. Embeddings and NER
/// are synthetic.
pub struct World {
    pub backend: FixtureBackend,
    pub samples: Vec<Sample>,
    pub corpus: Vec<CorpusEntry>,
}

impl World {
    pub fn scripted(scripts: &[Script]) -> World {
        let mut backend = FixtureBackend::synthetic(32, 16);
        let mut samples = Vec::new();
        for (i, s) in scripts.iter().enumerate() {
            let id = sample_id(i);
            samples.push(Sample {
                id: id.clone(),
                image: ImageRef::Path(format!("data/{id}.jpg")),
                text: format!("Claim {id} from Lisbon"),
                gold_binary: Some(s.gold),
                gold_fine: None,
            });
            backend.insert(FixtureRecord::Generate {
                key: Some(format!("plain/{id}")),
                request: None,
                response: plain_generation(s.plain, &format!("Sample {id} shows Lisbon."), s.profile),
            });
            backend.insert(FixtureRecord::Generate {
                key: Some(format!("augmented/{id}")),
                request: None,
                response: verdict_generation(s.augmented, "the evidence settles it."),
            });
        }
        World { backend, samples, corpus: toy_corpus() }
    }

    /// Writes `data.jsonl`, `corpus.jsonl` and `fixtures.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<WorldFiles> {
        let files = WorldFiles {
            data: dir.join("data.jsonl"),
            corpus: dir.join("corpus.jsonl"),
            fixtures: dir.join("fixtures.jsonl"),
        };
        write_jsonl(&files.data, &self.samples)?;
        write_jsonl(&files.corpus, &self.corpus)?;
        self.backend.save(&files.fixtures)?;
        Ok(files)
    }
}

#[derive(Debug, Clone)]
pub struct WorldFiles {
    pub data: PathBuf,
    pub corpus: PathBuf,
    pub fixtures: PathBuf,
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut f, it)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::{confidence_of, SupportLexicons, TokenClassifier};
    use crate::model::parse_response;

    #[test]
    fn profiles_produce_expected_confidence() {
        let fx = FixtureBackend::synthetic(8, 8);
        let lex = SupportLexicons::default();
        let cls = TokenClassifier::new(&lex, &fx);
        for pred in [BinaryLabel::Real, BinaryLabel::Fake] {
            for (p, tok) in [(Profile::LOW, 0.3), (Profile::HIGH, 0.8)] {
                let g = plain_generation(pred, "x.", p);
                let resp = parse_response(&g.text, &g.tokens, K_TOK).unwrap();
                assert_eq!(resp.predicted, pred);
                let c = confidence_of(&resp, &cls, K_TOK).unwrap();
                assert_eq!(c.tau_tok, tok);
                assert!((c.tau_sent - p.p_sent).abs() < 1e-12);
            }
        }
    }
}
