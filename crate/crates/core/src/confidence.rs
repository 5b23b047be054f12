//! The three confidence scores for a model answer: label-level uncertainty,
//! token-level support among the top candidates, and sentence-level
//! confidence of the explanation.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Embedding};
use crate::error::{Error, Result};
use crate::model::{normalize_token, BinaryLabel, ModelResponse, TokenLogprob, PROB_FLOOR};

pub const PLACEHOLDER: &str = "{word}";

const REAL_WORDS: &[&str] = &[
    "real", "genuine", "authentic", "true", "legitimate", "realistic", "legit", "fact", "accurate", "related",
    "likely", "consistent", "plausible",
];

// "un" and "mis" are matched as whole tokens, not as prefixes.
const FAKE_WORDS: &[&str] = &[
    "fake", "missing", "false", "fabric", "fict", "un", "mis", "fraud", "unrelated", "fictional", "inconsistent",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidenceTriple {
    pub tau_label: f64,
    pub tau_tok: f64,
    pub tau_sent: f64,
}

impl ConfidenceTriple {
    /// Assigned to responses that could not be parsed.
    pub const UNPARSEABLE: ConfidenceTriple = ConfidenceTriple { tau_label: 0.0, tau_tok: 0.0, tau_sent: 0.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.tau_label, self.tau_tok, self.tau_sent]
    }
}

/// Label lexicons and the sentence templates for the semantic fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportLexicons {
    pub real_words: Vec<String>,
    pub fake_words: Vec<String>,
    pub real_template: String,
    pub fake_template: String,
    pub query_template: String,
}

impl Default for SupportLexicons {
    fn default() -> Self {
        SupportLexicons {
            real_words: REAL_WORDS.iter().map(|s| s.to_string()).collect(),
            fake_words: FAKE_WORDS.iter().map(|s| s.to_string()).collect(),
            real_template: "The post is {word} and factually correct.".into(),
            fake_template: "The post is {word} and contains misinformation.".into(),
            query_template: "This post is {word}.".into(),
        }
    }
}

impl SupportLexicons {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLexicons(m));
        if self.real_words.is_empty() || self.fake_words.is_empty() {
            return bad("both lexicons must be non-empty".into());
        }
        let real: HashSet<_> = self.real_words.iter().collect();
        if let Some(w) = self.fake_words.iter().find(|w| real.contains(w)) {
            return bad(format!("`{w}` appears in both lexicons"));
        }
        for t in [&self.real_template, &self.fake_template, &self.query_template] {
            if t.matches(PLACEHOLDER).count() != 1 {
                return bad(format!("template `{t}` must contain exactly one {PLACEHOLDER}"));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let lex: SupportLexicons = serde_json::from_slice(&std::fs::read(path)?)?;
        lex.validate()?;
        Ok(lex)
    }

    fn lexical(&self, normalized: &str) -> Option<BinaryLabel> {
        if self.real_words.iter().any(|w| w == normalized) {
            Some(BinaryLabel::Real)
        } else if self.fake_words.iter().any(|w| w == normalized) {
            Some(BinaryLabel::Fake)
        } else {
            None
        }
    }
}

fn fill(template: &str, word: &str) -> String {
    template.replacen(PLACEHOLDER, word, 1)
}

/// `|log p_real - log p_fake| / |log p_real + log p_fake|`.
///
/// Logprobs at or above `ln(1 - 1e-6)` are clamped there so the denominator
/// never vanishes.
pub fn label_uncertainty(logp_real: f64, logp_fake: f64) -> Result<f64> {
    if !logp_real.is_finite() || !logp_fake.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let ceil = (1.0 - PROB_FLOOR).ln();
    let (a, b) = (logp_real.min(ceil), logp_fake.min(ceil));
    Ok(((a - b) / (a + b)).abs())
}

/// Geometric-mean token probability of the explanation; 0 for no tokens.
pub fn sentence_confidence(tokens: &[TokenLogprob]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    // Summing in sorted order makes the result independent of token order.
    let mut lps: Vec<f64> = tokens.iter().map(|t| t.logprob).collect();
    lps.sort_by(f64::total_cmp);
    let mean = lps.iter().sum::<f64>() / lps.len() as f64;
    mean.exp()
}

/// Classifies candidate tokens as supporting Real or Fake: exact lexicon
/// match first, then mean cosine similarity of the templated query sentence
/// against each lexicon's reference sentences.
///
/// Results are memoized per normalized token; the table is shared across
/// threads.
pub struct TokenClassifier<'a> {
    lex: &'a SupportLexicons,
    backend: &'a dyn Backend,
    references: OnceLock<(Vec<Embedding>, Vec<Embedding>)>,
    memo: RwLock<HashMap<String, BinaryLabel>>,
}

impl<'a> TokenClassifier<'a> {
    pub fn new(lex: &'a SupportLexicons, backend: &'a dyn Backend) -> Self {
        TokenClassifier {
            lex,
            backend,
            references: OnceLock::new(),
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn lexicons(&self) -> &SupportLexicons {
        self.lex
    }

    fn references(&self) -> Result<&(Vec<Embedding>, Vec<Embedding>)> {
        if let Some(r) = self.references.get() {
            return Ok(r);
        }
        let embed_all = |words: &[String], template: &str| -> Result<Vec<Embedding>> {
            words.iter().map(|w| self.backend.embed_sentence(&fill(template, w))).collect()
        };
        let refs = (
            embed_all(&self.lex.real_words, &self.lex.real_template)?,
            embed_all(&self.lex.fake_words, &self.lex.fake_template)?,
        );
                let _ = self.references.set(refs);
        Ok(self.references.get().expect("just initialized"))
    }

    /// Mean cosine similarity of the token's query sentence to the real and
    /// fake reference groups.
    pub fn similarities(&self, normalized: &str) -> Result<(f64, f64)> {
        let query = self.backend.embed_sentence(&fill(&self.lex.query_template, normalized))?;
        let (real, fake) = self.references()?;
        let mean = |group: &[Embedding]| group.iter().map(|r| query.cosine(r)).sum::<f64>() / group.len() as f64;
        Ok((mean(real), mean(fake)))
    }

    /// `None` when the token is empty after normalization.
    pub fn classify(&self, token: &str) -> Result<Option<BinaryLabel>> {
        let norm = normalize_token(token);
        if norm.is_empty() {
            return Ok(None);
        }
        if let Some(l) = self.lex.lexical(&norm) {
            return Ok(Some(l));
        }
        if let Some(&l) = self.memo.read().expect("memo poisoned").get(&norm) {
            return Ok(Some(l));
        }
        let (sim_real, sim_fake) = self.similarities(&norm)?;
        // Exact ties go to Fake.
        let label = if sim_real > sim_fake { BinaryLabel::Real } else { BinaryLabel::Fake };
        self.memo.write().expect("memo poisoned").insert(norm, label);
        Ok(Some(label))
    }
}

/// Number of top candidates classified to the predicted label, divided by
/// `k_tok`. Candidates that normalize to nothing count as non-supporting.
pub fn token_support(resp: &ModelResponse, classifier: &TokenClassifier<'_>, k_tok: usize) -> Result<f64> {
    if resp.top_candidates.is_empty() {
        return Err(Error::EmptyInput("top candidates"));
    }
    if k_tok == 0 {
        return Err(Error::Config("k_tok must be positive".into()));
    }
    let mut supporting = 0usize;
    for c in resp.top_candidates.iter().take(k_tok) {
        if classifier.classify(&c.token)? == Some(resp.predicted) {
            supporting += 1;
        }
    }
    Ok(supporting as f64 / k_tok as f64)
}

/// All three scores for a parsed response.
pub fn confidence_of(resp: &ModelResponse, classifier: &TokenClassifier<'_>, k_tok: usize) -> Result<ConfidenceTriple> {
    Ok(ConfidenceTriple {
        tau_label: label_uncertainty(resp.label_logprobs.0, resp.label_logprobs.1)?,
        tau_tok: token_support(resp, classifier, k_tok)?,
        tau_sent: sentence_confidence(&resp.explanation_token_logprobs),
    })
}
