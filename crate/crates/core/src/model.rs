//! Domain types shared by every stage, plus corpus/dataset ingestion and
//! parsing of the model's verdict sentence.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor probability used for label words the model never proposed and for
/// clamping degenerate probabilities.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Real,
    Fake,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Real => "real",
            BinaryLabel::Fake => "fake",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            BinaryLabel::Real => BinaryLabel::Fake,
            BinaryLabel::Fake => BinaryLabel::Real,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BinaryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(BinaryLabel::Real),
            "fake" => Ok(BinaryLabel::Fake),
            _ => Err(Error::UnknownBinaryLabel(s.to_string())),
        }
    }
}

/// How an image-text pair deceives, or `RealNews` when it does not.
///
/// Variant order is the canonical order used for deterministic tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineGrainedLabel {
    RealNews,
    ImageFabrication,
    EntityInconsistency,
    EventInconsistency,
    TimeOrSpaceInconsistency,
    IneffectiveVisualInformation,
}

impl FineGrainedLabel {
    pub const ALL: [FineGrainedLabel; 6] = [
        FineGrainedLabel::RealNews,
        FineGrainedLabel::ImageFabrication,
        FineGrainedLabel::EntityInconsistency,
        FineGrainedLabel::EventInconsistency,
        FineGrainedLabel::TimeOrSpaceInconsistency,
        FineGrainedLabel::IneffectiveVisualInformation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FineGrainedLabel::RealNews => "real_news",
            FineGrainedLabel::ImageFabrication => "image_fabrication",
            FineGrainedLabel::EntityInconsistency => "entity_inconsistency",
            FineGrainedLabel::EventInconsistency => "event_inconsistency",
            FineGrainedLabel::TimeOrSpaceInconsistency => "time_or_space_inconsistency",
            FineGrainedLabel::IneffectiveVisualInformation => "ineffective_visual_information",
        }
    }

    pub fn binary(self) -> BinaryLabel {
        binary_of(self)
    }
}

/// Projects a fine-grained label onto real/fake.
pub fn binary_of(fine: FineGrainedLabel) -> BinaryLabel {
    match fine {
        FineGrainedLabel::RealNews => BinaryLabel::Real,
        _ => BinaryLabel::Fake,
    }
}

impl fmt::Display for FineGrainedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FineGrainedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase();
        FineGrainedLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == wanted)
            .ok_or_else(|| Error::UnknownFineLabel(s.to_string()))
    }
}

/// Opaque reference to an image. Only backends ever look inside.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ImageRef {
    /// A filesystem path or URI.
    Path(String),
    /// Raw encoded image bytes.
    Bytes(Vec<u8>),
}

impl ImageRef {
    /// Stable textual key, used for fixture lookup and request hashing.
    pub fn key(&self) -> String {
        match self {
            ImageRef::Path(p) => p.clone(),
            ImageRef::Bytes(b) => format!("b64:{}", base64::engine::general_purpose::STANDARD.encode(b)),
        }
    }

    /// Base64 of the image content; paths are read from disk.
    pub fn to_base64(&self) -> Result<String> {
        let bytes = match self {
            ImageRef::Path(p) => std::fs::read(p)?,
            ImageRef::Bytes(b) => b.clone(),
        };
        Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
    }
}

impl Serialize for ImageRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for ImageRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.strip_prefix("b64:") {
            Some(rest) => base64::engine::general_purpose::STANDARD
                .decode(rest)
                .map(ImageRef::Bytes)
                .map_err(serde::de::Error::custom),
            None => Ok(ImageRef::Path(s)),
        }
    }
}

/// One image+text claim to verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image: ImageRef,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_binary: Option<BinaryLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_fine: Option<FineGrainedLabel>,
}

/// A retrievable piece of evidence: an annotated pair with its explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub image: ImageRef,
    pub text: String,
    pub explanation: String,
    pub fine_label: FineGrainedLabel,
}

impl CorpusEntry {
    pub fn binary_label(&self) -> BinaryLabel {
        binary_of(self.fine_label)
    }
}

/// A token paired with its log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    #[serde(rename = "t")]
    pub token: String,
    pub logprob: f64,
}

/// One generated token as emitted by a backend, with its alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedToken {
    #[serde(rename = "t")]
    pub token: String,
    #[serde(default)]
    pub logprob: Option<f64>,
    #[serde(default)]
    pub top: Vec<TokenLogprob>,
}

/// The model's answer, with everything the confidence scores need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub predicted: BinaryLabel,
    pub explanation: String,
    pub explanation_token_logprobs: Vec<TokenLogprob>,
    pub classification_position: usize,
    /// Sorted by logprob, descending.
    pub top_candidates: Vec<TokenLogprob>,
    /// `(log p_real, log p_fake)`, both finite and `<= 0`.
    pub label_logprobs: (f64, f64),
}

/// Lowercases a token and strips whitespace, sub-word markers and
/// surrounding punctuation.
pub fn normalize_token(token: &str) -> String {
    let mut t = token.trim();
    loop {
        let before = t.len();
        for marker in ["▁", "Ġ", "Ċ", "##"] {
            t = t.trim_start_matches(marker);
        }
        t = t.trim();
        if t.len() == before {
            break;
        }
    }
    t.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Byte offsets of the pieces of a verdict sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub label: BinaryLabel,
    /// Byte offset of the label word in the raw text.
    pub label_start: usize,
    /// Byte offset just past "because".
    pub because_end: usize,
}

/// Matches `The pair is {real|fake} because ...` (case-insensitive, after
/// leading whitespace) and returns the label with the explanation text.
pub fn parse_verdict(raw_text: &str) -> Result<(Verdict, String)> {
    let unparseable = || Error::UnparseableResponse(raw_text.chars().take(120).collect());
    // ASCII lowercasing keeps byte offsets aligned with the original.
    let lower = raw_text.to_ascii_lowercase();
    let mut pos = lower.len() - lower.trim_start().len();
    let expect_word = |word: &str, pos: &mut usize, need_space: bool| -> Option<usize> {
        let rest = &lower[*pos..];
        let trimmed = rest.trim_start();
        let skipped = rest.len() - trimmed.len();
        if need_space && skipped == 0 {
            return None;
        }
        if !trimmed.starts_with(word) {
            return None;
        }
        let start = *pos + skipped;
        *pos = start + word.len();
        Some(start)
    };
    expect_word("the", &mut pos, false).ok_or_else(unparseable)?;
    expect_word("pair", &mut pos, true).ok_or_else(unparseable)?;
    expect_word("is", &mut pos, true).ok_or_else(unparseable)?;
    let (label, label_start) = if let Some(s) = expect_word("real", &mut pos, true) {
        (BinaryLabel::Real, s)
    } else if let Some(s) = expect_word("fake", &mut pos, true) {
        (BinaryLabel::Fake, s)
    } else {
        return Err(unparseable());
    };
    expect_word("because", &mut pos, true).ok_or_else(unparseable)?;
    // "because" must end at a word boundary.
    if lower[pos..].chars().next().is_some_and(|c| c.is_alphanumeric()) {
        return Err(unparseable());
    }
    let explanation = raw_text[pos..].trim().to_string();
    Ok((
        Verdict {
            label,
            label_start,
            because_end: pos,
        },
        explanation,
    ))
}

/// Renders a verdict sentence in the form [`parse_verdict`] accepts.
pub fn render_verdict(label: BinaryLabel, explanation: &str) -> String {
    format!("The pair is {label} because {explanation}")
}

/// Clamps a logprob into the finite, strictly negative range used by the
/// confidence scores.
pub fn clamp_logprob(lp: f64) -> Result<f64> {
    if lp.is_nan() || lp == f64::INFINITY {
        return Err(Error::NonFiniteInput);
    }
    let ceil = (1.0 - PROB_FLOOR).ln();
    if lp >= ceil {
        return Ok(ceil);
    }
    if lp == f64::NEG_INFINITY {
        return Ok(PROB_FLOOR.ln());
    }
    Ok(lp)
}

/// Parses a generated response against its token stream.
///
/// The classification position is the token covering the verdict word.
/// When the token texts concatenate to `raw_text` this is resolved by byte
/// offsets; otherwise the first token normalizing to the verdict word is used.
pub fn parse_response(raw_text: &str, tokens: &[GeneratedToken], k_tok: usize) -> Result<ModelResponse> {
    let (verdict, explanation) = parse_verdict(raw_text)?;
    if tokens.is_empty() {
        return Err(Error::MissingLogprobs);
    }

    let concat: String = tokens.iter().map(|t| t.token.as_str()).collect();
    let (position, expl_from) = if concat == raw_text {
        let mut start = 0usize;
        let mut position = None;
        let mut expl_from = tokens.len();
        for (i, t) in tokens.iter().enumerate() {
            let end = start + t.token.len();
            if position.is_none() && start <= verdict.label_start && verdict.label_start < end {
                position = Some(i);
            }
            if start >= verdict.because_end && expl_from == tokens.len() {
                expl_from = i;
            }
            start = end;
        }
        (position.ok_or(Error::MissingLogprobs)?, expl_from)
    } else {
        let word = verdict.label.as_str();
        let position = tokens
            .iter()
            .position(|t| normalize_token(&t.token) == word)
            .ok_or(Error::MissingLogprobs)?;
        let expl_from = tokens[position..]
            .iter()
            .position(|t| normalize_token(&t.token) == "because")
            .map(|p| position + p + 1)
            .unwrap_or(tokens.len());
        (position, expl_from)
    };

    let cls = &tokens[position];
    if cls.top.is_empty() {
        return Err(Error::MissingLogprobs);
    }
    let mut top_candidates = cls.top.clone();
    top_candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
    top_candidates.truncate(k_tok);

    let floor = PROB_FLOOR.ln();
    let find = |word: &str| -> Result<f64> {
        match top_candidates.iter().find(|c| normalize_token(&c.token) == word) {
            Some(c) => clamp_logprob(c.logprob),
            None => Ok(floor),
        }
    };
    let label_logprobs = (find("real")?, find("fake")?);

    let explanation_token_logprobs = tokens[expl_from..]
        .iter()
        .map(|t| {
            t.logprob
                .map(|lp| TokenLogprob {
                    token: t.token.clone(),
                    logprob: lp,
                })
                .ok_or(Error::MissingLogprobs)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ModelResponse {
        predicted: verdict.label,
        explanation,
        explanation_token_logprobs,
        classification_position: position,
        top_candidates,
        label_logprobs,
    })
}

#[derive(Deserialize)]
struct CorpusRecord {
    id: String,
    image: ImageRef,
    text: String,
    explanation: String,
    fine_label: String,
}

#[derive(Deserialize)]
struct DatasetRecord {
    id: String,
    image: ImageRef,
    text: String,
    #[serde(default)]
    gold_binary: Option<String>,
    #[serde(default)]
    gold_fine: Option<String>,
}

fn for_each_record<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<()>,
{
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        f(line_no, rec)?;
    }
    Ok(())
}

/// Loads a JSON-lines corpus, validating every record. Entries keep file order.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for_each_record(path, |line, rec: CorpusRecord| {
        let malformed = |reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        if rec.text.trim().is_empty() {
            return Err(malformed("empty text"));
        }
        if rec.explanation.trim().is_empty() {
            return Err(malformed("empty explanation"));
        }
        let fine_label: FineGrainedLabel = rec.fine_label.parse()?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(CorpusEntry {
            id: rec.id,
            image: rec.image,
            text: rec.text,
            explanation: rec.explanation,
            fine_label,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Loads a JSON-lines dataset of claims. A missing `gold_binary` is derived
/// from `gold_fine` when that is present.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for_each_record(path, |line, rec: DatasetRecord| {
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason,
        };
        if rec.text.trim().is_empty() {
            return Err(malformed("empty text".into()));
        }
        let gold_fine = rec.gold_fine.as_deref().map(str::parse::<FineGrainedLabel>).transpose()?;
        let mut gold_binary = rec.gold_binary.as_deref().map(str::parse::<BinaryLabel>).transpose()?;
        if let Some(fine) = gold_fine {
            match gold_binary {
                Some(b) if b != fine.binary() => {
                    return Err(malformed(format!("gold_fine `{fine}` contradicts gold_binary `{b}`")))
                }
                None => gold_binary = Some(fine.binary()),
                _ => {}
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(Sample {
            id: rec.id,
            image: rec.image,
            text: rec.text,
            gold_binary,
            gold_fine,
        });
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn fine_labels_round_trip_and_project() {
        for l in FineGrainedLabel::ALL {
            assert_eq!(l.as_str().parse::<FineGrainedLabel>().unwrap(), l);
        }
        assert_eq!(binary_of(FineGrainedLabel::RealNews), BinaryLabel::Real);
        assert_eq!(binary_of(FineGrainedLabel::EntityInconsistency), BinaryLabel::Fake);
        assert_eq!(binary_of(FineGrainedLabel::IneffectiveVisualInformation), BinaryLabel::Fake);
        let fakes = FineGrainedLabel::ALL.iter().filter(|l| l.binary() == BinaryLabel::Fake).count();
        assert_eq!(fakes, 5);
    }

    #[test]
    fn binary_parse_is_case_insensitive_and_strict() {
        assert_eq!("REAL".parse::<BinaryLabel>().unwrap(), BinaryLabel::Real);
        assert_eq!("Fake".parse::<BinaryLabel>().unwrap(), BinaryLabel::Fake);
        assert!("maybe".parse::<BinaryLabel>().is_err());
    }

    #[test]
    fn corpus_loads_in_order() {
        let f = write_tmp(&[
            r#"{"id":"c1","image":"a.jpg","text":"t1","explanation":"e1","fine_label":"real_news"}"#,
            r#"{"id":"c2","image":"b.jpg","text":"t2","explanation":"e2","fine_label":"image_fabrication"}"#,
            r#"{"id":"c3","image":"c.jpg","text":"t3","explanation":"e3","fine_label":"time_or_space_inconsistency"}"#,
        ]);
        let c = load_corpus(f.path()).unwrap();
        assert_eq!(c.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), ["c1", "c2", "c3"]);
        assert_eq!(c[1].fine_label, FineGrainedLabel::ImageFabrication);
        assert_eq!(c[1].binary_label(), BinaryLabel::Fake);
    }

    #[test]
    fn corpus_rejects_duplicates_and_bad_labels() {
        let f = write_tmp(&[
            r#"{"id":"a1","image":"a.jpg","text":"t","explanation":"e","fine_label":"real_news"}"#,
            r#"{"id":"a1","image":"b.jpg","text":"t","explanation":"e","fine_label":"real_news"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::DuplicateId(id)) if id == "a1"));

        let f = write_tmp(&[r#"{"id":"a1","image":"a.jpg","text":"t","explanation":"e","fine_label":"satire"}"#]);
        assert!(matches!(load_corpus(f.path()), Err(Error::UnknownFineLabel(_))));

        let f = write_tmp(&[
            r#"{"id":"a1","image":"a.jpg","text":"t","explanation":"e","fine_label":"real_news"}"#,
            r#"{"id":"a2","image":"a.jpg","text":"t","fine_label":"real_news"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn dataset_checks_gold_consistency() {
        let f = write_tmp(&[
            r#"{"id":"s1","image":"a.jpg","text":"t","gold_fine":"entity_inconsistency"}"#,
            r#"{"id":"s2","image":"a.jpg","text":"t","gold_binary":"REAL"}"#,
            r#"{"id":"s3","image":"a.jpg","text":"t"}"#,
        ]);
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d[0].gold_binary, Some(BinaryLabel::Fake));
        assert_eq!(d[1].gold_binary, Some(BinaryLabel::Real));
        assert_eq!(d[2].gold_binary, None);

        let f = write_tmp(&[r#"{"id":"s1","image":"a.jpg","text":"t","gold_binary":"real","gold_fine":"image_fabrication"}"#]);
        assert!(matches!(load_dataset(f.path()), Err(Error::MalformedRecord { .. })));
    }

    #[test]
    fn verdicts_parse() {
        let (v, e) = parse_verdict("The pair is real because dates align.").unwrap();
        assert_eq!((v.label, e.as_str()), (BinaryLabel::Real, "dates align."));
        let (v, e) = parse_verdict("  The pair is FAKE because edited.").unwrap();
        assert_eq!((v.label, e.as_str()), (BinaryLabel::Fake, "edited."));
        assert!(matches!(parse_verdict("I cannot tell."), Err(Error::UnparseableResponse(_))));
        assert!(parse_verdict("The pair is realistic because x").is_err());
        assert!(parse_verdict("The pair is real becausex").is_err());
    }

    fn tok(t: &str, lp: f64) -> GeneratedToken {
        GeneratedToken { token: t.into(), logprob: Some(lp), top: vec![] }
    }

    #[test]
    fn response_locates_classification_token() {
        let mut cls = tok(" fake", -0.2);
        cls.top = vec![
            TokenLogprob { token: " real".into(), logprob: -1.9 },
            TokenLogprob { token: " fake".into(), logprob: -0.2 },
            TokenLogprob { token: " false".into(), logprob: -3.0 },
        ];
        let tokens = vec![
            tok("The", -0.01),
            tok(" pair", -0.01),
            tok(" is", -0.01),
            cls,
            tok(" because", -0.05),
            tok(" the", -0.3),
            tok(" logo", -0.7),
            tok(".", -0.1),
        ];
        let text: String = tokens.iter().map(|t| t.token.as_str()).collect();
        let r = parse_response(&text, &tokens, 10).unwrap();
        assert_eq!(r.predicted, BinaryLabel::Fake);
        assert_eq!(r.classification_position, 3);
        assert_eq!(r.explanation, "the logo.");
        assert_eq!(r.explanation_token_logprobs.len(), 3);
        assert_eq!(r.top_candidates[0].token, " fake");
        assert_eq!(r.label_logprobs, (-1.9, -0.2));

        let r = parse_response(&text, &tokens, 1).unwrap();
        assert_eq!(r.top_candidates.len(), 1);
        assert_eq!(r.label_logprobs.0, PROB_FLOOR.ln());
    }

    #[test]
    fn response_without_logprobs_is_rejected() {
        let tokens = vec![GeneratedToken { token: "The pair is real because ok".into(), logprob: None, top: vec![] }];
        assert!(matches!(
            parse_response("The pair is real because ok", &tokens, 10),
            Err(Error::MissingLogprobs)
        ));
        assert!(matches!(parse_response("The pair is real because ok", &[], 10), Err(Error::MissingLogprobs)));
    }

    #[test]
    fn token_normalization() {
        assert_eq!(normalize_token("▁Genuine"), "genuine");
        assert_eq!(normalize_token("##fake,"), "fake");
        assert_eq!(normalize_token(" \"Real\" "), "real");
        assert_eq!(normalize_token("..."), "");
    }

    #[test]
    fn clamping() {
        assert!(clamp_logprob(0.0).unwrap() < 0.0);
        assert_eq!(clamp_logprob(f64::NEG_INFINITY).unwrap(), PROB_FLOOR.ln());
        assert!(clamp_logprob(f64::NAN).is_err());
    }

    proptest::proptest! {
        #[test]
        fn verdict_round_trip(fake in proptest::bool::ANY, expl in "[A-Za-z0-9][A-Za-z0-9 ,.]{0,40}") {
            let label = if fake { BinaryLabel::Fake } else { BinaryLabel::Real };
            let expl = expl.trim().to_string();
            proptest::prop_assume!(!expl.is_empty());
            let (v, e) = parse_verdict(&render_verdict(label, &expl)).unwrap();
            proptest::prop_assert_eq!(v.label, label);
            proptest::prop_assert_eq!(e, expl);
        }
    }
}
