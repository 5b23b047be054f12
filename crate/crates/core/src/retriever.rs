//! Fine-grained label inference from the model's explanation and
//! contrastive evidence selection, plus assembly of the evidence prompt.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backend::{dot, Embedding, GenerationRequest, Role, Turn};
use crate::error::{Error, Result};
use crate::index::{hit_order, query_topk, ExplanationRecord, IndexRecord};
use crate::model::{render_verdict, BinaryLabel, CorpusEntry, FineGrainedLabel, Sample};
use crate::prompts::{user_turn, PromptSet};

pub const DEFAULT_K_VOTE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredLabel {
    pub label: FineGrainedLabel,
    pub votes: BTreeMap<FineGrainedLabel, usize>,
    pub k_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub positive: String,
    pub negative: String,
    pub pos_score: f64,
    pub neg_score: f64,
    /// The positive came from the relaxed pool (same binary label) because
    /// no entry carries the inferred fine label.
    #[serde(default)]
    pub positive_fallback: bool,
}

/// Majority vote over the fine labels of the `k` nearest explanations.
///
/// Ties go to the label with the larger summed similarity, then to the
/// earlier label in canonical order.
pub fn infer_fine_label(expl_vec: &Embedding, expl_index: &[ExplanationRecord], k: usize) -> Result<InferredLabel> {
    if expl_index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::Config("k_vote must be at least 1".into()));
    }
    let mut scored: Vec<(f64, &str, FineGrainedLabel)> = expl_index
        .iter()
        .map(|r| (dot(expl_vec.as_slice(), r.expl_vec.as_slice()), r.corpus_id.as_str(), r.fine_label))
        .collect();
    scored.sort_by(|a, b| hit_order(&(a.0, a.1), &(b.0, b.1)));
    scored.truncate(k);

    let mut tally: BTreeMap<FineGrainedLabel, (usize, f64)> = BTreeMap::new();
    for &(s, _, label) in &scored {
        let t = tally.entry(label).or_insert((0, 0.0));
        t.0 += 1;
        t.1 += s;
    }
    // BTreeMap iterates in canonical order; max_by keeps the last maximum,
    // so compare reversed on label to prefer the earlier one.
    let label = tally
        .iter()
        .max_by(|(la, (ca, sa)), (lb, (cb, sb))| ca.cmp(cb).then(sa.total_cmp(sb)).then(lb.cmp(la)))
        .map(|(l, _)| *l)
        .expect("at least one neighbour");
    Ok(InferredLabel {
        label,
        votes: tally.into_iter().map(|(l, (c, _))| (l, c)).collect(),
        k_used: scored.len(),
    })
}

/// Picks the nearest entry sharing the inferred fine label (positive) and the
/// nearest distinct entry whose binary label differs from the prediction
/// (negative).
pub fn retrieve_contrastive(
    fused_q: &Embedding,
    inferred: FineGrainedLabel,
    predicted: BinaryLabel,
    index: &[IndexRecord],
) -> Result<ContrastivePair> {
    let (positive, positive_fallback) = match query_topk(index, fused_q, 1, |r| r.fine_label == inferred) {
        Ok(mut hits) => (hits.remove(0), false),
        Err(Error::EmptyPool) => {
            let relaxed = inferred.binary();
            match query_topk(index, fused_q, 1, |r| r.binary_label == relaxed) {
                Ok(mut hits) => (hits.remove(0), true),
                Err(Error::EmptyPool) => return Err(Error::NoPositivePool),
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    let negative = match query_topk(index, fused_q, 1, |r| r.binary_label != predicted && r.corpus_id != positive.0) {
        Ok(mut hits) => hits.remove(0),
        Err(Error::EmptyPool) => return Err(Error::NoNegativePool),
        Err(e) => return Err(e),
    };
    Ok(ContrastivePair {
        positive: positive.0,
        negative: negative.0,
        pos_score: positive.1,
        neg_score: negative.1,
        positive_fallback,
    })
}

/// Retrieval-augmented request: positive example, negative example, then the
/// query sample.
///
/// Each example's verdict word follows its own label unless `literal` is set,
/// in which case the first example is always "real" and the second "fake".
pub fn assemble_augmented_prompt(
    sample: &Sample,
    pair: &ContrastivePair,
    corpus: &HashMap<String, CorpusEntry>,
    prompts: &PromptSet,
    literal: bool,
    k_tok: usize,
) -> Result<GenerationRequest> {
    let lookup = |id: &str| corpus.get(id).ok_or_else(|| Error::MissingCorpusEntry(id.to_string()));
    let pos = lookup(&pair.positive)?;
    let neg = lookup(&pair.negative)?;
    let (pos_word, neg_word) = if literal {
        (BinaryLabel::Real, BinaryLabel::Fake)
    } else {
        (pos.binary_label(), neg.binary_label())
    };
    let assistant = |label, expl: &str| Turn { role: Role::Assistant, text: render_verdict(label, expl), image: None };
    let mut query = user_turn("third", &sample.image, &sample.text);
    query.text = format!("Now determine the following:\n{}", query.text);
    Ok(GenerationRequest {
        system_prompt: prompts.augmented_system.clone(),
        turns: vec![
            user_turn("first", &pos.image, &pos.text),
            assistant(pos_word, &pos.explanation),
            user_turn("second", &neg.image, &neg.text),
            assistant(neg_word, &neg.explanation),
            query,
        ],
        want_top_candidates: k_tok,
        want_logprobs: true,
        trace_key: Some(format!("augmented/{}", sample.id)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImageRef;
    use approx::assert_abs_diff_eq;
    use FineGrainedLabel::*;

    fn er(id: &str, v: [f64; 2], label: FineGrainedLabel) -> ExplanationRecord {
        ExplanationRecord { corpus_id: id.into(), expl_vec: Embedding(v.to_vec()), fine_label: label }
    }

    fn q(v: [f64; 2]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn strict_majority() {
        let idx = [
            er("a", [1.0, 0.0], EntityInconsistency),
            er("b", [0.9, 0.1], EntityInconsistency),
            er("c", [0.95, 0.05], ImageFabrication),
            er("d", [-1.0, 0.0], RealNews),
        ];
        let r = infer_fine_label(&q([1.0, 0.0]), &idx, 3).unwrap();
        assert_eq!(r.label, EntityInconsistency);
        assert_eq!(r.votes[&EntityInconsistency], 2);
        assert_eq!(r.k_used, 3);
        assert_eq!(infer_fine_label(&q([1.0, 0.0]), &idx, 1).unwrap().label, EntityInconsistency);
        assert_eq!(infer_fine_label(&q([-1.0, 0.0]), &idx, 1).unwrap().label, RealNews);
        assert!(matches!(infer_fine_label(&q([1.0, 0.0]), &[], 3), Err(Error::EmptyIndex)));
    }

    #[test]
    fn tie_broken_by_summed_similarity() {
        // Query (1, 0): sims are the first coordinates. Event: 0.9 + 0.8 = 1.7; Image: 0.85 + 0.65 = 1.5.
        let idx = [
            er("a", [0.9, 0.0], EventInconsistency),
            er("b", [0.85, 0.0], ImageFabrication),
            er("c", [0.8, 0.0], EventInconsistency),
            er("d", [0.65, 0.0], ImageFabrication),
            er("e", [0.1, 0.0], RealNews),
        ];
        let r = infer_fine_label(&q([1.0, 0.0]), &idx, 4).unwrap();
        assert_eq!(r.label, EventInconsistency);
        assert_eq!(r.votes.values().sum::<usize>(), 4);
    }

    #[test]
    fn full_tie_goes_to_canonical_order() {
        let idx = [er("a", [0.5, 0.0], EventInconsistency), er("b", [0.5, 0.0], ImageFabrication)];
        assert_eq!(infer_fine_label(&q([1.0, 0.0]), &idx, 2).unwrap().label, ImageFabrication);
    }

    fn ir(id: &str, v: [f64; 2], fine: FineGrainedLabel) -> IndexRecord {
        IndexRecord {
            corpus_id: id.into(),
            fused: Embedding(v.to_vec()).normalized().unwrap(),
            fine_label: fine,
            binary_label: fine.binary(),
        }
    }

    fn toy() -> Vec<IndexRecord> {
        vec![
            ir("r1", [1.0, 0.0], RealNews),
            ir("r2", [0.6, 0.8], RealNews),
            ir("f1", [0.8, 0.6], EntityInconsistency),
            ir("f2", [0.0, 1.0], EntityInconsistency),
            ir("f3", [0.9, 0.1], ImageFabrication),
        ]
    }

    #[test]
    fn contrastive_matches_filtered_scan() {
        // q = (1, 0): dots r1 1.0, r2 0.6, f1 0.8, f2 0.0, f3 ~0.9939.
        let p = retrieve_contrastive(&q([1.0, 0.0]), EntityInconsistency, BinaryLabel::Fake, &toy()).unwrap();
        assert_eq!((p.positive.as_str(), p.negative.as_str()), ("f1", "r1"));
        assert_abs_diff_eq!(p.pos_score, 0.8, epsilon = 1e-12);
        assert!(!p.positive_fallback);

        // Predicted Real: negatives are fakes other than the positive.
        let p = retrieve_contrastive(&q([0.8, 0.6]), EntityInconsistency, BinaryLabel::Real, &toy()).unwrap();
        assert_eq!(p.positive, "f1");
        assert_abs_diff_eq!(p.pos_score, 1.0, epsilon = 1e-6);
        assert_eq!(p.negative, "f3");
    }

    #[test]
    fn contrastive_fallbacks_and_errors() {
        let p = retrieve_contrastive(&q([1.0, 0.0]), EventInconsistency, BinaryLabel::Fake, &toy()).unwrap();
        assert!(p.positive_fallback);
        assert_eq!(p.positive, "f3");

        let reals: Vec<_> = toy().into_iter().filter(|r| r.binary_label == BinaryLabel::Real).collect();
        assert!(matches!(
            retrieve_contrastive(&q([1.0, 0.0]), RealNews, BinaryLabel::Real, &reals),
            Err(Error::NoNegativePool)
        ));
        assert!(matches!(
            retrieve_contrastive(&q([1.0, 0.0]), ImageFabrication, BinaryLabel::Fake, &reals),
            Err(Error::NoPositivePool)
        ));
    }

    fn corpus() -> HashMap<String, CorpusEntry> {
        let mk = |id: &str, fine| CorpusEntry {
            id: id.into(),
            image: ImageRef::Path(format!("{id}.jpg")),
            text: format!("text {id}"),
            explanation: format!("because of {id}."),
            fine_label: fine,
        };
        [mk("p", ImageFabrication), mk("n", RealNews), mk("r", RealNews)]
            .into_iter()
            .map(|e| (e.id.clone(), e))
            .collect()
    }

    fn sample() -> Sample {
        Sample { id: "s".into(), image: ImageRef::Path("s.jpg".into()), text: "claim".into(), gold_binary: None, gold_fine: None }
    }

    fn pair(pos: &str, neg: &str) -> ContrastivePair {
        ContrastivePair { positive: pos.into(), negative: neg.into(), pos_score: 0.9, neg_score: 0.5, positive_fallback: false }
    }

    #[test]
    fn augmented_prompt_structure() {
        let req = assemble_augmented_prompt(&sample(), &pair("p", "n"), &corpus(), &PromptSet::default(), false, 10).unwrap();
        let roles: Vec<_> = req.turns.iter().map(|t| t.role).collect();
        assert_eq!(roles, [Role::User, Role::Assistant, Role::User, Role::Assistant, Role::User]);
        assert!(req.turns.iter().filter(|t| t.role == Role::User).all(|t| t.image.is_some()));
        assert!(req.turns.iter().filter(|t| t.role == Role::Assistant).all(|t| t.image.is_none()));
        assert_eq!(req.turns[1].text, "The pair is fake because because of p.");
        assert_eq!(req.turns[3].text, "The pair is real because because of n.");
        assert!(req.turns[4].text.ends_with("the third image <image> and the text claim."));

        let real_pos = assemble_augmented_prompt(&sample(), &pair("r", "p"), &corpus(), &PromptSet::default(), false, 10).unwrap();
        assert!(real_pos.turns[1].text.starts_with("The pair is real because"));

        let literal = assemble_augmented_prompt(&sample(), &pair("p", "n"), &corpus(), &PromptSet::default(), true, 10).unwrap();
        assert!(literal.turns[1].text.starts_with("The pair is real because"));
        assert!(literal.turns[3].text.starts_with("The pair is fake because"));

        let again = assemble_augmented_prompt(&sample(), &pair("p", "n"), &corpus(), &PromptSet::default(), false, 10).unwrap();
        assert_eq!(serde_json::to_vec(&req).unwrap(), serde_json::to_vec(&again).unwrap());

        assert!(matches!(
            assemble_augmented_prompt(&sample(), &pair("p", "zz"), &corpus(), &PromptSet::default(), false, 10),
            Err(Error::MissingCorpusEntry(_))
        ));
    }
}
