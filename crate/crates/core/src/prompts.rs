//! Prompt templates for plain and retrieval-augmented verdict generation.

use std::path::Path;

use crate::backend::{GenerationRequest, Role, Turn};
use crate::error::Result;
use crate::model::Sample;

const PLAIN_SYSTEM: &str = "You are a knowledgeable and analytical fact-checking assistant. \
Your task is to determine whether a social text-image pair is fake.

Your response should be either The pair is fake because {explanation of your reasoning}. \
if the text and image present false, misleading, or manipulated content, or \
The pair is real because {explanation of your reasoning}. if the text and image are \
consistent and factually aligned.

Your explanation must be concise and clear, highlighting linguistic, visual, or contextual \
cues that support your conclusion.";

const AUGMENTED_SYSTEM: &str = "You are a knowledgeable and analytical fact-checking assistant. \
Your task is to determine whether a social text-image pair is fake.

Your response should be either The pair is fake because {explanation of your reasoning}. \
if the text and image present false, misleading, or manipulated content, or \
The pair is real because {explanation of your reasoning}. if the text and image are \
consistent and factually aligned.

Your explanation should be concise and clear, highlighting any linguistic, visual, or \
contextual cues that support your conclusion.

Refer to these examples:";

pub const IMAGE_MARKER: &str = "<image>";

/// System prompts for the two generation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub plain_system: String,
    pub augmented_system: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet { plain_system: PLAIN_SYSTEM.into(), augmented_system: AUGMENTED_SYSTEM.into() }
    }
}

impl PromptSet {
    /// Overrides defaults with `prompt2.txt` (plain) and `prompt3.txt`
    /// (augmented) from `dir`, when present.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut p = PromptSet::default();
        let plain = dir.join("prompt2.txt");
        if plain.exists() {
            p.plain_system = std::fs::read_to_string(plain)?.trim_end().to_string();
        }
        let aug = dir.join("prompt3.txt");
        if aug.exists() {
            p.augmented_system = std::fs::read_to_string(aug)?.trim_end().to_string();
        }
        Ok(p)
    }
}

pub(crate) fn user_turn(ordinal: &str, sample_image: &crate::model::ImageRef, text: &str) -> Turn {
    let image_word = if ordinal.is_empty() { "the image".to_string() } else { format!("the {ordinal} image") };
    Turn {
        role: Role::User,
        text: format!("{image_word} {IMAGE_MARKER} and the text {text}."),
        image: Some(sample_image.clone()),
    }
}

/// Generation request for a sample without retrieved evidence.
pub fn plain_request(sample: &Sample, prompts: &PromptSet, k_tok: usize) -> GenerationRequest {
    GenerationRequest {
        system_prompt: prompts.plain_system.clone(),
        turns: vec![user_turn("", &sample.image, &sample.text)],
        want_top_candidates: k_tok,
        want_logprobs: true,
        trace_key: Some(format!("plain/{}", sample.id)),
    }
}
