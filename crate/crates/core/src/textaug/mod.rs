//! Text-side knowledge augmentation.
//!
//! Narrations get token-wise spell correction plus their best-matching
//! pseudo-step; keysteps are expanded by a dictionary client; abstracts are
//! compressed by a summarizer client. During training either the original
//! or the augmented text is fed, chosen at random.

pub mod client;
pub mod spell;
pub mod steps;

use serde::{Deserialize, Serialize};

pub use client::{AugmentRequest, AugmentResponse, AugmenterClient, Behavior, ExternalTransport, MockTransport, Transport};
pub use spell::{edit_candidates, edits1_raw, spell_correct, Vocabulary};
pub use steps::{assign_pseudo_steps, build_step_kb, tokenize, StepKnowledgeBase};

use crate::error::Result;
use crate::numerics::Rng;

pub const DEFAULT_P_AUGMENTED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextLevel {
    Narration,
    Keystep,
    Abstract,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmented {
    pub original: String,
    pub augmented: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
}

/// Everything `augment_text` may consult.
#[derive(Debug)]
pub struct AugmentContext<'a> {
    pub vocab: &'a Vocabulary,
    pub kb: &'a StepKnowledgeBase,
    pub dictionary: &'a AugmenterClient,
    pub summarizer: &'a AugmenterClient,
}

impl AugmentContext<'_> {
    /// Steps for `title`, or the only entry when no title is given.
    fn steps_for(&self, title: Option<&str>) -> Option<&[String]> {
        match title {
            Some(t) => self.kb.get(t),
            None if self.kb.len() == 1 => self.kb.iter().next().map(|(_, s)| s),
            None => None,
        }
    }
}

/// Spell-corrects whitespace-separated tokens. Trailing punctuation is kept
/// outside the corrected core.
pub fn correct_sentence(text: &str, vocab: &Vocabulary) -> String {
    text.split_whitespace()
        .map(|tok| {
            let core_end = tok
                .char_indices()
                .rev()
                .find(|(_, c)| !c.is_ascii_punctuation())
                .map_or(0, |(i, c)| i + c.len_utf8());
            let (core, tail) = tok.split_at(core_end);
            format!("{}{tail}", spell_correct(core, vocab))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn augment_text(
    text: &str,
    level: TextLevel,
    title: Option<&str>,
    ctx: &AugmentContext<'_>,
) -> Result<Augmented> {
    let (augmented, step_index) = match level {
        TextLevel::Narration => {
            let corrected = correct_sentence(text, ctx.vocab);
            match ctx.steps_for(title) {
                Some(steps) => {
                    let idx = assign_pseudo_steps(&[corrected.as_str()], steps)?[0];
                    (format!("{corrected}. {}", steps[idx]), Some(idx))
                }
                None => (corrected, None),
            }
        }
        TextLevel::Keystep => {
            ctx.dictionary.require(Behavior::Dictionary)?;
            (ctx.dictionary.complete(text)?, None)
        }
        TextLevel::Abstract => {
            ctx.summarizer.require(Behavior::Summarizer)?;
            (ctx.summarizer.complete(text)?, None)
        }
    };
    Ok(Augmented {
        original: text.to_string(),
        augmented,
        step_index,
    })
}

/// Returns `augmented` with probability `p_augmented`, else `original`.
/// Probabilities outside `[0, 1]` act as the nearest bound.
pub fn sample_text<'a, T: ?Sized>(original: &'a T, augmented: &'a T, p_augmented: f64, rng: &mut Rng) -> &'a T {
    if rng.bernoulli(p_augmented) {
        augmented
    } else {
        original
    }
}
