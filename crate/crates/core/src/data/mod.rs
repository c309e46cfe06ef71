//! Dialogue corpus types, loading, vocabularies and IOB tag derivation.

mod corpus;
mod dropout;
mod iob;
pub mod simdial;
pub mod synth;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};

pub use corpus::{load_corpus, parse_corpus, write_corpus, CorpusStats, DialogueRecord};
pub use dropout::{apply_slot_value_dropout, slot_value_dropout_rate, MAX_SLOT_VALUE_DROPOUT};
pub use iob::{derive_iob_tags, Tag, TagSet};
pub use vocab::{build_vocab, LabelSet, Vocab};

pub const PAD: &str = "<pad>";
pub const OOV: &str = "<unk>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";

/// Surface string of the "user accepts any value" state value.
pub const DONTCARE: &str = "dontcare";

/// One system dialogue act: a type with an optional slot and value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemAct {
    pub act_type: String,
    pub slot: Option<String>,
    pub value: Option<String>,
}

impl SystemAct {
    pub fn new(act_type: &str) -> Self {
        Self {
            act_type: act_type.to_string(),
            slot: None,
            value: None,
        }
    }

    pub fn with_slot(act_type: &str, slot: &str) -> Self {
        Self {
            slot: Some(slot.to_string()),
            ..Self::new(act_type)
        }
    }

    pub fn with_value(act_type: &str, slot: &str, value: &str) -> Self {
        Self {
            value: Some(value.to_string()),
            ..Self::with_slot(act_type, slot)
        }
    }
}

impl std::fmt::Display for SystemAct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.slot, &self.value) {
            (Some(s), Some(v)) => write!(f, "{}({}={})", self.act_type, s, v),
            (Some(s), None) => write!(f, "{}({})", self.act_type, s),
            _ => write!(f, "{}", self.act_type),
        }
    }
}

/// Half-open token range `[start, end)` holding a value of `slot`.
///
/// Indices refer to the marked token sequence, so index 0 is SOS.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotSpan {
    pub slot: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Turn {
    pub system_acts: Vec<SystemAct>,
    /// Lowercased tokens including the leading SOS and trailing EOS markers.
    pub user_tokens: Vec<String>,
    pub gold_intent: Option<String>,
    pub gold_user_acts: BTreeSet<String>,
    pub gold_slot_spans: Vec<SlotSpan>,
    /// Slot to value; [`DONTCARE`] marks the dontcare value.
    pub gold_state: BTreeMap<String, String>,
}

impl Turn {
    /// Tokens between the SOS and EOS markers.
    pub fn words(&self) -> &[String] {
        let n = self.user_tokens.len();
        if n >= 2 {
            &self.user_tokens[1..n - 1]
        } else {
            &[]
        }
    }

    /// Surface value of a span.
    pub fn span_value(&self, span: &SlotSpan) -> String {
        self.user_tokens[span.start..span.end].join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// Wraps raw words with SOS/EOS and lowercases them.
pub fn mark_tokens<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len() + 2);
    out.push(SOS.to_string());
    out.extend(words.iter().map(|w| w.as_ref().to_lowercase()));
    out.push(EOS.to_string());
    out
}

/// Lowercased, whitespace-normalized form used to compare values.
pub fn normalize_value(value: &str) -> String {
    value
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
