//! Adapter from the published Simulated Dialogues JSON layout to [`Dialogue`].
//!
//! The published files carry `user_utterance.slots` (raw-token spans),
//! `user_acts` as objects, optional `system_acts` (absent on the first turn) and
//! `user_intents` only on the turn that states the intent. The adapter carries
//! the last stated intent forward so every turn has an intent label.

use std::path::Path;

use serde::Deserialize;

use super::corpus::{
    ActRecord, DialogueRecord, SpanRecord, StateRecord, TurnRecord, UtteranceRecord,
};
use super::{parse_corpus, Dialogue};
use crate::error::Result;

#[derive(Deserialize)]
struct PubDialogue {
    dialogue_id: String,
    turns: Vec<PubTurn>,
}

#[derive(Deserialize)]
struct PubTurn {
    #[serde(default)]
    system_acts: Vec<PubAct>,
    user_utterance: PubUtterance,
    #[serde(default)]
    user_acts: Vec<PubAct>,
    #[serde(default)]
    user_intents: Vec<String>,
    #[serde(default)]
    dialogue_state: Vec<PubState>,
}

#[derive(Deserialize)]
struct PubAct {
    #[serde(rename = "type")]
    act_type: String,
    #[serde(default)]
    slot: Option<String>,
    #[serde(default)]
    value: Option<String>,
}

#[derive(Deserialize)]
struct PubUtterance {
    tokens: Vec<String>,
    #[serde(default)]
    slots: Vec<PubSpan>,
}

#[derive(Deserialize)]
struct PubSpan {
    slot: String,
    start: usize,
    exclusive_end: usize,
}

#[derive(Deserialize)]
struct PubState {
    slot: String,
    value: String,
}

/// Converts published-format JSON text to canonical records.
pub fn to_canonical(text: &str) -> Result<Vec<DialogueRecord>> {
    let dialogues: Vec<PubDialogue> = serde_json::from_str(text)?;
    Ok(dialogues
        .into_iter()
        .map(|d| {
            let mut intent: Option<String> = None;
            let turns = d
                .turns
                .into_iter()
                .map(|t| {
                    if let Some(i) = t.user_intents.first() {
                        intent = Some(i.clone());
                    }
                    TurnRecord {
                        system_acts: t
                            .system_acts
                            .into_iter()
                            .map(|a| ActRecord {
                                act_type: a.act_type,
                                slot: a.slot,
                                value: a.value,
                            })
                            .collect(),
                        user_utterance: UtteranceRecord {
                            tokens: t.user_utterance.tokens,
                            spans: t
                                .user_utterance
                                .slots
                                .into_iter()
                                .map(|s| SpanRecord {
                                    slot: s.slot,
                                    start: s.start,
                                    exclusive_end: s.exclusive_end,
                                })
                                .collect(),
                        },
                        intent: intent.clone(),
                        user_acts: t.user_acts.into_iter().map(|a| a.act_type).collect(),
                        dialogue_state: t
                            .dialogue_state
                            .into_iter()
                            .map(|s| StateRecord {
                                slot: s.slot,
                                value: s.value,
                            })
                            .collect(),
                    }
                })
                .collect();
            DialogueRecord {
                dialogue_id: d.dialogue_id,
                turns,
            }
        })
        .collect())
}

/// Parses a published-format split and validates it like a canonical one.
pub fn parse_published(text: &str) -> Result<Vec<Dialogue>> {
    let records = to_canonical(text)?;
    parse_corpus(&serde_json::to_string(&records)?)
}

/// Loads `split` (`train`, `dev` or `test`) from a data directory.
///
/// Looks for the published layout (`sim-R/<split>.json`, `sim-M/<split>.json`,
/// concatenated when both exist) and falls back to a canonical `<split>.json`.
pub fn load_split(dir: impl AsRef<Path>, split: &str) -> Result<Vec<Dialogue>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    let mut found = false;
    for sub in ["sim-R", "sim-M"] {
        let p = dir.join(sub).join(format!("{split}.json"));
        if p.exists() {
            found = true;
            out.extend(parse_published(&std::fs::read_to_string(&p)?)?);
        }
    }
    if !found {
        out = super::load_corpus(dir.join(format!("{split}.json")))?;
    }
    Ok(out)
}
