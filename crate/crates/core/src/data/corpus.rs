//! Canonical corpus files.
//!
//! A split is one UTF-8 JSON file holding an array of dialogue records:
//!
//! ```json
//! [{
//!   "dialogue_id": "r-0001",
//!   "turns": [{
//!     "system_acts": [{"type": "offer", "slot": "time", "value": "6 pm"}],
//!     "user_utterance": {
//!       "tokens": ["6", "pm", "is", "too", "early"],
//!       "spans": [{"slot": "time", "start": 0, "exclusive_end": 2}]
//!     },
//!     "intent": "RESERVE_RESTAURANT",
//!     "user_acts": ["negate"],
//!     "dialogue_state": [{"slot": "time", "value": "7 pm"}]
//!   }]
//! }]
//! ```
//!
//! `tokens` are the raw words without SOS/EOS and span offsets index into them;
//! the loader adds the markers and shifts spans by one. `intent` may be null,
//! `slot`/`value` may be omitted, and `"dontcare"` is the dontcare state value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{mark_tokens, normalize_value, Dialogue, SlotSpan, SystemAct, Turn};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    pub turns: Vec<TurnRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub system_acts: Vec<ActRecord>,
    pub user_utterance: UtteranceRecord,
    pub intent: Option<String>,
    pub user_acts: Vec<String>,
    pub dialogue_state: Vec<StateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActRecord {
    #[serde(rename = "type")]
    pub act_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub tokens: Vec<String>,
    pub spans: Vec<SpanRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanRecord {
    pub slot: String,
    pub start: usize,
    pub exclusive_end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub slot: String,
    pub value: String,
}

/// Dialogue, turn and slot counts of a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub turns: usize,
    pub slots: usize,
}

impl CorpusStats {
    pub fn of(corpus: &[Dialogue]) -> Self {
        let mut slots = BTreeSet::new();
        let mut turns = 0;
        for d in corpus {
            turns += d.turns.len();
            for t in &d.turns {
                slots.extend(t.gold_slot_spans.iter().map(|s| s.slot.clone()));
                slots.extend(t.gold_state.keys().cloned());
                slots.extend(t.system_acts.iter().filter_map(|a| a.slot.clone()));
            }
        }
        Self {
            dialogues: corpus.len(),
            turns,
            slots: slots.len(),
        }
    }
}

fn corpus_err(id: &str, turn: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Corpus {
        dialogue_id: id.to_string(),
        turn,
        field: field.to_string(),
        message: message.into(),
    }
}

fn convert_turn(id: &str, index: usize, rec: TurnRecord) -> Result<Turn> {
    let mut system_acts = Vec::with_capacity(rec.system_acts.len());
    for a in rec.system_acts {
        if a.value.is_some() && a.slot.is_none() {
            return Err(corpus_err(id, index, "system_acts", format!(
                "act `{}` has a value but no slot",
                a.act_type
            )));
        }
        system_acts.push(SystemAct {
            act_type: a.act_type,
            slot: a.slot,
            value: a.value.map(|v| normalize_value(&v)),
        });
    }
    let words = &rec.user_utterance.tokens;
    let user_tokens = mark_tokens(words);
    let mut spans: Vec<SlotSpan> = Vec::with_capacity(rec.user_utterance.spans.len());
    for s in rec.user_utterance.spans {
        if s.start >= s.exclusive_end || s.exclusive_end > words.len() {
            return Err(corpus_err(id, index, "user_utterance.spans", format!(
                "span {}:[{}, {}) outside the {} tokens",
                s.slot,
                s.start,
                s.exclusive_end,
                words.len()
            )));
        }
        spans.push(SlotSpan {
            slot: s.slot,
            start: s.start + 1,
            end: s.exclusive_end + 1,
        });
    }
    spans.sort_by_key(|s| (s.start, s.end));
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(corpus_err(id, index, "user_utterance.spans", format!(
                "spans {}:[{}, {}) and {}:[{}, {}) overlap",
                pair[0].slot,
                pair[0].start - 1,
                pair[0].end - 1,
                pair[1].slot,
                pair[1].start - 1,
                pair[1].end - 1
            )));
        }
    }
    let mut gold_state = BTreeMap::new();
    for s in rec.dialogue_state {
        if gold_state.insert(s.slot.clone(), normalize_value(&s.value)).is_some() {
            return Err(corpus_err(id, index, "dialogue_state", format!(
                "slot `{}` listed twice",
                s.slot
            )));
        }
    }
    Ok(Turn {
        system_acts,
        user_tokens,
        gold_intent: rec.intent.filter(|i| !i.is_empty()),
        gold_user_acts: rec.user_acts.into_iter().collect(),
        gold_slot_spans: spans,
        gold_state,
    })
}

fn convert_dialogue(index: usize, value: Value) -> Result<Dialogue> {
    let id = value
        .get("dialogue_id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| corpus_err(&format!("#{index}"), 0, "dialogue_id", "missing or not a string"))?;
    let turns = match value.get("turns") {
        Some(Value::Array(t)) => t.clone(),
        _ => return Err(corpus_err(&id, 0, "turns", "missing or not an array")),
    };
    if let Some(obj) = value.as_object() {
        if let Some(extra) = obj.keys().find(|k| *k != "dialogue_id" && *k != "turns") {
            return Err(corpus_err(&id, 0, extra, "unknown field"));
        }
    }
    if turns.is_empty() {
        return Err(corpus_err(&id, 0, "turns", "a dialogue needs at least one turn"));
    }
    let mut out = Vec::with_capacity(turns.len());
    for (t, tv) in turns.into_iter().enumerate() {
        let rec: TurnRecord =
            serde_json::from_value(tv).map_err(|e| corpus_err(&id, t, "turn", e.to_string()))?;
        out.push(convert_turn(&id, t, rec)?);
    }
    Ok(Dialogue { id, turns: out })
}

/// Parses and validates a canonical corpus from JSON text.
pub fn parse_corpus(text: &str) -> Result<Vec<Dialogue>> {
    if text.trim().is_empty() {
        log::warn!("empty corpus");
        return Ok(Vec::new());
    }
    let root: Value = serde_json::from_str(text)?;
    let Value::Array(items) = root else {
        return Err(Error::InvalidArgument(
            "corpus must be a JSON array of dialogue records".into(),
        ));
    };
    if items.is_empty() {
        log::warn!("empty corpus");
    }
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| convert_dialogue(i, v))
        .collect()
}

/// Loads one split. Reports dialogue, turn and slot counts at info level.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let corpus = parse_corpus(&text)?;
    let stats = CorpusStats::of(&corpus);
    log::info!(
        "{}: {} dialogues, {} turns, {} slots",
        path.as_ref().display(),
        stats.dialogues,
        stats.turns,
        stats.slots
    );
    Ok(corpus)
}

impl DialogueRecord {
    pub fn from_dialogue(d: &Dialogue) -> Self {
        let turns = d
            .turns
            .iter()
            .map(|t| TurnRecord {
                system_acts: t
                    .system_acts
                    .iter()
                    .map(|a| ActRecord {
                        act_type: a.act_type.clone(),
                        slot: a.slot.clone(),
                        value: a.value.clone(),
                    })
                    .collect(),
                user_utterance: UtteranceRecord {
                    tokens: t.words().to_vec(),
                    spans: t
                        .gold_slot_spans
                        .iter()
                        .map(|s| SpanRecord {
                            slot: s.slot.clone(),
                            start: s.start - 1,
                            exclusive_end: s.end - 1,
                        })
                        .collect(),
                },
                intent: t.gold_intent.clone(),
                user_acts: t.gold_user_acts.iter().cloned().collect(),
                dialogue_state: t
                    .gold_state
                    .iter()
                    .map(|(slot, value)| StateRecord {
                        slot: slot.clone(),
                        value: value.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            dialogue_id: d.id.clone(),
            turns,
        }
    }
}

/// Writes dialogues in the canonical format.
pub fn write_corpus(path: impl AsRef<Path>, corpus: &[Dialogue]) -> Result<()> {
    let records: Vec<DialogueRecord> = corpus.iter().map(DialogueRecord::from_dialogue).collect();
    let text = serde_json::to_string_pretty(&records)?;
    std::fs::write(path, text)?;
    Ok(())
}
