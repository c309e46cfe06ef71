//! Candidate-set maintenance and the candidate scorer.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DONTCARE;
use crate::encoders::ActFeatures;
use crate::error::Result;
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Logit assigned to padding candidates.
pub const MASKED_LOGIT: f64 = -1e30;

/// Position of φ in a slot's value distribution.
pub const NULL_INDEX: usize = 0;
/// Position of δ in a slot's value distribution.
pub const DONTCARE_INDEX: usize = 1;
/// Position of the first candidate in a slot's value distribution.
pub const FIRST_CANDIDATE: usize = 2;

/// Order of the concatenated scorer features, stored with checkpoints.
pub const FEATURE_LAYOUT: &str =
    "r_utt=d_o|a_utt;r_slot=a_slot|p_dontcare|p_null;r_cand=a_cand|p_prev|m_valid|m_user";

/// Values of one slot mentioned so far, in insertion order, at most `capacity`.
///
/// Positions past `values.len()` are padding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub values: Vec<String>,
    /// Whether each value occurs in the current user utterance.
    pub in_utterance: Vec<bool>,
    pub capacity: usize,
}

impl CandidateSet {
    pub fn new(capacity: usize) -> Self {
        Self {
            values: Vec::new(),
            in_utterance: Vec::new(),
            capacity,
        }
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    /// Validity indicator per padded position.
    pub fn valid_mask(&self) -> Vec<bool> {
        (0..self.capacity).map(|i| i < self.values.len()).collect()
    }

    /// User-mention indicator per padded position.
    pub fn utterance_mask(&self) -> Vec<bool> {
        (0..self.capacity)
            .map(|i| self.in_utterance.get(i).copied().unwrap_or(false))
            .collect()
    }
}

/// A distribution over `{φ, δ} ∪ candidates` for one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotDistribution {
    pub null: f64,
    pub dontcare: f64,
    pub candidates: Vec<(String, f64)>,
}

impl SlotDistribution {
    /// Prior of a slot that has not been specified yet.
    pub fn unspecified() -> Self {
        Self {
            null: 1.0,
            dontcare: 0.0,
            candidates: Vec::new(),
        }
    }

    /// One-hot distribution on position `index` of `{φ, δ, candidates...}`.
    pub fn one_hot(set: &CandidateSet, index: usize) -> Self {
        Self {
            null: f64::from(index == NULL_INDEX),
            dontcare: f64::from(index == DONTCARE_INDEX),
            candidates: set
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), f64::from(index == FIRST_CANDIDATE + i)))
                .collect(),
        }
    }

    /// Previous probability of `value`, 0 when it was not a candidate.
    pub fn score_of(&self, value: &str) -> f64 {
        self.candidates
            .iter()
            .find(|(v, _)| v == value)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Most probable entry. Ties go to φ, then δ, then the earliest candidate.
    pub fn best(&self) -> StateValue {
        let mut best = (StateValue::Null, self.null);
        if self.dontcare > best.1 {
            best = (StateValue::DontCare, self.dontcare);
        }
        for (v, p) in &self.candidates {
            if *p > best.1 {
                best = (StateValue::Value(v.clone()), *p);
            }
        }
        best.0
    }
}

/// Read-out of one slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateValue {
    Null,
    DontCare,
    Value(String),
}

/// Per-slot distributions of one turn.
pub type StateDistribution = BTreeMap<String, SlotDistribution>;

/// User-facing state: slots whose best value is not φ.
pub fn read_state(dist: &StateDistribution) -> BTreeMap<String, String> {
    dist.iter()
        .filter_map(|(slot, d)| match d.best() {
            StateValue::Null => None,
            StateValue::DontCare => Some((slot.clone(), DONTCARE.to_string())),
            StateValue::Value(v) => Some((slot.clone(), v)),
        })
        .collect()
}

/// Whether the words of `value` occur contiguously in `words`, ignoring case.
pub fn occurs_in(value: &str, words: &[String]) -> bool {
    let needle: Vec<String> = value.split_whitespace().map(str::to_lowercase).collect();
    if needle.is_empty() || needle.len() > words.len() {
        return false;
    }
    words
        .windows(needle.len())
        .any(|w| w.iter().zip(&needle).all(|(a, b)| a.to_lowercase() == *b))
}

/// The candidate sets of every slot in scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub capacity: usize,
    pub sets: BTreeMap<String, CandidateSet>,
}

impl Tracker {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            sets: BTreeMap::new(),
        }
    }

    /// Slots mentioned by user or system so far.
    pub fn slots(&self) -> BTreeSet<String> {
        self.sets.keys().cloned().collect()
    }

    /// Adds this turn's mentions (system values first, then user values),
    /// evicting when a set is full, and recomputes utterance indicators.
    ///
    /// A full set drops its valid value with the lowest score in `prev` that
    /// was not mentioned this turn, the oldest one on ties. When every value
    /// was mentioned this turn the new value is discarded.
    pub fn update(
        &mut self,
        system_values: &[(String, String)],
        system_slots: &BTreeSet<String>,
        user_values: &[(String, String)],
        user_words: &[String],
        prev: &StateDistribution,
    ) {
        for s in system_slots {
            self.sets.entry(s.clone()).or_insert_with(|| CandidateSet::new(self.capacity));
        }
        let mut mentioned: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (slot, value) in system_values.iter().chain(user_values) {
            mentioned.entry(slot).or_default().insert(value);
            let set = self
                .sets
                .entry(slot.clone())
                .or_insert_with(|| CandidateSet::new(self.capacity));
            if set.index_of(value).is_some() || set.capacity == 0 {
                continue;
            }
            if set.values.len() == set.capacity {
                let now = &mentioned[slot.as_str()];
                let scores = prev.get(slot);
                let victim = set
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !now.contains(v.as_str()))
                    .map(|(i, v)| (i, scores.map_or(0.0, |d| d.score_of(v))))
                    .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
                        Some((_, bp)) if bp <= p => best,
                        _ => Some((i, p)),
                    });
                match victim {
                    Some((i, _)) => {
                        set.values.remove(i);
                    }
                    None => continue,
                }
            }
            set.values.push(value.clone());
        }
        for set in self.sets.values_mut() {
            set.in_utterance = set.values.iter().map(|v| occurs_in(v, user_words)).collect();
        }
    }
}

/// Scorer inputs of one slot, excluding the shared `r_utt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotFeatures {
    pub r_slot: Vec<f64>,
    /// One entry per padded position; padding rows are zero apart from `m_v = 0`.
    pub r_cand: Vec<Vec<f64>>,
    pub num_valid: usize,
}

/// Builds `r_slot` and `r_cand` for `slot` from act features, the previous
/// distribution (`None` for a new slot) and the current candidate set.
pub fn slot_features(
    slot: &str,
    acts: &ActFeatures,
    prev: Option<&SlotDistribution>,
    set: &CandidateSet,
) -> SlotFeatures {
    let fresh = SlotDistribution::unspecified();
    let prev = prev.unwrap_or(&fresh);
    let mut r_slot = acts.slot_vector(slot);
    r_slot.extend([prev.dontcare, prev.null]);
    let width = acts.width();
    let r_cand = (0..set.capacity)
        .map(|i| match set.values.get(i) {
            Some(v) => {
                let mut f = acts.cand_vector(slot, v);
                f.push(prev.score_of(v));
                f.push(1.0);
                f.push(f64::from(set.in_utterance[i]));
                f
            }
            None => vec![0.0; width + 3],
        })
        .collect();
    SlotFeatures {
        r_slot,
        r_cand,
        num_valid: set.values.len(),
    }
}

/// One hidden ReLU layer of half the input width, scalar output.
#[derive(Clone, Debug)]
pub struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, rng: &mut R) -> Result<Self> {
        let hidden = (input / 2).max(1);
        Ok(Self {
            w1: store.add_uniform_matrix(format!("{prefix}.w1"), hidden, input, rng)?,
            b1: store.add_zeros(format!("{prefix}.b1"), &[hidden])?,
            w2: store.add_uniform_matrix(format!("{prefix}.w2"), 1, hidden, rng)?,
            b2: store.add_zeros(format!("{prefix}.b2"), &[1])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (w1, b1) = (tape.param(self.w1), tape.param(self.b1));
        let (w2, b2) = (tape.param(self.w2), tape.param(self.b2));
        let pre = tape.affine(w1, x, Some(b1))?;
        let h = tape.relu(pre);
        tape.affine(w2, h, Some(b2))
    }
}

/// Scores δ, each candidate and φ for a slot.
#[derive(Clone, Debug)]
pub struct Scorer {
    dontcare: FeedForward,
    candidate: FeedForward,
    null_logit: ParamId,
}

impl Scorer {
    /// `context` is `dim(d_o)`, `acts` the system act vocabulary size.
    pub fn new<R: Rng>(store: &mut ParamStore, context: usize, acts: usize, rng: &mut R) -> Result<Self> {
        let r_utt = context + acts;
        let r_slot = acts + 2;
        let r_cand = acts + 3;
        Ok(Self {
            dontcare: FeedForward::new(store, "dst.ff_dontcare", r_utt + r_slot, rng)?,
            candidate: FeedForward::new(store, "dst.ff_candidate", r_utt + r_slot + r_cand, rng)?,
            null_logit: store.add_zeros("dst.null_logit", &[1])?,
        })
    }

    /// `r_utt = d_o ⊕ a_utt`.
    pub fn utterance_features(&self, tape: &mut Tape, d_o: Var, acts: &ActFeatures) -> Result<Var> {
        let a = tape.vector(acts.utt.clone());
        tape.concat(&[d_o, a])
    }

    /// Logits over `[φ, δ, c_0 .. c_{K-1}]`, padding masked.
    pub fn logits(&self, tape: &mut Tape, r_utt: Var, f: &SlotFeatures) -> Result<Var> {
        let r_slot = tape.vector(f.r_slot.clone());
        let base = tape.concat(&[r_utt, r_slot])?;
        let mut parts = vec![tape.param(self.null_logit), self.dontcare.forward(tape, base)?];
        for (i, rc) in f.r_cand.iter().enumerate() {
            if i < f.num_valid {
                let rc = tape.vector(rc.clone());
                let x = tape.concat(&[base, rc])?;
                parts.push(self.candidate.forward(tape, x)?);
            } else {
                parts.push(tape.vector(vec![MASKED_LOGIT]));
            }
        }
        tape.concat(&parts)
    }
}

/// Turns a probability vector over `[φ, δ, c...]` into a [`SlotDistribution`].
pub fn distribution_from_probs(probs: &[f64], set: &CandidateSet) -> SlotDistribution {
    SlotDistribution {
        null: probs[NULL_INDEX],
        dontcare: probs[DONTCARE_INDEX],
        candidates: set
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), probs[FIRST_CANDIDATE + i]))
            .collect(),
    }
}

/// Training target for a slot: the gold value's position if it is a
/// candidate, else δ for dontcare, else φ. The flag reports a gold value that
/// could not be reached.
pub fn gold_index(set: &CandidateSet, gold: Option<&str>) -> (usize, bool) {
    match gold {
        None => (NULL_INDEX, false),
        Some(g) => match set.index_of(g) {
            Some(i) => (FIRST_CANDIDATE + i, false),
            None if g == DONTCARE => (DONTCARE_INDEX, false),
            None => (NULL_INDEX, true),
        },
    }
}

/// One entry of a scored value list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredValue {
    pub value: String,
    pub score: f64,
}

/// Full scored `V_s` list per slot, φ and δ first, then candidates in order.
pub fn dump_state(dist: &StateDistribution) -> BTreeMap<String, Vec<ScoredValue>> {
    dist.iter()
        .map(|(slot, d)| {
            let mut list = vec![
                ScoredValue {
                    value: "<null>".into(),
                    score: d.null,
                },
                ScoredValue {
                    value: DONTCARE.into(),
                    score: d.dontcare,
                },
            ];
            list.extend(d.candidates.iter().map(|(v, p)| ScoredValue {
                value: v.clone(),
                score: *p,
            }));
            (slot.clone(), list)
        })
        .collect()
}
