use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dialogue, EOS, OOV, PAD, SOS};
use crate::error::{Error, Result};

/// Ordered label inventory with dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I: IntoIterator<Item = String>>(labels: I) -> Self {
        let labels: Vec<String> = labels.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Self::new(Vec::<String>::deserialize(d)?))
    }
}

/// Token vocabulary plus the label inventories of the training split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    token_index: HashMap<String, usize>,
    pub intents: LabelSet,
    pub user_acts: LabelSet,
    pub system_acts: LabelSet,
    pub slots: LabelSet,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const OOV_ID: usize = 1;
    pub const SOS_ID: usize = 2;
    pub const EOS_ID: usize = 3;

    pub fn new(
        tokens: impl IntoIterator<Item = String>,
        intents: LabelSet,
        user_acts: LabelSet,
        system_acts: LabelSet,
        slots: LabelSet,
    ) -> Self {
        let mut all: Vec<String> = [PAD, OOV, SOS, EOS].iter().map(|s| s.to_string()).collect();
        let reserved: BTreeSet<String> = all.iter().cloned().collect();
        let rest: BTreeSet<String> = tokens.into_iter().filter(|t| !reserved.contains(t)).collect();
        all.extend(rest);
        let mut v = Self {
            tokens: all,
            token_index: HashMap::new(),
            intents,
            user_acts,
            system_acts,
            slots,
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.token_index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuilt(mut self) -> Self {
        self.reindex();
        self
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.token_index.get(token).copied().unwrap_or(Self::OOV_ID)
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.token_index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_id(t)).collect()
    }

    /// SHA-256 over the full vocabulary.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("vocab serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// SHA-256 over the label inventories only (intents, acts, slots).
    pub fn label_fingerprint(&self) -> String {
        label_hash(
            self.intents.labels(),
            self.user_acts.labels(),
            self.system_acts.labels(),
            self.slots.labels(),
        )
    }

    /// Fails when `corpus` uses a system act type or slot this vocabulary has
    /// never seen; the model has no parameters for those. Unseen intents and
    /// user acts are allowed and simply score as errors.
    pub fn check_compatible(&self, corpus: &[Dialogue]) -> Result<()> {
        let labels = collect_labels(corpus);
        let ok = labels.system_acts.iter().all(|l| self.system_acts.contains(l))
            && labels.slots.iter().all(|l| self.slots.contains(l));
        if ok {
            return Ok(());
        }
        let v = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>();
        Err(Error::VocabMismatch {
            checkpoint: label_hash(&[], &[], self.system_acts.labels(), self.slots.labels()),
            data: label_hash(&[], &[], &v(&labels.system_acts), &v(&labels.slots)),
        })
    }
}

fn label_hash(a: &[String], b: &[String], c: &[String], d: &[String]) -> String {
    let mut h = Sha256::new();
    for set in [a, b, c, d] {
        for l in set {
            h.update(l.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Default)]
struct Labels {
    intents: BTreeSet<String>,
    user_acts: BTreeSet<String>,
    system_acts: BTreeSet<String>,
    slots: BTreeSet<String>,
}

fn collect_labels(corpus: &[Dialogue]) -> Labels {
    let mut l = Labels::default();
    for t in corpus.iter().flat_map(|d| &d.turns) {
        l.intents.extend(t.gold_intent.iter().cloned());
        l.user_acts.extend(t.gold_user_acts.iter().cloned());
        for a in &t.system_acts {
            l.system_acts.insert(a.act_type.clone());
            l.slots.extend(a.slot.iter().cloned());
        }
        l.slots.extend(t.gold_slot_spans.iter().map(|s| s.slot.clone()));
        l.slots.extend(t.gold_state.keys().cloned());
    }
    l
}

/// Builds the vocabulary from a training split. Tokens seen fewer than
/// `min_token_freq` times map to OOV.
pub fn build_vocab(corpus: &[Dialogue], min_token_freq: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in corpus.iter().flat_map(|d| &d.turns) {
        for tok in &t.user_tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let tokens = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_token_freq.max(1))
        .map(|(t, _)| t.to_string());
    let labels = collect_labels(corpus);
    Ok(Vocab::new(
        tokens,
        LabelSet::new(labels.intents),
        LabelSet::new(labels.user_acts),
        LabelSet::new(labels.system_acts),
        LabelSet::new(labels.slots),
    ))
}
