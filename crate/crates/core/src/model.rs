//! The joint LU and DST network and its single per-turn code path.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{mark_tokens, SystemAct, TagSet, Vocab};
use crate::dst::{
    distribution_from_probs, dump_state, read_state, slot_features, ScoredValue, Scorer,
    StateDistribution, Tracker,
};
use crate::encoders::{featurize_system_acts, ActEncoder, StateEncoder, UtteranceEncoder};
use crate::error::{Error, Result};
use crate::lu::{argmax, decode_iob, predict_acts, LuDims, LuHeads};
use crate::tensor::{softmax, ParamId, ParamStore, Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token embedding size; also the utterance encoder and tagger size.
    pub embed_dim: usize,
    /// Width of the system act vector. `None` means `embed_dim`.
    #[serde(default)]
    pub act_dim: Option<usize>,
    /// Candidate set capacity per slot.
    pub capacity: usize,
    /// User act probability threshold.
    pub act_threshold: f64,
    /// Give DST its own utterance and state encoders.
    pub separate_encoders: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            act_dim: None,
            capacity: 7,
            act_threshold: 0.5,
            separate_encoders: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn act_dim(&self) -> usize {
        self.act_dim.unwrap_or(self.embed_dim)
    }

    /// State encoder size: half the embedding size.
    pub fn state_dim(&self) -> usize {
        (self.embed_dim / 2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.act_dim() == 0 {
            return Err(Error::Config("embed_dim and act_dim must be positive".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        if !(self.act_threshold > 0.0 && self.act_threshold < 1.0) {
            return Err(Error::Config(format!(
                "act_threshold must lie in (0, 1), got {}",
                self.act_threshold
            )));
        }
        Ok(())
    }
}

/// Recurrent dialogue context carried between turns on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Carry {
    pub lu: Var,
    pub dst: Option<Var>,
}

/// Encoded inputs of one turn.
#[derive(Clone, Debug)]
pub struct TurnInput<'a> {
    pub system_acts: &'a [SystemAct],
    /// Marked, lowercased surface tokens.
    pub tokens: &'a [String],
    /// Token ids fed to the encoders; may differ from `tokens` under dropout.
    pub token_ids: Vec<usize>,
}

/// Everything one turn produced on the tape.
pub struct StepOutput {
    pub carry: Carry,
    pub intent_logits: Var,
    pub act_logits: Var,
    pub tag_logits: Vec<Var>,
    pub predicted_tags: Vec<usize>,
    /// Slot to logits over `[φ, δ, candidates...]`.
    pub slot_logits: BTreeMap<String, Var>,
    /// Predicted per-slot distributions.
    pub state: StateDistribution,
    pub user_values: Vec<(String, String)>,
}

/// The full network. Embeddings and the act encoder are always shared.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tagset: TagSet,
    pub store: ParamStore,
    tokens: ParamId,
    acts: ActEncoder,
    lu_utterance: UtteranceEncoder,
    lu_state: StateEncoder,
    dst_encoders: Option<(UtteranceEncoder, StateEncoder)>,
    heads: LuHeads,
    scorer: Scorer,
}

/// Inference-time dialogue history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub turn: usize,
    context_lu: Vec<f64>,
    context_dst: Option<Vec<f64>>,
    pub tracker: Tracker,
    pub state: StateDistribution,
}

/// Predictions for one user turn.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurnPrediction {
    pub intent: Option<String>,
    pub acts: BTreeSet<String>,
    pub act_probs: BTreeMap<String, f64>,
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    #[serde(skip)]
    pub tag_ids: Vec<usize>,
    pub values: Vec<(String, String)>,
    pub state: BTreeMap<String, String>,
    pub scored_state: BTreeMap<String, Vec<ScoredValue>>,
    #[serde(skip)]
    pub distribution: StateDistribution,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let tagset = TagSet::new(vocab.slots.clone());
        let (u_d, a_d, s_d) = (config.embed_dim, config.act_dim(), config.state_dim());
        let n_acts = vocab.system_acts.len();
        let tokens = store.add_uniform_matrix("emb.tokens", vocab.num_tokens(), u_d, &mut rng)?;
        let acts = ActEncoder::new(&mut store, n_acts, vocab.slots.len(), u_d, a_d, &mut rng)?;
        let lu_utterance = UtteranceEncoder::new(&mut store, "lu.utt", u_d, u_d, &mut rng)?;
        let lu_state = StateEncoder::new(&mut store, "lu.state", a_d + 2 * u_d, s_d, &mut rng)?;
        let dst_encoders = if config.separate_encoders {
            Some((
                UtteranceEncoder::new(&mut store, "dst.utt", u_d, u_d, &mut rng)?,
                StateEncoder::new(&mut store, "dst.state", a_d + 2 * u_d, s_d, &mut rng)?,
            ))
        } else {
            None
        };
        let heads = LuHeads::new(
            &mut store,
            LuDims {
                context: s_d,
                token: 2 * u_d,
                act: a_d,
                tagger: u_d,
                intents: vocab.intents.len(),
                user_acts: vocab.user_acts.len(),
                tags: tagset.num_labels(),
            },
            &mut rng,
        )?;
        let scorer = Scorer::new(&mut store, s_d, n_acts, &mut rng)?;
        Ok(Self {
            config,
            vocab,
            tagset,
            store,
            tokens,
            acts,
            lu_utterance,
            lu_state,
            dst_encoders,
            heads,
            scorer,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Zero context at the start of a dialogue.
    pub fn initial_carry(&self, tape: &mut Tape) -> Carry {
        let n = self.config.state_dim();
        Carry {
            lu: tape.zeros(n),
            dst: self.dst_encoders.as_ref().map(|_| tape.zeros(n)),
        }
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        self.vocab.encode(tokens)
    }

    /// Runs one turn. Candidate sets in `tracker` are updated from the system
    /// acts and from `tags_for_candidates` (the predicted tags when `None`);
    /// `prev` supplies the previous-turn scores.
    pub fn step(
        &self,
        tape: &mut Tape,
        carry: Carry,
        tracker: &mut Tracker,
        prev: &StateDistribution,
        input: &TurnInput,
        tags_for_candidates: Option<&[usize]>,
    ) -> Result<StepOutput> {
        let feats = featurize_system_acts(input.system_acts, &self.vocab.system_acts, &self.vocab.slots)?;
        let mut scope = tracker.slots();
        scope.extend(feats.slots.iter().cloned());
        let a_t = self.acts.encode(tape, &feats, &scope, &self.vocab.slots)?;

        let table = tape.param(self.tokens);
        let utt = self.lu_utterance.encode(tape, table, &input.token_ids)?;
        let d_o = self.lu_state.advance(tape, a_t, utt.u_e, carry.lu)?;

        let intent_logits = self.heads.intent_logits(tape, d_o)?;
        let act_logits = self.heads.act_logits(tape, d_o)?;
        let tag_logits = self.heads.tag_logits(tape, &utt.u_o, a_t, carry.lu)?;
        let predicted_tags: Vec<usize> = tag_logits
            .iter()
            .map(|&l| argmax(tape.value(l)).unwrap_or(0))
            .collect();

        let tags = tags_for_candidates.unwrap_or(&predicted_tags);
        let user_values = decode_iob(tags, input.tokens, &self.tagset)?;
        let n = input.tokens.len();
        let words: &[String] = if n >= 2 { &input.tokens[1..n - 1] } else { &[] };
        tracker.update(&feats.values, &feats.slots, &user_values, words, prev);

        let (d_o_dst, carry_dst) = match (&self.dst_encoders, carry.dst) {
            (Some((u_enc, s_enc)), Some(prev_dst)) => {
                let u = u_enc.encode(tape, table, &input.token_ids)?;
                let d = s_enc.advance(tape, a_t, u.u_e, prev_dst)?;
                (d, Some(d))
            }
            (None, None) => (d_o, None),
            _ => return Err(Error::InvalidArgument("context does not match encoder layout".into())),
        };

        let r_utt = self.scorer.utterance_features(tape, d_o_dst, &feats)?;
        let mut slot_logits = BTreeMap::new();
        let mut state = StateDistribution::new();
        for (slot, set) in &tracker.sets {
            let f = slot_features(slot, &feats, prev.get(slot), set);
            let logits = self.scorer.logits(tape, r_utt, &f)?;
            let probs = softmax(tape.value(logits));
            state.insert(slot.clone(), distribution_from_probs(&probs, set));
            slot_logits.insert(slot.clone(), logits);
        }
        Ok(StepOutput {
            carry: Carry {
                lu: d_o,
                dst: carry_dst,
            },
            intent_logits,
            act_logits,
            tag_logits,
            predicted_tags,
            slot_logits,
            state,
            user_values,
        })
    }

    pub fn new_session(&self) -> Session {
        let n = self.config.state_dim();
        Session {
            turn: 0,
            context_lu: vec![0.0; n],
            context_dst: self.dst_encoders.as_ref().map(|_| vec![0.0; n]),
            tracker: Tracker::new(self.config.capacity),
            state: StateDistribution::new(),
        }
    }

    /// Processes one turn in inference mode: predicted tags feed the
    /// candidate sets and the previous prediction feeds the scorer.
    /// Evaluation, the REPL and the C interface all go through here.
    pub fn infer_turn(&self, session: &mut Session, system_acts: &[SystemAct], words: &[String]) -> Result<TurnPrediction> {
        let tokens = mark_tokens(words);
        let mut tape = Tape::new(&self.store);
        let carry = Carry {
            lu: tape.constant(Tensor::vector(session.context_lu.clone())),
            dst: session
                .context_dst
                .as_ref()
                .map(|d| tape.constant(Tensor::vector(d.clone()))),
        };
        let input = TurnInput {
            system_acts,
            tokens: &tokens,
            token_ids: self.encode_tokens(&tokens),
        };
        let mut tracker = session.tracker.clone();
        let out = self.step(&mut tape, carry, &mut tracker, &session.state, &input, None)?;

        let intent_probs = softmax(tape.value(out.intent_logits));
        let intent = argmax(&intent_probs).map(|i| self.vocab.intents.name(i).to_string());
        let act_probs: Vec<f64> = tape
            .value(out.act_logits)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let acts = predict_acts(&act_probs, &self.vocab.user_acts, self.config.act_threshold)?;
        let prediction = TurnPrediction {
            intent,
            acts,
            act_probs: act_probs
                .iter()
                .enumerate()
                .map(|(i, &p)| (self.vocab.user_acts.name(i).to_string(), p))
                .collect(),
            tags: out.predicted_tags.iter().map(|&t| self.tagset.label_name(t)).collect(),
            tag_ids: out.predicted_tags.clone(),
            tokens: tokens.clone(),
            values: out.user_values.clone(),
            state: read_state(&out.state),
            scored_state: dump_state(&out.state),
            distribution: out.state.clone(),
        };
        session.context_lu = tape.value(out.carry.lu).to_vec();
        session.context_dst = out.carry.dst.map(|d| tape.value(d).to_vec());
        session.tracker = tracker;
        session.state = out.state;
        session.turn += 1;
        Ok(prediction)
    }
}
