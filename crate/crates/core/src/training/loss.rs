use crate::data::{derive_iob_tags, Dialogue};
use crate::dst::{gold_index, SlotDistribution, StateDistribution, Tracker};
use crate::error::Result;
use crate::model::{Model, TurnInput};
use crate::tensor::{Tape, Var};

/// Per-turn choice between gold and predicted inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TurnChoice {
    pub gold_tags: bool,
    pub gold_state: bool,
}

impl TurnChoice {
    pub const TEACHER_FORCED: Self = Self {
        gold_tags: true,
        gold_state: true,
    };
}

/// Which loss terms to include.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub intent: bool,
    pub acts: bool,
    pub tags: bool,
    pub state: bool,
}

impl LossTerms {
    pub const ALL: Self = Self {
        intent: true,
        acts: true,
        tags: true,
        state: true,
    };
}

/// Loss of one dialogue plus training diagnostics.
pub struct DialogueLoss {
    pub loss: Var,
    /// Slot targets whose gold value was not among the candidates.
    pub unreachable: usize,
    pub slot_targets: usize,
    /// Previous-state inputs actually fed to each turn.
    pub states_fed: Vec<StateDistribution>,
}

/// Options for [`dialogue_loss`].
pub struct LossOptions<'a> {
    /// Token ids per turn; the surface tokens when `None`.
    pub token_ids: Option<&'a [Vec<usize>]>,
    pub choices: &'a [TurnChoice],
    /// Fixed previous-state inputs per turn, overriding `choices`.
    pub replay_states: Option<&'a [StateDistribution]>,
    pub terms: LossTerms,
}

/// Sum over turns of intent cross entropy (turns with an intent), act binary
/// cross entropy, tag cross entropy (SOS and EOS excluded) and per-slot
/// cross entropy over the scored values. Previous-state inputs are plain
/// numbers, so no gradient crosses turns through them.
pub fn dialogue_loss(model: &Model, tape: &mut Tape, dialogue: &Dialogue, opts: &LossOptions) -> Result<DialogueLoss> {
    let mut carry = model.initial_carry(tape);
    let mut tracker = Tracker::new(model.config.capacity);
    let mut gold_prev = StateDistribution::new();
    let mut pred_prev = StateDistribution::new();
    let mut terms: Vec<Var> = Vec::new();
    let mut unreachable = 0;
    let mut slot_targets = 0;
    let mut states_fed = Vec::with_capacity(dialogue.turns.len());

    for (t, turn) in dialogue.turns.iter().enumerate() {
        let choice = opts.choices.get(t).copied().unwrap_or(TurnChoice::TEACHER_FORCED);
        let gold_tags = derive_iob_tags(turn.user_tokens.len(), &turn.gold_slot_spans, &model.tagset)?;
        let prev = match opts.replay_states {
            Some(r) => r[t].clone(),
            None if choice.gold_state => gold_prev.clone(),
            None => pred_prev.clone(),
        };
        let input = TurnInput {
            system_acts: &turn.system_acts,
            tokens: &turn.user_tokens,
            token_ids: match opts.token_ids {
                Some(ids) => ids[t].clone(),
                None => model.encode_tokens(&turn.user_tokens),
            },
        };
        let tags_in = choice.gold_tags.then_some(gold_tags.as_slice());
        let out = model.step(tape, carry, &mut tracker, &prev, &input, tags_in)?;
        states_fed.push(prev);

        if opts.terms.intent {
            if let Some(i) = turn.gold_intent.as_deref().and_then(|i| model.vocab.intents.get(i)) {
                terms.push(tape.softmax_cross_entropy(out.intent_logits, i)?);
            }
        }
        if opts.terms.acts && !model.vocab.user_acts.is_empty() {
            let targets = model
                .vocab
                .user_acts
                .labels()
                .iter()
                .map(|a| f64::from(turn.gold_user_acts.contains(a)))
                .collect();
            terms.push(tape.sigmoid_cross_entropy(out.act_logits, targets)?);
        }
        if opts.terms.tags {
            let inner = gold_tags.len().saturating_sub(2);
            for (&logits, &gold) in out.tag_logits.iter().zip(&gold_tags).skip(1).take(inner) {
                terms.push(tape.softmax_cross_entropy(logits, gold)?);
            }
        }
        let mut next_gold = StateDistribution::new();
        for (slot, set) in &tracker.sets {
            let (idx, missed) = gold_index(set, turn.gold_state.get(slot).map(String::as_str));
            unreachable += usize::from(missed);
            slot_targets += 1;
            if opts.terms.state {
                terms.push(tape.softmax_cross_entropy(out.slot_logits[slot], idx)?);
            }
            next_gold.insert(slot.clone(), SlotDistribution::one_hot(set, idx));
        }
        unreachable += turn.gold_state.keys().filter(|s| !tracker.sets.contains_key(*s)).count();
        gold_prev = next_gold;
        pred_prev = out.state;
        carry = out.carry;
    }
    let loss = if terms.is_empty() {
        tape.vector(vec![0.0])
    } else {
        tape.sum_vecs(&terms)?
    };
    let loss = tape.sum(loss);
    Ok(DialogueLoss {
        loss,
        unreachable,
        slot_targets,
        states_fed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocab;
    use crate::data::synth::{generate_splits, Domain};
    use crate::model::ModelConfig;
    use crate::tensor::gradient_check;

    fn setup(embed_dim: usize) -> (Model, Vec<Dialogue>) {
        let s = generate_splits(Domain::Restaurant, (3, 0, 0), 11, 1.0);
        let vocab = build_vocab(&s.train, 1).unwrap();
        let cfg = ModelConfig {
            embed_dim,
            capacity: 3,
            ..ModelConfig::default()
        };
        (Model::new(cfg, vocab).unwrap(), s.train)
    }

    fn opts(choices: &[TurnChoice], terms: LossTerms) -> LossOptions<'_> {
        LossOptions {
            token_ids: None,
            choices,
            replay_states: None,
            terms,
        }
    }

    fn value(model: &Model, d: &Dialogue, o: &LossOptions) -> f64 {
        let mut tape = Tape::new(&model.store);
        let l = dialogue_loss(model, &mut tape, d, o).unwrap();
        tape.scalar(l.loss)
    }

    #[test]
    fn loss_is_positive_and_each_term_contributes() {
        let (model, corpus) = setup(6);
        let d = &corpus[0];
        let full = value(&model, d, &opts(&[], LossTerms::ALL));
        assert!(full > 0.0);
        for drop in 0..4 {
            let mut t = LossTerms::ALL;
            match drop {
                0 => t.intent = false,
                1 => t.acts = false,
                2 => t.tags = false,
                _ => t.state = false,
            }
            let partial = value(&model, d, &opts(&[], t));
            assert!(partial < full, "term {drop}: {partial} vs {full}");
            assert!(partial >= 0.0);
        }
    }

    #[test]
    fn state_gradient_does_not_cross_turns() {
        let (mut model, corpus) = setup(4);
        let d = corpus[0].clone();
        let choices = vec![
            TurnChoice {
                gold_tags: true,
                gold_state: false
            };
            d.turns.len()
        ];
        let fed = {
            let mut tape = Tape::new(&model.store);
            dialogue_loss(&model, &mut tape, &d, &opts(&choices, LossTerms::ALL))
                .unwrap()
                .states_fed
        };
        let cfg = model.clone();
        let r = gradient_check(&mut model.store, 1e-5, |tape| {
            let o = LossOptions {
                token_ids: None,
                choices: &choices,
                replay_states: Some(&fed),
                terms: LossTerms::ALL,
            };
            Ok(dialogue_loss(&cfg, tape, &d, &o)?.loss)
        })
        .unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
    }
}
