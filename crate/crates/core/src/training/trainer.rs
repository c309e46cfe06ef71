use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{dialogue_loss, LossOptions, LossTerms, TurnChoice};
use super::schedule::{keep_gold, SamplingSchedule};
use crate::checkpoint;
use crate::data::{apply_slot_value_dropout, slot_value_dropout_rate, Dialogue, Vocab};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::model::Model;
use crate::tensor::{Adam, AdamConfig, Tape};

/// The five headline metrics, without per-turn bitmaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub intent_accuracy: f64,
    pub act_f1: f64,
    pub slot_frame_accuracy: f64,
    pub joint_goal_accuracy: f64,
    pub dst_slot_f1: f64,
}

impl From<&MetricsReport> for MetricsSummary {
    fn from(m: &MetricsReport) -> Self {
        Self {
            intent_accuracy: m.intent_accuracy,
            act_f1: m.act_f1,
            slot_frame_accuracy: m.slot_frame_accuracy,
            joint_goal_accuracy: m.joint_goal_accuracy,
            dst_slot_f1: m.dst_slot_f1,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub p_c: f64,
    #[serde(rename = "p_D")]
    pub p_d: f64,
    pub dropout_p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev: Option<MetricsSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub steps: usize,
    pub final_loss: f64,
    /// Step and metrics of the best dev evaluation by joint goal accuracy.
    pub best_dev: Option<(usize, MetricsSummary)>,
    /// Fraction of slot targets whose gold value was not a candidate.
    pub unreachable_fraction: f64,
}

/// The schedules in force for a config: pinned at 1 for inputs the setup
/// does not sample.
pub fn schedules(cfg: &TrainConfig) -> Result<(SamplingSchedule, SamplingSchedule)> {
    let live = SamplingSchedule::with_fraction(cfg.steps, cfg.p_min, cfg.pre_fraction)?;
    let pinned = SamplingSchedule::pinned(cfg.steps);
    Ok((
        if cfg.ss.samples_tags() { live } else { pinned },
        if cfg.ss.samples_state() { live } else { pinned },
    ))
}

/// Builds a fresh model for `cfg` whose initialization follows the run seed.
pub fn init_model(cfg: &TrainConfig, vocab: Vocab) -> Result<Model> {
    let mut mc = cfg.model.clone();
    mc.init_seed = cfg.seed;
    Model::new(mc, vocab)
}

/// Batched training with BPTT over whole dialogues, one ADAM step per batch.
///
/// Each dialogue draws slot-value dropout for its tokens and, per turn, one
/// keep decision for tags and one for the previous state, in that order.
/// All randomness comes from `cfg.seed`, so identical inputs give identical
/// logs and parameters. Dev metrics are computed every `eval_every` steps and
/// at the end; the checkpoint in `cfg.output` is rewritten each time.
pub fn train(
    model: &mut Model,
    corpus: &[Dialogue],
    dev: Option<&[Dialogue]>,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let (tag_schedule, state_schedule) = schedules(cfg)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.store,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut outcome = TrainOutcome {
        steps: 0,
        final_loss: f64::NAN,
        best_dev: None,
        unreachable_fraction: 0.0,
    };
    let (mut unreachable, mut targets) = (0usize, 0usize);

    model.store.zero_grad();
    for k in 0..cfg.steps {
        let p_c = tag_schedule.keep_probability(k);
        let p_d = state_schedule.keep_probability(k);
        let dropout_p = slot_value_dropout_rate(k, cfg.steps, cfg.max_dropout);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size.min(corpus.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let d = &corpus[order[cursor]];
            cursor += 1;
            let token_ids: Vec<Vec<usize>> = d
                .turns
                .iter()
                .map(|t| {
                    let ids = model.encode_tokens(&t.user_tokens);
                    apply_slot_value_dropout(&ids, &t.gold_slot_spans, dropout_p, Vocab::OOV_ID, &mut rng)
                })
                .collect();
            let choices: Vec<TurnChoice> = d
                .turns
                .iter()
                .map(|_| TurnChoice {
                    gold_tags: keep_gold(p_c, &mut rng),
                    gold_state: keep_gold(p_d, &mut rng),
                })
                .collect();
            let grads = {
                let mut tape = Tape::new(&model.store);
                let out = dialogue_loss(
                    model,
                    &mut tape,
                    d,
                    &LossOptions {
                        token_ids: Some(&token_ids),
                        choices: &choices,
                        replay_states: None,
                        terms: LossTerms::ALL,
                    },
                )?;
                unreachable += out.unreachable;
                targets += out.slot_targets;
                batch_loss += tape.scalar(out.loss);
                tape.backward(out.loss)?
            };
            model.store.accumulate(&grads);
        }
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                step: k + 1,
                loss: batch_loss,
            });
        }
        adam.step(&mut model.store);

        let last = k + 1 == cfg.steps;
        let due = cfg.eval_every > 0 && (k + 1) % cfg.eval_every == 0;
        let dev_metrics = match dev {
            Some(dev) if !dev.is_empty() && (due || last) => {
                let summary = MetricsSummary::from(&evaluate(model, dev)?.0);
                let better = outcome
                    .best_dev
                    .as_ref()
                    .is_none_or(|(_, b)| summary.joint_goal_accuracy > b.joint_goal_accuracy);
                if better {
                    outcome.best_dev = Some((k + 1, summary.clone()));
                }
                Some(summary)
            }
            _ => None,
        };
        if let Some(path) = &cfg.output {
            if due || last {
                checkpoint::save(model, path)?;
            }
        }
        sink(&LogRecord {
            step: k + 1,
            loss: batch_loss,
            p_c,
            p_d,
            dropout_p,
            dev: dev_metrics,
        })?;
        outcome.steps = k + 1;
        outcome.final_loss = batch_loss;
    }
    outcome.unreachable_fraction = if targets == 0 {
        0.0
    } else {
        unreachable as f64 / targets as f64
    };
    Ok(outcome)
}
