use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::trainer::{init_model, train, MetricsSummary};
use crate::data::{build_vocab, Dialogue};
use crate::error::{Error, Result};
use crate::model::Model;

/// Hyperparameter values to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub embed_dims: Vec<usize>,
    pub p_mins: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.0001, 0.001, 0.01],
            embed_dims: vec![64, 128, 256],
            p_mins: vec![0.1, 0.3, 0.5],
        }
    }
}

impl GridSpec {
    /// Every combination, learning rate outermost.
    pub fn points(&self) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &d in &self.embed_dims {
                for &p in &self.p_mins {
                    out.push((lr, d, p));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub learning_rate: f64,
    pub embed_dim: usize,
    pub p_min: f64,
    pub dev: MetricsSummary,
}

/// Index of the best result by dev joint goal accuracy. Ties prefer the
/// lower learning rate, then the smaller embedding size.
pub fn select_best(results: &[GridResult]) -> Option<usize> {
    (0..results.len()).min_by(|&a, &b| {
        let (x, y) = (&results[a], &results[b]);
        y.dev
            .joint_goal_accuracy
            .total_cmp(&x.dev.joint_goal_accuracy)
            .then(x.learning_rate.total_cmp(&y.learning_rate))
            .then(x.embed_dim.cmp(&y.embed_dim))
    })
}

/// Trains one model per grid point and keeps the best by dev joint goal.
/// Sampling-free setups only vary `p_min` in name, so the axis collapses.
pub fn grid_search(
    base: &TrainConfig,
    grid: &GridSpec,
    corpus: &[Dialogue],
    dev: &[Dialogue],
    progress: &mut dyn FnMut(&GridResult),
) -> Result<(Vec<GridResult>, Model)> {
    if dev.is_empty() {
        return Err(Error::InvalidArgument("grid search needs a dev corpus".into()));
    }
    let vocab = build_vocab(corpus, base.min_token_freq)?;
    let mut points = grid.points();
    if !base.ss.samples_tags() && !base.ss.samples_state() {
        points.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    }
    let mut results = Vec::new();
    let mut best: Option<Model> = None;
    for (lr, d, p) in points {
        let mut cfg = base.clone();
        cfg.learning_rate = lr;
        cfg.model.embed_dim = d;
        cfg.model.act_dim = None;
        cfg.p_min = p;
        cfg.output = None;
        let mut model = init_model(&cfg, vocab.clone())?;
        let outcome = train(&mut model, corpus, Some(dev), &cfg, &mut |_| Ok(()))?;
        let (_, summary) = outcome
            .best_dev
            .ok_or_else(|| Error::InvalidArgument("no dev evaluation ran".into()))?;
        let r = GridResult {
            learning_rate: lr,
            embed_dim: d,
            p_min: p,
            dev: summary,
        };
        progress(&r);
        results.push(r);
        if select_best(&results) == Some(results.len() - 1) {
            best = Some(model);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    Ok((results, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(lr: f64, d: usize, jg: f64) -> GridResult {
        GridResult {
            learning_rate: lr,
            embed_dim: d,
            p_min: 0.5,
            dev: MetricsSummary {
                intent_accuracy: 0.0,
                act_f1: 0.0,
                slot_frame_accuracy: 0.0,
                joint_goal_accuracy: jg,
                dst_slot_f1: 0.0,
            },
        }
    }

    #[test]
    fn selection_order() {
        assert_eq!(select_best(&[]), None);
        assert_eq!(select_best(&[r(0.01, 64, 0.5), r(0.001, 64, 0.7)]), Some(1));
        assert_eq!(select_best(&[r(0.01, 64, 0.7), r(0.001, 256, 0.7)]), Some(1));
        assert_eq!(select_best(&[r(0.001, 256, 0.7), r(0.001, 64, 0.7)]), Some(1));
        assert_eq!(select_best(&[r(0.001, 64, 0.7), r(0.001, 64, 0.7)]), Some(0));
    }

    #[test]
    fn grid_points() {
        assert_eq!(GridSpec::default().points().len(), 27);
    }
}
