//! Turn-level metrics, McNemar's test and report formatting. Predictions are
//! always produced in inference mode.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{derive_iob_tags, Dialogue, TagSet};
use crate::error::{Error, Result};
use crate::model::{Model, TurnPrediction};

/// The prediction fields that metrics look at.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictedTurn {
    pub intent: Option<String>,
    pub acts: BTreeSet<String>,
    pub tags: Vec<usize>,
    pub state: BTreeMap<String, String>,
}

impl From<&TurnPrediction> for PredictedTurn {
    fn from(p: &TurnPrediction) -> Self {
        Self {
            intent: p.intent.clone(),
            acts: p.acts.clone(),
            tags: p.tag_ids.clone(),
            state: p.state.clone(),
        }
    }
}

/// Per-turn correctness, in corpus order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnBitmaps {
    pub intent: Vec<bool>,
    pub acts: Vec<bool>,
    pub frame: Vec<bool>,
    pub joint_goal: Vec<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub intent_accuracy: f64,
    /// Micro-averaged over (turn, act) pairs.
    pub act_f1: f64,
    pub slot_frame_accuracy: f64,
    pub joint_goal_accuracy: f64,
    /// Micro-averaged over (turn, slot, value) triples.
    pub dst_slot_f1: f64,
    pub turns: usize,
    pub bitmaps: TurnBitmaps,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Scores aligned predictions against the gold corpus. Turns without a gold
/// intent are skipped by intent accuracy. SOS and EOS are ignored by frame
/// accuracy. δ is an ordinary value and φ slots are absent on both sides.
pub fn compute_metrics(predictions: &[Vec<PredictedTurn>], gold: &[Dialogue], tagset: &TagSet) -> Result<MetricsReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Metrics(format!(
            "{} predicted dialogues for {} gold dialogues",
            predictions.len(),
            gold.len()
        )));
    }
    let mut r = MetricsReport::default();
    let (mut intent_ok, mut intent_n) = (0, 0);
    let (mut act_tp, mut act_fp, mut act_fn) = (0, 0, 0);
    let (mut slot_tp, mut slot_fp, mut slot_fn) = (0, 0, 0);
    for (pd, gd) in predictions.iter().zip(gold) {
        if pd.len() != gd.turns.len() {
            return Err(Error::Metrics(format!(
                "dialogue `{}`: {} predicted turns for {} gold turns",
                gd.id,
                pd.len(),
                gd.turns.len()
            )));
        }
        for (p, g) in pd.iter().zip(&gd.turns) {
            r.turns += 1;
            let intent_hit = match &g.gold_intent {
                Some(gi) => {
                    intent_n += 1;
                    let hit = p.intent.as_ref() == Some(gi);
                    intent_ok += usize::from(hit);
                    hit
                }
                None => true,
            };
            r.bitmaps.intent.push(intent_hit);

            act_tp += p.acts.intersection(&g.gold_user_acts).count();
            act_fp += p.acts.difference(&g.gold_user_acts).count();
            act_fn += g.gold_user_acts.difference(&p.acts).count();
            r.bitmaps.acts.push(p.acts == g.gold_user_acts);

            let gold_tags = derive_iob_tags(g.user_tokens.len(), &g.gold_slot_spans, tagset)?;
            if p.tags.len() != gold_tags.len() {
                return Err(Error::Metrics(format!(
                    "dialogue `{}`: {} predicted tags for {} tokens",
                    gd.id,
                    p.tags.len(),
                    gold_tags.len()
                )));
            }
            let n = gold_tags.len();
            let inner = 1..n.saturating_sub(1);
            r.bitmaps.frame.push(p.tags[inner.clone()] == gold_tags[inner]);

            r.bitmaps.joint_goal.push(p.state == g.gold_state);
            for (s, v) in &p.state {
                if g.gold_state.get(s) == Some(v) {
                    slot_tp += 1;
                } else {
                    slot_fp += 1;
                }
            }
            slot_fn += g
                .gold_state
                .iter()
                .filter(|(s, v)| p.state.get(*s) != Some(*v))
                .count();
        }
    }
    let count = |b: &[bool]| b.iter().filter(|&&x| x).count();
    r.intent_accuracy = ratio(intent_ok, intent_n);
    r.act_f1 = f1(act_tp, act_fp, act_fn);
    r.slot_frame_accuracy = ratio(count(&r.bitmaps.frame), r.turns);
    r.joint_goal_accuracy = ratio(count(&r.bitmaps.joint_goal), r.turns);
    r.dst_slot_f1 = f1(slot_tp, slot_fp, slot_fn);
    Ok(r)
}

/// Runs inference over every dialogue from a fresh session.
pub fn predict_corpus(model: &Model, corpus: &[Dialogue]) -> Result<Vec<Vec<TurnPrediction>>> {
    corpus
        .iter()
        .map(|d| {
            let mut session = model.new_session();
            d.turns
                .iter()
                .map(|t| model.infer_turn(&mut session, &t.system_acts, t.words()))
                .collect()
        })
        .collect()
}

/// Inference plus metrics.
pub fn evaluate(model: &Model, corpus: &[Dialogue]) -> Result<(MetricsReport, Vec<Vec<TurnPrediction>>)> {
    let preds = predict_corpus(model, corpus)?;
    let light: Vec<Vec<PredictedTurn>> = preds
        .iter()
        .map(|d| d.iter().map(PredictedTurn::from).collect())
        .collect();
    Ok((compute_metrics(&light, corpus, &model.tagset)?, preds))
}

/// Exact two-sided McNemar p-value from the discordant counts: `b` pairs
/// only the first system got right, `c` only the second.
pub fn mcnemar_exact(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // log C(n, i) accumulated incrementally.
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut log_c = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (log_c - ln2n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// McNemar's test on two aligned per-turn correctness bitmaps.
pub fn mcnemar_test(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Metrics(format!(
            "bitmaps differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let only_a = a.iter().zip(b).filter(|(x, y)| **x && !**y).count();
    let only_b = a.iter().zip(b).filter(|(x, y)| !**x && **y).count();
    Ok(mcnemar_exact(only_a, only_b))
}

/// One row of a results table: separate and joint reports for one setup.
pub struct TableRow<'a> {
    pub eval_set: &'a str,
    pub setup: &'a str,
    pub separate: Option<&'a MetricsReport>,
    pub joint: Option<&'a MetricsReport>,
}

type MetricFn = fn(&MetricsReport) -> f64;

/// Plain-text table with a Sep and a Joint column per metric.
pub fn format_table(rows: &[TableRow]) -> String {
    let metrics: [(&str, MetricFn); 5] = [
        ("Intent Acc", |m| m.intent_accuracy),
        ("Act F1", |m| m.act_f1),
        ("Frame Acc", |m| m.slot_frame_accuracy),
        ("Joint Goal", |m| m.joint_goal_accuracy),
        ("DST Slot F1", |m| m.dst_slot_f1),
    ];
    let mut out = format!("{:<12} {:<6}", "Eval Set", "SS");
    for (name, _) in &metrics {
        out += &format!(" | {name:^15}");
    }
    out += &format!("\n{:<12} {:<6}", "", "");
    for _ in &metrics {
        out += &format!(" | {:>7} {:>7}", "Sep", "Joint");
    }
    out.push('\n');
    let cell = |m: Option<&MetricsReport>, f: MetricFn| match m {
        Some(m) => format!("{:>7.3}", f(m)),
        None => format!("{:>7}", "-"),
    };
    for row in rows {
        out += &format!("{:<12} {:<6}", row.eval_set, row.setup);
        for (_, f) in &metrics {
            out += &format!(" | {} {}", cell(row.separate, *f), cell(row.joint, *f));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcnemar_values() {
        assert_eq!(mcnemar_exact(0, 0), 1.0);
        assert_eq!(mcnemar_exact(7, 7), 1.0);
        let oracle = 2.0 * (1.0 + 12.0 + 66.0) / 4096.0;
        assert!((mcnemar_exact(10, 2) - oracle).abs() < 1e-12);
        assert!((mcnemar_exact(2, 10) - 0.0386).abs() < 1e-4);
        assert!(mcnemar_test(&[true], &[]).is_err());
        let a = [true, true, false, true];
        let b = [true, false, false, false];
        assert!((mcnemar_test(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_counts_stay_finite() {
        let p = mcnemar_exact(5000, 4900);
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn table_lists_every_metric() {
        let m = MetricsReport {
            joint_goal_accuracy: 0.738,
            ..MetricsReport::default()
        };
        let t = format_table(&[TableRow {
            eval_set: "Sim-R",
            setup: "both",
            separate: None,
            joint: Some(&m),
        }]);
        for h in ["Intent Acc", "Act F1", "Frame Acc", "Joint Goal", "DST Slot F1", "0.738"] {
            assert!(t.contains(h), "{t}");
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let ts = TagSet::new(Default::default());
        assert!(compute_metrics(&[vec![]], &[], &ts).is_err());
    }
}
