//! Intent and user act heads, the context-initialized bi-LSTM slot tagger and
//! IOB decoding.

use std::collections::BTreeSet;

use rand::Rng;

use crate::data::{LabelSet, SlotSpan, Tag, TagSet};
use crate::encoders::Lstm;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Parameters of the three LU tasks.
#[derive(Clone, Debug)]
pub struct LuHeads {
    w_intent: ParamId,
    b_intent: ParamId,
    w_acts: ParamId,
    b_acts: ParamId,
    w_proj: ParamId,
    b_proj: ParamId,
    fw: Lstm,
    bw: Lstm,
    w_tags: ParamId,
    b_tags: ParamId,
}

/// Sizes needed to build [`LuHeads`].
#[derive(Clone, Copy, Debug)]
pub struct LuDims {
    pub context: usize,
    pub token: usize,
    pub act: usize,
    pub tagger: usize,
    pub intents: usize,
    pub user_acts: usize,
    pub tags: usize,
}

impl LuHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, d: LuDims, rng: &mut R) -> Result<Self> {
        let tag_in = d.token + d.act;
        Ok(Self {
            w_intent: store.add_uniform_matrix("lu.w_intent", d.intents, d.context, rng)?,
            b_intent: store.add_zeros("lu.b_intent", &[d.intents])?,
            w_acts: store.add_uniform_matrix("lu.w_acts", d.user_acts, d.context, rng)?,
            b_acts: store.add_zeros("lu.b_acts", &[d.user_acts])?,
            w_proj: store.add_uniform_matrix("lu.tagger.w_init", d.tagger, d.context, rng)?,
            b_proj: store.add_zeros("lu.tagger.b_init", &[d.tagger])?,
            fw: Lstm::new(store, "lu.tagger.fw", tag_in, d.tagger, rng)?,
            bw: Lstm::new(store, "lu.tagger.bw", tag_in, d.tagger, rng)?,
            w_tags: store.add_uniform_matrix("lu.w_tags", d.tags, 2 * d.tagger, rng)?,
            b_tags: store.add_zeros("lu.b_tags", &[d.tags])?,
        })
    }

    /// Intent logits; softmax gives the intent distribution.
    pub fn intent_logits(&self, tape: &mut Tape, d_o: Var) -> Result<Var> {
        let (w, b) = (tape.param(self.w_intent), tape.param(self.b_intent));
        tape.affine(w, d_o, Some(b))
    }

    /// User act logits; the sigmoid of each is that act's probability.
    pub fn act_logits(&self, tape: &mut Tape, d_o: Var) -> Result<Var> {
        let (w, b) = (tape.param(self.w_acts), tape.param(self.b_acts));
        tape.affine(w, d_o, Some(b))
    }

    /// Per-token tag logits. Both LSTM directions start from the projected
    /// previous context with zero cell state.
    pub fn tag_logits(&self, tape: &mut Tape, u_o: &[Var], a_t: Var, prev_d_o: Var) -> Result<Vec<Var>> {
        let (wp, bp) = (tape.param(self.w_proj), tape.param(self.b_proj));
        let h0 = tape.affine(wp, prev_d_o, Some(bp))?;
        let inputs = u_o
            .iter()
            .map(|&u| tape.concat(&[u, a_t]))
            .collect::<Result<Vec<_>>>()?;
        let n = self.fw.hidden;
        let (mut h, mut c) = (h0, tape.zeros(n));
        let mut fw = Vec::with_capacity(inputs.len());
        for &x in &inputs {
            (h, c) = self.fw.step(tape, x, h, c)?;
            fw.push(h);
        }
        let (mut h, mut c) = (h0, tape.zeros(n));
        let mut bw = vec![h; inputs.len()];
        for (m, &x) in inputs.iter().enumerate().rev() {
            (h, c) = self.bw.step(tape, x, h, c)?;
            bw[m] = h;
        }
        let (w, b) = (tape.param(self.w_tags), tape.param(self.b_tags));
        fw.iter()
            .zip(&bw)
            .map(|(&f, &bk)| {
                let s_o = tape.concat(&[bk, f])?;
                tape.affine(w, s_o, Some(b))
            })
            .collect()
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Acts whose probability exceeds `threshold`.
pub fn predict_acts(probs: &[f64], labels: &LabelSet, threshold: f64) -> Result<BTreeSet<String>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "act threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| labels.name(i).to_string())
        .collect())
}

/// Spans of maximal `B-s I-s*` runs. The first and last positions (SOS and
/// EOS) are never part of a span. A dangling `I-s`, or one following a
/// different slot, opens a new span.
pub fn decode_iob_spans(tags: &[usize], tagset: &TagSet) -> Vec<SlotSpan> {
    let n = tags.len();
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let close = |open: &mut Option<(usize, usize)>, end: usize, spans: &mut Vec<SlotSpan>| {
        if let Some((slot, start)) = open.take() {
            spans.push(SlotSpan {
                slot: tagset.slots().name(slot).to_string(),
                start,
                end,
            });
        }
    };
    for (m, &id) in tags.iter().enumerate() {
        let tag = if m == 0 || m + 1 == n {
            Tag::Outside
        } else {
            tagset.tag(id)
        };
        match tag {
            Tag::Outside => close(&mut open, m, &mut spans),
            Tag::Begin(s) => {
                close(&mut open, m, &mut spans);
                open = Some((s, m));
            }
            Tag::Inside(s) => {
                if open.is_none_or(|(cur, _)| cur != s) {
                    close(&mut open, m, &mut spans);
                    open = Some((s, m));
                }
            }
        }
    }
    close(&mut open, n, &mut spans);
    spans
}

/// `(slot, value)` pairs extracted from a tag sequence over marked tokens.
pub fn decode_iob(tags: &[usize], tokens: &[String], tagset: &TagSet) -> Result<Vec<(String, String)>> {
    if tags.len() != tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tags for {} tokens",
            tags.len(),
            tokens.len()
        )));
    }
    Ok(decode_iob_spans(tags, tagset)
        .into_iter()
        .map(|s| (s.slot, tokens[s.start..s.end].join(" ")))
        .collect())
}
