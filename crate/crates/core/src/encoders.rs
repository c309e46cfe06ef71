//! System act encoder, bidirectional utterance encoder and the dialogue-level
//! state encoder.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::data::{normalize_value, LabelSet, SystemAct};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Binary featurization of one turn's system acts.
///
/// Every act type indexes the same system act vocabulary, whichever of the
/// three groups it falls in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActFeatures {
    /// Acts without parameters.
    pub utt: Vec<f64>,
    /// Slot to indicator vector of acts carrying only that slot.
    pub slot: BTreeMap<String, Vec<f64>>,
    /// Slot to normalized value to indicator vector of acts carrying both.
    pub cand: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    /// `(slot, value)` pairs in first-mention order, for candidate updates.
    pub values: Vec<(String, String)>,
    /// Every slot named by an act.
    pub slots: BTreeSet<String>,
}

impl ActFeatures {
    pub fn width(&self) -> usize {
        self.utt.len()
    }

    pub fn slot_vector(&self, slot: &str) -> Vec<f64> {
        self.slot.get(slot).cloned().unwrap_or_else(|| vec![0.0; self.width()])
    }

    pub fn cand_vector(&self, slot: &str, value: &str) -> Vec<f64> {
        self.cand
            .get(slot)
            .and_then(|m| m.get(value))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.width()])
    }

    /// Sum of the candidate indicator vectors of `slot`.
    pub fn cand_sum(&self, slot: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        if let Some(m) = self.cand.get(slot) {
            for v in m.values() {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
            }
        }
        out
    }
}

/// Splits system acts into parameterless, slot-only and slot-value groups.
pub fn featurize_system_acts(
    acts: &[SystemAct],
    act_types: &LabelSet,
    slots: &LabelSet,
) -> Result<ActFeatures> {
    let width = act_types.len();
    let mut f = ActFeatures {
        utt: vec![0.0; width],
        ..ActFeatures::default()
    };
    for act in acts {
        let a = act_types
            .get(&act.act_type)
            .ok_or_else(|| Error::UnknownActType(act.act_type.clone()))?;
        match (&act.slot, &act.value) {
            (None, Some(_)) => return Err(Error::ValueWithoutSlot(act.to_string())),
            (None, None) => f.utt[a] = 1.0,
            (Some(s), value) => {
                if !slots.contains(s) {
                    return Err(Error::InvalidArgument(format!(
                        "system act `{act}` names unknown slot `{s}`"
                    )));
                }
                f.slots.insert(s.clone());
                match value {
                    None => {
                        f.slot.entry(s.clone()).or_insert_with(|| vec![0.0; width])[a] = 1.0;
                    }
                    Some(v) => {
                        let v = normalize_value(v);
                        if v.is_empty() {
                            continue;
                        }
                        let per_slot = f.cand.entry(s.clone()).or_default();
                        if !per_slot.contains_key(&v) {
                            f.values.push((s.clone(), v.clone()));
                        }
                        per_slot.entry(v).or_insert_with(|| vec![0.0; width])[a] = 1.0;
                    }
                }
            }
        }
    }
    Ok(f)
}

/// Gated recurrent unit with update and reset gates and a tanh candidate.
#[derive(Clone, Debug)]
pub struct Gru {
    w_gates: ParamId,
    b_gates: ParamId,
    w_cand: ParamId,
    b_cand: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_gates: store.add_uniform_matrix(format!("{prefix}.w_gates"), 2 * hidden, input + hidden, rng)?,
            b_gates: store.add_zeros(format!("{prefix}.b_gates"), &[2 * hidden])?,
            w_cand: store.add_uniform_matrix(format!("{prefix}.w_cand"), hidden, input + hidden, rng)?,
            b_cand: store.add_zeros(format!("{prefix}.b_cand"), &[hidden])?,
            input,
            hidden,
        })
    }

    /// `h' = n + z * (h - n)`, `n = tanh(W_n [x; r * h] + b_n)`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let (wg, bg) = (tape.param(self.w_gates), tape.param(self.b_gates));
        let (wn, bn) = (tape.param(self.w_cand), tape.param(self.b_cand));
        let xh = tape.concat(&[x, h])?;
        let pre = tape.affine(wg, xh, Some(bg))?;
        let gates = tape.sigmoid(pre);
        let z = tape.slice(gates, 0, self.hidden)?;
        let r = tape.slice(gates, self.hidden, self.hidden)?;
        let rh = tape.mul(r, h)?;
        let xrh = tape.concat(&[x, rh])?;
        let pre_n = tape.affine(wn, xrh, Some(bn))?;
        let n = tape.tanh(pre_n);
        let diff = tape.sub(h, n)?;
        let keep = tape.mul(z, diff)?;
        tape.add(n, keep)
    }
}

/// Long short-term memory cell without peepholes.
#[derive(Clone, Debug)]
pub struct Lstm {
    w: ParamId,
    b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add_uniform_matrix(format!("{prefix}.w"), 4 * hidden, input + hidden, rng)?,
            b: store.add_zeros(format!("{prefix}.b"), &[4 * hidden])?,
            input,
            hidden,
        })
    }

    /// Returns `(h', c')`. Gate order in the weight rows: input, forget, output, cell.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        let xh = tape.concat(&[x, h])?;
        let pre = tape.affine(w, xh, Some(b))?;
        let sig_pre = tape.slice(pre, 0, 3 * n)?;
        let sig = tape.sigmoid(sig_pre);
        let g_pre = tape.slice(pre, 3 * n, n)?;
        let g = tape.tanh(g_pre);
        let i = tape.slice(sig, 0, n)?;
        let f = tape.slice(sig, n, n)?;
        let o = tape.slice(sig, 2 * n, n)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_new = tape.add(fc, ig)?;
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc)?;
        Ok((h_new, c_new))
    }
}

/// Combines act features, slot embeddings and the slots in scope into `a_t`.
#[derive(Clone, Debug)]
pub struct ActEncoder {
    slot_emb: ParamId,
    w_sc: ParamId,
    b_sc: ParamId,
    w_usc: ParamId,
    b_usc: ParamId,
    hidden: usize,
    pub output: usize,
}

impl ActEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        num_act_types: usize,
        num_slots: usize,
        slot_dim: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = output;
        Ok(Self {
            slot_emb: store.add_uniform_matrix("act.slot_emb", num_slots, slot_dim, rng)?,
            w_sc: store.add_uniform_matrix("act.w_sc", hidden, 2 * num_act_types + slot_dim, rng)?,
            b_sc: store.add_zeros("act.b_sc", &[hidden])?,
            w_usc: store.add_uniform_matrix("act.w_usc", output, hidden + num_act_types, rng)?,
            b_usc: store.add_zeros("act.b_usc", &[output])?,
            hidden,
            output,
        })
    }

    /// Per-slot encodings averaged over `scope`, joined with the parameterless acts.
    /// An empty scope contributes a zero vector.
    pub fn encode(
        &self,
        tape: &mut Tape,
        feats: &ActFeatures,
        scope: &BTreeSet<String>,
        slots: &LabelSet,
    ) -> Result<Var> {
        let emb = tape.param(self.slot_emb);
        let (w_sc, b_sc) = (tape.param(self.w_sc), tape.param(self.b_sc));
        let mut per_slot = Vec::with_capacity(scope.len());
        for s in scope {
            let idx = slots
                .get(s)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown slot `{s}`")))?;
            let a_slot = tape.vector(feats.slot_vector(s));
            let e_s = tape.gather(emb, idx)?;
            let a_cand = tape.vector(feats.cand_sum(s));
            let a_sc = tape.concat(&[a_slot, e_s, a_cand])?;
            let pre = tape.affine(w_sc, a_sc, Some(b_sc))?;
            per_slot.push(tape.relu(pre));
        }
        let pooled = if per_slot.is_empty() {
            tape.zeros(self.hidden)
        } else {
            tape.mean(&per_slot)?
        };
        let a_utt = tape.vector(feats.utt.clone());
        let a_usc = tape.concat(&[pooled, a_utt])?;
        let (w, b) = (tape.param(self.w_usc), tape.param(self.b_usc));
        let pre = tape.affine(w, a_usc, Some(b))?;
        Ok(tape.relu(pre))
    }
}

/// Bidirectional GRU over the token embeddings of one utterance.
#[derive(Clone, Debug)]
pub struct UtteranceEncoder {
    fw: Gru,
    bw: Gru,
}

/// Output of [`UtteranceEncoder::encode`].
pub struct EncodedUtterance {
    /// Final forward state followed by final backward state.
    pub u_e: Var,
    /// Per-token forward output followed by backward output.
    pub u_o: Vec<Var>,
}

impl UtteranceEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        embed_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fw: Gru::new(store, &format!("{prefix}.fw"), embed_dim, hidden, rng)?,
            bw: Gru::new(store, &format!("{prefix}.bw"), embed_dim, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.fw.hidden
    }

    pub fn encode(&self, tape: &mut Tape, table: Var, token_ids: &[usize]) -> Result<EncodedUtterance> {
        if token_ids.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty utterance".into()));
        }
        let xs = token_ids
            .iter()
            .map(|&id| tape.gather(table, id))
            .collect::<Result<Vec<_>>>()?;
        let n = self.hidden();
        let mut h = tape.zeros(n);
        let mut fw = Vec::with_capacity(xs.len());
        for &x in &xs {
            h = self.fw.step(tape, x, h)?;
            fw.push(h);
        }
        let mut h = tape.zeros(n);
        let mut bw = vec![h; xs.len()];
        for (m, &x) in xs.iter().enumerate().rev() {
            h = self.bw.step(tape, x, h)?;
            bw[m] = h;
        }
        let u_e = tape.concat(&[fw[xs.len() - 1], bw[0]])?;
        let u_o = fw
            .iter()
            .zip(&bw)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedUtterance { u_e, u_o })
    }
}

/// Unidirectional GRU with one step per dialogue turn.
///
/// Its output and its hidden state are the same vector.
#[derive(Clone, Debug)]
pub struct StateEncoder {
    gru: Gru,
}

impl StateEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            gru: Gru::new(store, prefix, input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden
    }

    /// Advances on `a_t ⊕ u_e`; the returned vector is both `d_o` and `d_st`.
    pub fn advance(&self, tape: &mut Tape, a_t: Var, u_e: Var, prev: Var) -> Result<Var> {
        let x = tape.concat(&[a_t, u_e])?;
        self.gru.step(tape, x, prev)
    }
}
