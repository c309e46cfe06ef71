use rand::Rng;

use super::SlotSpan;

/// Final slot-value dropout rate of the linear schedule.
pub const MAX_SLOT_VALUE_DROPOUT: f64 = 0.4;

/// Dropout rate at `step`: rises linearly from 0 to `max_rate` at `total_steps`.
pub fn slot_value_dropout_rate(step: usize, total_steps: usize, max_rate: f64) -> f64 {
    if total_steps == 0 {
        return max_rate;
    }
    max_rate * (step.min(total_steps) as f64 / total_steps as f64)
}

/// Replaces each token inside a gold span by `oov` with probability `p`.
/// Tokens outside spans, the sequence length and the labels are untouched.
pub fn apply_slot_value_dropout<T: Clone, R: Rng>(
    tokens: &[T],
    spans: &[SlotSpan],
    p: f64,
    oov: T,
    rng: &mut R,
) -> Vec<T> {
    let p = p.clamp(0.0, 1.0);
    let mut out = tokens.to_vec();
    for span in spans {
        for tok in &mut out[span.start..span.end.min(tokens.len())] {
            if rng.gen::<f64>() < p {
                *tok = oov.clone();
            }
        }
    }
    out
}
