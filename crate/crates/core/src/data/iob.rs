use super::{LabelSet, SlotSpan};
use crate::error::{Error, Result};

/// One IOB label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// The `2|S| + 1` IOB labels over a slot inventory.
///
/// Label 0 is `O`; slot `i` owns `B` at `1 + 2i` and `I` at `2 + 2i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    slots: LabelSet,
}

impl TagSet {
    pub fn new(slots: LabelSet) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &LabelSet {
        &self.slots
    }

    pub fn num_labels(&self) -> usize {
        2 * self.slots.len() + 1
    }

    pub fn id(&self, tag: Tag) -> usize {
        match tag {
            Tag::Outside => 0,
            Tag::Begin(s) => 1 + 2 * s,
            Tag::Inside(s) => 2 + 2 * s,
        }
    }

    pub fn tag(&self, id: usize) -> Tag {
        match id {
            0 => Tag::Outside,
            n if n % 2 == 1 => Tag::Begin((n - 1) / 2),
            n => Tag::Inside((n - 2) / 2),
        }
    }

    pub fn label_name(&self, id: usize) -> String {
        match self.tag(id) {
            Tag::Outside => "O".to_string(),
            Tag::Begin(s) => format!("B-{}", self.slots.name(s)),
            Tag::Inside(s) => format!("I-{}", self.slots.name(s)),
        }
    }
}

/// Tags a marked token sequence of length `num_tokens` from gold spans: the
/// first span token gets `B-slot`, the rest `I-slot`, everything else `O`.
pub fn derive_iob_tags(num_tokens: usize, spans: &[SlotSpan], tags: &TagSet) -> Result<Vec<usize>> {
    let mut out = vec![tags.id(Tag::Outside); num_tokens];
    let mut owner: Vec<Option<&SlotSpan>> = vec![None; num_tokens];
    for span in spans {
        let slot = tags.slots.get(&span.slot).ok_or_else(|| {
            Error::InvalidArgument(format!("span uses unknown slot `{}`", span.slot))
        })?;
        if span.start == 0 || span.start >= span.end || span.end + 1 > num_tokens {
            return Err(Error::InvalidArgument(format!(
                "span {}:[{}, {}) must lie strictly between SOS and EOS of {} tokens",
                span.slot, span.start, span.end, num_tokens
            )));
        }
        for m in span.start..span.end {
            if let Some(prev) = owner[m] {
                return Err(Error::OverlappingSpans {
                    first: (prev.slot.clone(), prev.start, prev.end),
                    second: (span.slot.clone(), span.start, span.end),
                });
            }
            owner[m] = Some(span);
            out[m] = tags.id(if m == span.start { Tag::Begin(slot) } else { Tag::Inside(slot) });
        }
    }
    Ok(out)
}
