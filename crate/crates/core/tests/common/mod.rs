#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use joint_dst::data::synth::{generate_splits, Domain};
use joint_dst::data::{mark_tokens, simdial, Dialogue, LabelSet, SlotSpan, TagSet, Turn};
use joint_dst::dst::{CandidateSet, SlotDistribution, StateDistribution, Tracker};
use joint_dst::eval::{MetricsReport, PredictedTurn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DATA_DIR_ENV: &str = "JOINT_DST_DATA_DIR";

/// Training split of the real corpus when the data directory is set,
/// otherwise the synthetic stand-in. The label says which one was used.
pub fn sim_r_train(n: usize, seed: u64) -> (Vec<Dialogue>, &'static str) {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        let dir = std::path::Path::new(&dir);
        let p = dir.join("sim-R").join("train.json");
        if p.exists() {
            let text = std::fs::read_to_string(p).expect("readable sim-R train split");
            let mut c = simdial::parse_published(&text).expect("valid sim-R train split");
            c.truncate(n);
            return (c, "Sim-R");
        }
    }
    (generate_splits(Domain::Restaurant, (n, 0, 0), seed, 1.0).train, "synthetic Sim-R stand-in")
}

// ---------------------------------------------------------------------------
// Candidate-set reference simulator.

/// One turn of a random tracker scenario.
#[derive(Clone, Debug)]
pub struct TrackerTurn {
    pub system_values: Vec<(String, String)>,
    pub system_slots: BTreeSet<String>,
    pub user_values: Vec<(String, String)>,
    pub words: Vec<String>,
    /// Previous-turn scores per slot and value.
    pub prev: BTreeMap<String, BTreeMap<String, f64>>,
}

const SLOTS: &[&str] = &["time", "date", "place", "people"];
const WORDS: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "the", "at", "for"];

fn random_value(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=2);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Random mentions over a small vocabulary so repeats, collisions and
/// evictions are frequent. Previous scores are drawn over the values the
/// reference simulator holds, plus some noise values.
pub fn random_scenario(rng: &mut ChaCha8Rng, capacity: usize) -> Vec<TrackerTurn> {
    let turns = rng.gen_range(1..=10);
    let mut held: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut out = Vec::with_capacity(turns);
    for _ in 0..turns {
        let mut prev = BTreeMap::new();
        for (slot, values) in &held {
            let mut scores = BTreeMap::new();
            for v in values {
                // Coarse scores so ties happen.
                scores.insert(v.clone(), f64::from(rng.gen_range(0..4)) / 4.0);
            }
            if rng.gen_bool(0.2) {
                scores.insert(random_value(rng), rng.gen());
            }
            prev.insert(slot.clone(), scores);
        }
        let mention = |rng: &mut ChaCha8Rng| -> (String, String) {
            (SLOTS.choose(rng).unwrap().to_string(), random_value(rng))
        };
        let system_values: Vec<_> = (0..rng.gen_range(0..=2)).map(|_| mention(rng)).collect();
        let mut system_slots: BTreeSet<String> = system_values.iter().map(|(s, _)| s.clone()).collect();
        if rng.gen_bool(0.3) {
            system_slots.insert(SLOTS.choose(rng).unwrap().to_string());
        }
        let user_values: Vec<_> = (0..rng.gen_range(0..=4)).map(|_| mention(rng)).collect();
        let mut words: Vec<String> = (0..rng.gen_range(0..8)).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
        for (_, v) in &user_values {
            let at = rng.gen_range(0..=words.len());
            for (k, w) in v.split(' ').enumerate() {
                words.insert(at + k, w.to_string());
            }
        }
        // Reference update to know which values are held next turn.
        let turn = TrackerTurn {
            system_values,
            system_slots,
            user_values,
            words,
            prev,
        };
        let mut sim = ReferenceTracker::from_held(&held, capacity);
        sim.update(&turn);
        held = sim.held();
        out.push(turn);
    }
    out
}

/// Per slot: (value, insertion stamp). Written for clarity, not speed.
#[derive(Clone, Debug, Default)]
pub struct ReferenceTracker {
    capacity: usize,
    clock: u64,
    slots: BTreeMap<String, Vec<(String, u64)>>,
    pub mentioned_in_utterance: BTreeMap<String, Vec<bool>>,
}

impl ReferenceTracker {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    fn from_held(held: &BTreeMap<String, Vec<String>>, capacity: usize) -> Self {
        let mut t = Self::new(capacity);
        for (s, vs) in held {
            let entry = t.slots.entry(s.clone()).or_default();
            for v in vs {
                entry.push((v.clone(), t.clock));
                t.clock += 1;
            }
        }
        t
    }

    pub fn held(&self) -> BTreeMap<String, Vec<String>> {
        self.slots
            .iter()
            .map(|(s, vs)| (s.clone(), vs.iter().map(|(v, _)| v.clone()).collect()))
            .collect()
    }

    pub fn update(&mut self, turn: &TrackerTurn) {
        for s in &turn.system_slots {
            self.slots.entry(s.clone()).or_default();
        }
        let mentions: Vec<&(String, String)> = turn.system_values.iter().chain(&turn.user_values).collect();
        for (k, (slot, value)) in mentions.iter().enumerate() {
            let list = self.slots.entry(slot.clone()).or_default();
            if list.iter().any(|(v, _)| v == value) {
                continue;
            }
            if list.len() >= self.capacity {
                let protected: Vec<&String> = mentions[..=k]
                    .iter()
                    .filter(|(s, _)| s == slot)
                    .map(|(_, v)| v)
                    .collect();
                let score = |v: &String| turn.prev.get(slot).and_then(|m| m.get(v)).copied().unwrap_or(0.0);
                let mut evictable: Vec<&(String, u64)> =
                    list.iter().filter(|(v, _)| !protected.contains(&v)).collect();
                if evictable.is_empty() {
                    continue;
                }
                evictable.sort_by(|a, b| score(&a.0).total_cmp(&score(&b.0)).then(a.1.cmp(&b.1)));
                let victim = evictable[0].1;
                list.retain(|(_, t)| *t != victim);
            }
            list.push((value.clone(), self.clock));
            self.clock += 1;
        }
        let padded = format!(" {} ", turn.words.join(" "));
        self.mentioned_in_utterance = self
            .slots
            .iter()
            .map(|(s, vs)| {
                let flags = vs.iter().map(|(v, _)| padded.contains(&format!(" {v} "))).collect();
                (s.clone(), flags)
            })
            .collect();
    }

    pub fn valid_mask(&self, slot: &str) -> Vec<bool> {
        let n = self.slots[slot].len();
        (0..self.capacity).map(|i| i < n).collect()
    }

    pub fn utterance_mask(&self, slot: &str) -> Vec<bool> {
        let flags = &self.mentioned_in_utterance[slot];
        (0..self.capacity).map(|i| flags.get(i).copied().unwrap_or(false)).collect()
    }
}

fn to_distribution(scores: &BTreeMap<String, BTreeMap<String, f64>>) -> StateDistribution {
    scores
        .iter()
        .map(|(slot, m)| {
            let d = SlotDistribution {
                null: 0.0,
                dontcare: 0.0,
                candidates: m.iter().map(|(v, p)| (v.clone(), *p)).collect(),
            };
            (slot.clone(), d)
        })
        .collect()
}

/// Runs `dialogues` random scenarios per capacity through both trackers.
/// Returns (turns compared, mismatch descriptions).
pub fn compare_with_reference(dialogues: usize, capacities: &[usize], seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for d in 0..dialogues {
        let capacity = capacities[d % capacities.len()];
        let scenario = random_scenario(&mut rng, capacity);
        let mut tracker = Tracker::new(capacity);
        let mut reference = ReferenceTracker::new(capacity);
        for (t, turn) in scenario.iter().enumerate() {
            tracker.update(
                &turn.system_values,
                &turn.system_slots,
                &turn.user_values,
                &turn.words,
                &to_distribution(&turn.prev),
            );
            reference.update(turn);
            compared += 1;
            let held = reference.held();
            let sets: BTreeMap<String, Vec<String>> =
                tracker.sets.iter().map(|(s, c)| (s.clone(), c.values.clone())).collect();
            let mut ok = sets == held;
            if ok {
                for (slot, set) in &tracker.sets {
                    ok &= set.valid_mask() == reference.valid_mask(slot)
                        && set.utterance_mask() == reference.utterance_mask(slot)
                        && set.capacity == capacity;
                }
            }
            if !ok && mismatches.len() < 5 {
                mismatches.push(format!(
                    "dialogue {d} turn {t} (K={capacity}): tracker {sets:?} vs reference {held:?}"
                ));
            } else if !ok {
                mismatches.push(String::new());
            }
        }
    }
    (compared, mismatches)
}

pub fn set_of(values: &[&str], capacity: usize) -> CandidateSet {
    CandidateSet {
        values: values.iter().map(|v| v.to_string()).collect(),
        in_utterance: vec![false; values.len()],
        capacity,
    }
}

// ---------------------------------------------------------------------------
// Random IOB span sets.

/// Non-overlapping spans inside the marked sequence (never on SOS or EOS).
pub fn random_spans(rng: &mut ChaCha8Rng, num_slots: usize) -> (usize, Vec<SlotSpan>) {
    let words = rng.gen_range(0..20);
    let n = words + 2;
    let mut spans = Vec::new();
    let mut pos = 1;
    while pos < n - 1 {
        if rng.gen_bool(0.3) {
            let len = rng.gen_range(1..=3).min(n - 1 - pos);
            spans.push(SlotSpan {
                slot: format!("s{}", rng.gen_range(0..num_slots)),
                start: pos,
                end: pos + len,
            });
            pos += len;
        } else {
            pos += 1;
        }
    }
    (n, spans)
}

pub fn tagset_for(num_slots: usize) -> TagSet {
    TagSet::new(LabelSet::new((0..num_slots).map(|i| format!("s{i}"))))
}

// ---------------------------------------------------------------------------
// Hand-built metric fixture: three dialogues, five turns.

fn turn(words: &[&str], spans: &[(&str, usize, usize)], intent: Option<&str>, acts: &[&str], state: &[(&str, &str)]) -> Turn {
    Turn {
        system_acts: vec![],
        user_tokens: mark_tokens(words),
        gold_intent: intent.map(str::to_string),
        gold_user_acts: acts.iter().map(|a| a.to_string()).collect(),
        gold_slot_spans: spans
            .iter()
            .map(|(s, a, b)| SlotSpan {
                slot: s.to_string(),
                start: *a,
                end: *b,
            })
            .collect(),
        gold_state: state.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
    }
}

fn pred(intent: Option<&str>, acts: &[&str], tags: &[usize], state: &[(&str, &str)]) -> PredictedTurn {
    PredictedTurn {
        intent: intent.map(str::to_string),
        acts: acts.iter().map(|a| a.to_string()).collect(),
        tags: tags.to_vec(),
        state: state.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
    }
}

/// Slots `date` (B=1, I=2) and `time` (B=3, I=4); `O` is 0.
pub fn metric_fixture() -> (Vec<Dialogue>, Vec<Vec<PredictedTurn>>, TagSet, MetricsReport) {
    let tagset = TagSet::new(LabelSet::new(["date".to_string(), "time".to_string()]));
    let gold = vec![
        Dialogue {
            id: "d1".into(),
            turns: vec![
                turn(&["book", "a", "table", "for", "tonight"], &[("date", 5, 6)], Some("RESERVE"), &["INFORM"], &[("date", "tonight")]),
                turn(&["at", "7", "pm"], &[("time", 2, 4)], None, &["INFORM"], &[("date", "tonight"), ("time", "7 pm")]),
            ],
        },
        Dialogue {
            id: "d2".into(),
            turns: vec![turn(&["any", "time", "is", "fine"], &[], Some("RESERVE"), &["INFORM"], &[("time", "dontcare")])],
        },
        Dialogue {
            id: "d3".into(),
            turns: vec![
                turn(&["hi"], &[], None, &["GREETING"], &[]),
                turn(
                    &["friday", "at", "6", "pm"],
                    &[("date", 1, 2), ("time", 3, 5)],
                    Some("BUY"),
                    &["INFORM"],
                    &[("date", "friday"), ("time", "6 pm")],
                ),
            ],
        },
    ];
    let predictions = vec![
        vec![
            // Wrong tag on SOS only: the frame still counts as correct.
            pred(Some("RESERVE"), &["INFORM"], &[1, 0, 0, 0, 0, 1, 0], &[("date", "tonight")]),
            // Intent is not scored here; one spurious act; I-time missed; wrong time value.
            pred(Some("RESERVE"), &["INFORM", "AFFIRM"], &[0, 0, 3, 0, 0], &[("date", "tonight"), ("time", "7")]),
        ],
        vec![pred(Some("BUY"), &[], &[0, 0, 0, 0, 0, 0], &[("time", "dontcare")])],
        vec![
            pred(None, &["GREETING"], &[0, 0, 0], &[]),
            pred(Some("BUY"), &["INFORM"], &[0, 1, 0, 3, 4, 0], &[("date", "friday")]),
        ],
    ];
    // Intent: 2 of 3 scored turns. Acts: tp 4, fp 1, fn 1 -> 8/10.
    // Frames: 4 of 5. Joint goal: 3 of 5. Slots: tp 4, fp 1, fn 2 -> 8/11.
    let expected = MetricsReport {
        intent_accuracy: 2.0 / 3.0,
        act_f1: 0.8,
        slot_frame_accuracy: 0.8,
        joint_goal_accuracy: 0.6,
        dst_slot_f1: 8.0 / 11.0,
        turns: 5,
        bitmaps: joint_dst::eval::TurnBitmaps {
            intent: vec![true, true, false, true, true],
            acts: vec![true, false, false, true, true],
            frame: vec![true, false, true, true, true],
            joint_goal: vec![true, false, true, true, false],
        },
    };
    (gold, predictions, tagset, expected)
}

/// Exact two-sided binomial McNemar oracle via big-integer-free rationals:
/// sums C(n, i) as f64, fine for n up to a few hundred.
pub fn mcnemar_oracle(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    let mut binom = 1.0f64;
    let mut sum = 0.0;
    for i in 0..=k {
        if i > 0 {
            binom = binom * (n - i + 1) as f64 / i as f64;
        }
        sum += binom;
    }
    (2.0 * sum / 2f64.powi(n as i32)).min(1.0)
}
