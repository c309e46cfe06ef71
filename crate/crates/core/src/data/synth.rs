//! Seeded generator of restaurant and movie booking dialogues.
//!
//! The dialogues follow the shape of machine-simulated booking conversations:
//! the user states an intent, the system requests missing slots one at a time,
//! offers values the user accepts or rejects, confirms, and closes. Entity-like
//! slots (restaurant and movie names, theatres, locations) draw from pools that
//! are split into a training half and a held-out half so dev/test splits can
//! control how many entity names were seen during training.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mark_tokens, Dialogue, SlotSpan, SystemAct, Turn, DONTCARE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Restaurant,
    Movie,
}

struct IntentDef {
    name: &'static str,
    openers: &'static [&'static str],
    user_slots: &'static [&'static str],
    optional: &'static [&'static str],
    offered: &'static [&'static str],
}

const RESTAURANT_INTENTS: &[IntentDef] = &[
    IntentDef {
        name: "RESERVE_RESTAURANT",
        openers: &[
            "i want to book a table",
            "book me a table",
            "can you reserve a table",
            "i need a restaurant reservation",
            "please make a reservation",
        ],
        user_slots: &["restaurant_name", "num_people", "date", "time"],
        optional: &[],
        offered: &[],
    },
    IntentDef {
        name: "FIND_RESTAURANT",
        openers: &[
            "find me a restaurant",
            "i am looking for a place to eat",
            "can you find a good restaurant",
            "help me find somewhere to eat",
        ],
        user_slots: &["location", "category", "price_range", "num_people", "date", "time"],
        optional: &["category", "price_range"],
        offered: &["restaurant_name"],
    },
];

const MOVIE_INTENTS: &[IntentDef] = &[IntentDef {
    name: "BUY_MOVIE_TICKETS",
    openers: &[
        "i want to buy movie tickets",
        "get me tickets for a movie",
        "can you book movie tickets",
        "i would like to see a movie",
    ],
    user_slots: &["movie", "num_tickets", "date", "time"],
    optional: &[],
    offered: &["theatre_name"],
}];

fn inform_templates(slot: &str) -> &'static [&'static str] {
    match slot {
        "time" => &[
            "{} please",
            "at {}",
            "how about {}",
            "lets do {}",
            "{} works for me",
            "make it {}",
        ],
        "date" => &["{}", "on {}", "{} please", "for {}", "lets go with {}"],
        "num_people" => &["{} people", "for {}", "a table for {} please", "we are {}", "{} of us"],
        "num_tickets" => &["{} tickets", "{} please", "for {} people", "i need {} tickets"],
        "restaurant_name" => &[
            "{}",
            "book {}",
            "at {} please",
            "i want to eat at {}",
            "the restaurant is {}",
        ],
        "location" => &["in {}", "{} please", "somewhere in {}", "near {}", "around {}"],
        "category" => &["{} food", "i want {}", "some {} place", "{} please"],
        "price_range" => &["{}", "something {}", "{} please", "a {} place"],
        "movie" => &["{}", "tickets for {}", "i want to see {}", "{} please", "the movie is {}"],
        "theatre_name" => &["at {}", "{}", "the one at {}"],
        _ => &["{}"],
    }
}

fn opener_fragment(slot: &str) -> &'static [&'static str] {
    match slot {
        "time" => &["at {}"],
        "date" => &["on {}", "for {}"],
        "num_people" => &["for {} people", "for {}"],
        "num_tickets" => &["{} tickets", "for {} people"],
        "restaurant_name" => &["at {}"],
        "location" => &["in {}", "near {}"],
        "category" => &["serving {} food", "that does {}"],
        "price_range" => &["that is {}"],
        "movie" => &["for {}", "to see {}"],
        _ => &["with {}"],
    }
}

const DONTCARE_TEMPLATES: &[&str] = &[
    "i do not care",
    "anything is fine",
    "no preference",
    "it does not matter",
];
const AFFIRM_TEMPLATES: &[&str] = &["sounds good", "that works", "great", "yes please", "perfect"];
const ALTS_TEMPLATES: &[&str] = &["anything else", "what else do you have", "something different please"];
const NEGATE_INFORM_TEMPLATES: &[&str] = &[
    "that does not work for us . how about {}",
    "no , {} would be better",
    "not that one . {} please",
];
const THANKS_TEMPLATES: &[&str] = &["thanks", "thank you , that is all", "great , thanks", "thanks a lot"];

/// Entity pool built from two word lists. The lists are halved so held-out
/// names only use words that never occur in a seen name.
fn compound_pool<R: Rng>(
    first: &[&str],
    second: &[&str],
    rng: &mut R,
    join: impl Fn(usize, &str, &str) -> String,
) -> (Vec<String>, Vec<String>) {
    let mut a: Vec<(usize, &str)> = first.iter().copied().enumerate().collect();
    let mut b: Vec<&str> = second.to_vec();
    a.shuffle(rng);
    b.shuffle(rng);
    let (a_seen, a_held) = a.split_at(a.len() / 2);
    let (b_seen, b_held) = b.split_at(b.len() / 2);
    let combine = |xs: &[(usize, &str)], ys: &[&str]| -> Vec<String> {
        xs.iter()
            .flat_map(|(i, x)| ys.iter().map(|y| join(*i, x, y)).collect::<Vec<_>>())
            .collect()
    };
    (combine(a_seen, b_seen), combine(a_held, b_held))
}

const RESTAURANT_FIRST: &[&str] = &[
    "olive", "golden", "blue", "red", "silver", "little", "royal", "green", "happy", "lucky",
    "old", "grand", "rustic", "urban", "sunny", "crimson", "ivory", "jade", "copper", "maple",
];
const RESTAURANT_SECOND: &[&str] = &[
    "garden", "spoon", "dragon", "bowl", "kitchen", "bistro", "grill", "house", "tavern", "oven",
    "palace", "lantern", "harbor", "leaf", "fork", "plate", "pot", "cellar", "terrace", "corner",
];
const MOVIE_FIRST: &[&str] = &[
    "dark", "last", "silent", "hidden", "lost", "frozen", "eternal", "wild", "broken", "secret",
    "final", "burning", "distant", "fallen", "iron", "midnight", "savage", "quiet", "brave", "electric",
];
const MOVIE_SECOND: &[&str] = &[
    "knight", "river", "empire", "kingdom", "signal", "horizon", "journey", "storm", "legacy", "promise",
    "frontier", "voyage", "code", "mirror", "ocean", "planet", "witness", "harvest", "island", "machine",
];
const LOCATION_DIRECTION: &[&str] = &["north", "south", "east", "west", "downtown", "old", "upper", "lower"];
const LOCATION_BASE: &[&str] = &[
    "san jose", "palo alto", "mountain view", "sunnyvale", "cupertino", "fremont", "oakland",
    "berkeley", "redwood city", "menlo park", "san mateo", "santa clara", "milpitas", "campbell",
    "los gatos", "hayward", "daly city", "alameda", "burlingame", "foster city",
];
const THEATRE_BRAND: &[&str] = &["amc", "regal", "cinemark", "century", "landmark", "cinelux", "alamo", "studio"];
const THEATRE_PLACE: &[&str] = &[
    "mercado", "saratoga", "oakridge", "valley fair", "great mall", "plaza", "riverside",
    "bayfair", "eastridge", "metreon",
];

fn times() -> Vec<String> {
    let mut out = Vec::new();
    for h in 1..=11 {
        out.push(format!("{h} pm"));
        out.push(format!("{h}:30 pm"));
    }
    for h in [9, 10, 11] {
        out.push(format!("{h} am"));
        out.push(format!("{h}:30 am"));
    }
    out.push("noon".into());
    out
}

fn dates() -> Vec<String> {
    let days = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
    let mut out: Vec<String> = ["today", "tomorrow", "tonight"].iter().map(|s| s.to_string()).collect();
    out.extend(days.iter().map(|d| d.to_string()));
    out.extend(days.iter().map(|d| format!("next {d}")));
    for m in ["march", "april", "may", "june"] {
        for d in ["1st", "2nd", "3rd", "5th", "8th", "12th", "15th", "20th", "24th", "30th"] {
            out.push(format!("{m} {d}"));
        }
    }
    out
}

fn counts() -> Vec<String> {
    let words = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    let mut out: Vec<String> = words.iter().map(|s| s.to_string()).collect();
    out.extend((2..=10).map(|n| n.to_string()));
    out
}

fn to_strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Value pools per slot, with entity slots split into seen/held-out halves.
#[derive(Clone, Debug)]
pub struct ValuePools {
    seen: BTreeMap<String, Vec<String>>,
    held_out: BTreeMap<String, Vec<String>>,
}

/// Slots whose values are open-class entity names.
pub const ENTITY_SLOTS: &[&str] = &["restaurant_name", "movie", "theatre_name", "location"];

impl ValuePools {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9001);
        let mut seen = BTreeMap::new();
        let mut held_out = BTreeMap::new();
        let plain = |_: usize, a: &str, b: &str| format!("{a} {b}");
        let entity = [
            ("restaurant_name", compound_pool(RESTAURANT_FIRST, RESTAURANT_SECOND, &mut rng, plain)),
            (
                "movie",
                compound_pool(MOVIE_FIRST, MOVIE_SECOND, &mut rng, |i, a, b| {
                    if i % 3 == 0 {
                        format!("the {a} {b}")
                    } else {
                        format!("{a} {b}")
                    }
                }),
            ),
            ("theatre_name", compound_pool(THEATRE_BRAND, THEATRE_PLACE, &mut rng, plain)),
            ("location", compound_pool(LOCATION_DIRECTION, LOCATION_BASE, &mut rng, plain)),
        ];
        for (slot, (seen_values, held_values)) in entity {
            held_out.insert(slot.to_string(), held_values);
            seen.insert(slot.to_string(), seen_values);
        }
        let closed: [(&str, Vec<String>); 6] = [
            ("time", times()),
            ("date", dates()),
            ("num_people", counts()),
            ("num_tickets", counts()),
            (
                "category",
                to_strings(&[
                    "italian", "thai", "chinese", "mexican", "indian", "french", "japanese", "korean",
                    "vietnamese", "greek", "american", "spanish", "ethiopian", "sushi", "pizza",
                ]),
            ),
            (
                "price_range",
                to_strings(&["cheap", "inexpensive", "moderately priced", "expensive", "pricey", "affordable"]),
            ),
        ];
        for (slot, values) in closed {
            seen.insert(slot.to_string(), values);
        }
        Self { seen, held_out }
    }

    /// Training-half values of `slot`.
    pub fn seen(&self, slot: &str) -> &[String] {
        &self.seen[slot]
    }

    pub fn held_out(&self, slot: &str) -> Option<&[String]> {
        self.held_out.get(slot).map(|v| v.as_slice())
    }
}

/// Generation settings for one split.
#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub domain: Domain,
    pub dialogues: usize,
    pub seed: u64,
    /// Probability that an entity value comes from the seen half of its pool.
    pub seen_entity_fraction: f64,
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    pools: &'a ValuePools,
    seen_fraction: f64,
}

struct Utterance {
    words: Vec<String>,
    spans: Vec<SlotSpan>,
}

impl Utterance {
    fn new() -> Self {
        Self {
            words: Vec::new(),
            spans: Vec::new(),
        }
    }

    fn push_text(&mut self, text: &str) {
        self.words.extend(text.split_whitespace().map(str::to_string));
    }

    /// Appends `template` with `{}` replaced by `value`, tagged as `slot` when given.
    fn push_template(&mut self, template: &str, slot: Option<&str>, value: &str) {
        for piece in template.split_whitespace() {
            if piece == "{}" {
                let start = self.words.len();
                self.push_text(value);
                if let Some(slot) = slot {
                    self.spans.push(SlotSpan {
                        slot: slot.to_string(),
                        start: start + 1,
                        end: self.words.len() + 1,
                    });
                }
            } else {
                self.words.push(piece.to_string());
            }
        }
    }
}

impl Gen<'_> {
    fn pick(&mut self, xs: &[&'static str]) -> &'static str {
        xs[self.rng.gen_range(0..xs.len())]
    }

    fn value(&mut self, slot: &str) -> String {
        let from_held_out = self.rng.gen::<f64>() >= self.seen_fraction;
        let pool = match (from_held_out, self.pools.held_out(slot)) {
            (true, Some(h)) => h,
            _ => self.pools.seen(slot),
        };
        pool[self.rng.gen_range(0..pool.len())].clone()
    }

    fn dialogue(&mut self, id: String, domain: Domain) -> Dialogue {
        let intents = match domain {
            Domain::Restaurant => RESTAURANT_INTENTS,
            Domain::Movie => MOVIE_INTENTS,
        };
        let intent = &intents[self.rng.gen_range(0..intents.len())];
        let mut goal: BTreeMap<&str, String> = BTreeMap::new();
        for &slot in intent.user_slots {
            let v = if intent.optional.contains(&slot) && self.rng.gen::<f64>() < 0.3 {
                DONTCARE.to_string()
            } else {
                self.value(slot)
            };
            goal.insert(slot, v);
        }
        let mut state: BTreeMap<String, String> = BTreeMap::new();
        let mut turns = Vec::new();
        let mut push = |sys: Vec<SystemAct>, utt: Utterance, acts: &[&str], state: &BTreeMap<String, String>| {
            turns.push(Turn {
                system_acts: sys,
                user_tokens: mark_tokens(&utt.words),
                gold_intent: Some(intent.name.to_string()),
                gold_user_acts: acts.iter().map(|a| a.to_string()).collect::<BTreeSet<_>>(),
                gold_slot_spans: utt.spans,
                gold_state: state.clone(),
            });
        };

        // Opening turn: intent plus up to two slot mentions.
        let mut remaining: Vec<&str> = intent.user_slots.to_vec();
        remaining.shuffle(&mut self.rng);
        let n_open = self.rng.gen_range(0..=2usize);
        let mut utt = Utterance::new();
        let opener = self.pick(intent.openers);
        utt.push_text(opener);
        let mut opened = Vec::new();
        for &slot in remaining.iter() {
            if opened.len() == n_open {
                break;
            }
            if goal[slot] == DONTCARE {
                continue;
            }
            let frag = self.pick(opener_fragment(slot));
            utt.push_template(frag, Some(slot), &goal[slot]);
            opened.push(slot);
        }
        for s in &opened {
            state.insert(s.to_string(), goal[s].clone());
        }
        remaining.retain(|s| !opened.contains(s));
        let acts: &[&str] = if opened.is_empty() {
            &["INFORM_INTENT"]
        } else {
            &["INFORM_INTENT", "INFORM"]
        };
        push(vec![SystemAct::new("GREETING")], utt, acts, &state);

        // Slot filling.
        while let Some(slot) = remaining.first().copied() {
            remaining.remove(0);
            let wanted = goal[slot].clone();
            if slot == "time" && wanted != DONTCARE && self.rng.gen::<f64>() < 0.4 {
                let offered = self.value("time");
                let sys = vec![SystemAct::with_value("OFFER", "time", &offered)];
                let mut utt = Utterance::new();
                if offered == wanted || self.rng.gen::<f64>() < 0.4 {
                    utt.push_text(self.pick(AFFIRM_TEMPLATES));
                    state.insert("time".into(), offered);
                    push(sys, utt, &["AFFIRM"], &state);
                } else {
                    let t = self.pick(NEGATE_INFORM_TEMPLATES);
                    utt.push_template(t, Some("time"), &wanted);
                    state.insert("time".into(), wanted);
                    push(sys, utt, &["NEGATE", "INFORM"], &state);
                }
                continue;
            }
            let sys = vec![SystemAct::with_slot("REQUEST", slot)];
            let mut utt = Utterance::new();
            if wanted == DONTCARE {
                utt.push_text(self.pick(DONTCARE_TEMPLATES));
                state.insert(slot.to_string(), DONTCARE.to_string());
                push(sys, utt, &["DONT_CARE"], &state);
                continue;
            }
            let t = self.pick(inform_templates(slot));
            utt.push_template(t, Some(slot), &wanted);
            state.insert(slot.to_string(), wanted);
            // Sometimes volunteer the next slot as well.
            if let Some(&next) = remaining.first() {
                if goal[next] != DONTCARE && self.rng.gen::<f64>() < 0.25 {
                    utt.push_text("and");
                    let frag = self.pick(opener_fragment(next));
                    utt.push_template(frag, Some(next), &goal[next]);
                    state.insert(next.to_string(), goal[next].clone());
                    remaining.remove(0);
                }
            }
            push(sys, utt, &["INFORM"], &state);
        }

        // System proposals.
        for &slot in intent.offered {
            let mut attempts = 0;
            loop {
                let offered = self.value(slot);
                let sys = vec![SystemAct::with_value("OFFER", slot, &offered)];
                let mut utt = Utterance::new();
                attempts += 1;
                if attempts < 3 && self.rng.gen::<f64>() < 0.35 {
                    utt.push_text(self.pick(ALTS_TEMPLATES));
                    push(sys, utt, &["REQUEST_ALTS"], &state);
                } else {
                    utt.push_text(self.pick(AFFIRM_TEMPLATES));
                    state.insert(slot.to_string(), offered);
                    push(sys, utt, &["AFFIRM"], &state);
                    break;
                }
            }
        }

        // Confirmation, with an occasional correction of the time.
        let confirm: Vec<SystemAct> = state
            .iter()
            .filter(|(_, v)| *v != DONTCARE)
            .map(|(s, v)| SystemAct::with_value("CONFIRM", s, v))
            .collect();
        let mut utt = Utterance::new();
        if state.contains_key("time") && self.rng.gen::<f64>() < 0.15 {
            let new_time = self.value("time");
            utt.push_template("no , make it {}", Some("time"), &new_time);
            state.insert("time".into(), new_time);
            push(confirm, utt, &["NEGATE", "INFORM"], &state);
        } else {
            utt.push_text("yes");
            push(confirm, utt, &["AFFIRM"], &state);
        }

        let mut utt = Utterance::new();
        utt.push_text(self.pick(THANKS_TEMPLATES));
        push(
            vec![SystemAct::new("NOTIFY_SUCCESS"), SystemAct::new("REQ_MORE")],
            utt,
            &["THANK_YOU"],
            &state,
        );
        Dialogue { id, turns }
    }
}

/// Generates `config.dialogues` dialogues of one domain.
pub fn generate(config: SynthConfig, pools: &ValuePools, id_prefix: &str) -> Vec<Dialogue> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        pools,
        seen_fraction: config.seen_entity_fraction,
    };
    (0..config.dialogues)
        .map(|i| g.dialogue(format!("{id_prefix}-{i:05}"), config.domain))
        .collect()
}

/// Train/dev/test splits of one domain.
#[derive(Clone, Debug)]
pub struct SynthSplits {
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

/// Train uses only seen entity values; dev/test draw seen values with
/// probability `seen_entity_fraction`.
pub fn generate_splits(
    domain: Domain,
    sizes: (usize, usize, usize),
    seed: u64,
    seen_entity_fraction: f64,
) -> SynthSplits {
    let pools = ValuePools::new(seed);
    let prefix = match domain {
        Domain::Restaurant => "sim-r",
        Domain::Movie => "sim-m",
    };
    let cfg = |dialogues, offset: u64, frac| SynthConfig {
        domain,
        dialogues,
        seed: seed.wrapping_mul(31).wrapping_add(offset),
        seen_entity_fraction: frac,
    };
    SynthSplits {
        train: generate(cfg(sizes.0, 1, 1.0), &pools, &format!("{prefix}-train")),
        dev: generate(cfg(sizes.1, 2, seen_entity_fraction), &pools, &format!("{prefix}-dev")),
        test: generate(cfg(sizes.2, 3, seen_entity_fraction), &pools, &format!("{prefix}-test")),
    }
}

/// Replaces every value of the given slots, in every turn, with a fresh
/// pseudo-word string that never occurs in the training pools. Returns the
/// rewritten corpus and the mapping from old to new value.
pub fn replace_values_with_unseen(
    corpus: &[Dialogue],
    slots: &[&str],
    seed: u64,
) -> (Vec<Dialogue>, BTreeMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syllables = ["zor", "quin", "blax", "vel", "mip", "trov", "dax", "yul", "keb", "frim", "osk", "wub"];
    let mut mapping: BTreeMap<String, String> = BTreeMap::new();
    let fresh = |old: &str, rng: &mut ChaCha8Rng, mapping: &mut BTreeMap<String, String>| -> String {
        if let Some(v) = mapping.get(old) {
            return v.clone();
        }
        let words = old.split_whitespace().count().max(1);
        let new = loop {
            let cand: Vec<String> = (0..words)
                .map(|_| {
                    let n = rng.gen_range(2..=3);
                    (0..n).map(|_| syllables[rng.gen_range(0..syllables.len())]).collect::<String>()
                })
                .collect();
            let cand = cand.join(" ");
            if !mapping.values().any(|v| *v == cand) {
                break cand;
            }
        };
        mapping.insert(old.to_string(), new.clone());
        new
    };
    let mut out = Vec::with_capacity(corpus.len());
    for d in corpus {
        let mut nd = Dialogue {
            id: d.id.clone(),
            turns: Vec::new(),
        };
        for t in &d.turns {
            let mut nt = t.clone();
            for a in &mut nt.system_acts {
                if let (Some(s), Some(v)) = (&a.slot, &a.value) {
                    if slots.contains(&s.as_str()) {
                        a.value = Some(fresh(v, &mut rng, &mut mapping));
                    }
                }
            }
            // Rebuild tokens span by span so offsets stay consistent.
            let mut words: Vec<String> = vec![t.user_tokens[0].clone()];
            let mut spans = Vec::new();
            let mut cursor = 1;
            for sp in &t.gold_slot_spans {
                words.extend(t.user_tokens[cursor..sp.start].iter().cloned());
                let value = t.span_value(sp);
                let new_value = if slots.contains(&sp.slot.as_str()) {
                    fresh(&value, &mut rng, &mut mapping)
                } else {
                    value
                };
                let start = words.len();
                words.extend(new_value.split_whitespace().map(str::to_string));
                spans.push(SlotSpan {
                    slot: sp.slot.clone(),
                    start,
                    end: words.len(),
                });
                cursor = sp.end;
            }
            words.extend(t.user_tokens[cursor..].iter().cloned());
            nt.user_tokens = words;
            nt.gold_slot_spans = spans;
            for (s, v) in nt.gold_state.iter_mut() {
                if slots.contains(&s.as_str()) && v != DONTCARE {
                    *v = fresh(v, &mut rng, &mut mapping);
                }
            }
            nd.turns.push(nt);
        }
        out.push(nd);
    }
    (out, mapping)
}
