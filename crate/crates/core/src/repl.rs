//! Line-oriented interactive session over a trained model.
//!
//! `sys <act>[(slot[=value])] ...` sets the system acts of the next turn,
//! `reset` starts a new dialogue, `quit` ends the session and any other
//! non-empty line is a user utterance.

use std::fmt::Write as _;

use crate::data::SystemAct;
use crate::error::{Error, Result};
use crate::model::{Model, Session, TurnPrediction};

pub const USAGE: &str = "commands:\n  sys <act>[(slot[=value])] ...   system acts for the next user turn\n  reset                           start a new dialogue\n  quit                            leave\n  <text>                          user utterance";

/// Parses the argument of a `sys` command, e.g.
/// `offer(restaurant_name=cetrella) offer(time=6 pm) inform(num_people)`.
/// Acts are separated by whitespace or commas outside parentheses. Act
/// types are case-insensitive and stored uppercase, as in the corpora.
pub fn parse_system_acts(text: &str) -> Result<Vec<SystemAct>> {
    let bad = |why: &str| Error::InvalidArgument(format!("cannot parse system acts `{text}`: {why}"));
    let mut acts = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let name_end = rest
            .find(|c: char| c == '(' || c == ',' || c.is_whitespace())
            .unwrap_or(rest.len());
        let raw = &rest[..name_end];
        let name = raw.to_uppercase();
        let name = name.as_str();
        if name.is_empty() {
            return Err(bad("missing act type"));
        }
        if !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
            return Err(bad(&format!("invalid act type `{name}`")));
        }
        rest = &rest[raw.len()..];
        if let Some(inner) = rest.strip_prefix('(') {
            let close = inner.find(')').ok_or_else(|| bad("unclosed parenthesis"))?;
            let arg = &inner[..close];
            rest = &inner[close + 1..];
            let act = match arg.split_once('=') {
                Some((slot, value)) => {
                    let (slot, value) = (slot.trim(), value.trim());
                    if slot.is_empty() || value.is_empty() {
                        return Err(bad("empty slot or value"));
                    }
                    SystemAct::with_value(name, slot, value)
                }
                None if arg.trim().is_empty() => SystemAct::new(name),
                None => SystemAct::with_slot(name, arg.trim()),
            };
            acts.push(act);
        } else {
            acts.push(SystemAct::new(name));
        }
        rest = rest.trim_start_matches(|c: char| c == ',' || c.is_whitespace());
        if rest.starts_with(')') {
            return Err(bad("unbalanced parenthesis"));
        }
    }
    if acts.is_empty() {
        return Err(bad("no acts given"));
    }
    Ok(acts)
}

/// Lowercases and splits off leading and trailing punctuation as tokens.
/// Inner apostrophes and hyphens stay attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let is_punct = |c: char| c.is_ascii_punctuation() && c != '\'';
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let start = lower.find(|c| !is_punct(c)).unwrap_or(lower.len());
        let end = lower.rfind(|c| !is_punct(c)).map_or(start, |i| i + 1);
        out.extend(lower[..start].chars().map(String::from));
        if start < end {
            out.push(lower[start..end].to_string());
        }
        out.extend(lower[end.max(start)..].chars().map(String::from));
    }
    out
}

/// Result of feeding one line to a [`ReplSession`].
#[derive(Debug)]
pub enum ReplEvent {
    /// Blank line: nothing changed.
    Empty,
    SystemActs(Vec<SystemAct>),
    Reset,
    Turn(Box<TurnPrediction>),
    Usage(String),
    Quit,
}

pub struct ReplSession<'m> {
    model: &'m Model,
    session: Session,
    pending: Vec<SystemAct>,
    pub transcript: Vec<String>,
}

impl<'m> ReplSession<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self {
            model,
            session: model.new_session(),
            pending: Vec::new(),
            transcript: Vec::new(),
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn handle_line(&mut self, line: &str) -> Result<ReplEvent> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(ReplEvent::Empty);
        }
        let (head, tail) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match head {
            "quit" | "exit" if tail.is_empty() => return Ok(ReplEvent::Quit),
            "help" if tail.is_empty() => return Ok(ReplEvent::Usage(USAGE.into())),
            "reset" if tail.is_empty() => {
                self.session = self.model.new_session();
                self.pending.clear();
                self.transcript.clear();
                return Ok(ReplEvent::Reset);
            }
            "sys" => {
                return Ok(match parse_system_acts(tail) {
                    Ok(acts) => {
                        self.transcript.push(format!("SYS: {tail}"));
                        self.pending = acts.clone();
                        ReplEvent::SystemActs(acts)
                    }
                    Err(e) => ReplEvent::Usage(format!("{e}\n{USAGE}")),
                });
            }
            _ => {}
        }
        let words = tokenize(line);
        // Unknown act types or slots are reported and dropped; the session is untouched.
        let prediction = match self.model.infer_turn(&mut self.session, &self.pending, &words) {
            Ok(p) => p,
            Err(e @ (Error::UnknownActType(_) | Error::ValueWithoutSlot(_) | Error::InvalidArgument(_))) => {
                self.pending.clear();
                return Ok(ReplEvent::Usage(format!("{e}\n{USAGE}")));
            }
            Err(e) => return Err(e),
        };
        self.pending.clear();
        self.transcript.push(format!("USER: {line}"));
        Ok(ReplEvent::Turn(Box::new(prediction)))
    }
}

/// Human-readable rendering of one turn's predictions.
pub fn format_prediction(p: &TurnPrediction) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "intent: {}", p.intent.as_deref().unwrap_or("-"));
    let acts: Vec<&str> = p.acts.iter().map(String::as_str).collect();
    let _ = writeln!(out, "acts:   {}", if acts.is_empty() { "-".into() } else { acts.join(", ") });
    let tagged: Vec<String> = p
        .tokens
        .iter()
        .zip(&p.tags)
        .skip(1)
        .take(p.tokens.len().saturating_sub(2))
        .map(|(w, t)| format!("{w}/{t}"))
        .collect();
    let _ = writeln!(out, "tags:   {}", tagged.join(" "));
    let values: Vec<String> = p.values.iter().map(|(s, v)| format!("{s}={v}")).collect();
    let _ = writeln!(out, "values: {}", if values.is_empty() { "-".into() } else { values.join(", ") });
    let _ = writeln!(out, "state:");
    if p.scored_state.is_empty() {
        let _ = writeln!(out, "  (empty)");
    }
    for (slot, scored) in &p.scored_state {
        let mut ranked = scored.clone();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        let cells: Vec<String> = ranked.iter().map(|s| format!("{} {:.3}", s.value, s.score)).collect();
        let _ = writeln!(out, "  {slot}: {}", cells.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocab;
    use crate::data::synth::{generate_splits, Domain};
    use crate::model::ModelConfig;

    #[test]
    fn parses_system_acts() {
        let acts = parse_system_acts("offer(restaurant_name=Cetrella), offer(time=6 pm) request(date) greeting()").unwrap();
        assert_eq!(
            acts,
            vec![
                SystemAct::with_value("OFFER", "restaurant_name", "Cetrella"),
                SystemAct::with_value("OFFER", "time", "6 pm"),
                SystemAct::with_slot("REQUEST", "date"),
                SystemAct::new("GREETING"),
            ]
        );
        assert_eq!(parse_system_acts("greeting").unwrap(), vec![SystemAct::new("GREETING")]);
        for bad in ["", "offer(time=6 pm", "offer(=x)", "offer(time=)", "(time)", "of$fer", "offer(x))"] {
            assert!(parse_system_acts(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn tokenizer_splits_edge_punctuation() {
        assert_eq!(
            tokenize("6 pm isn't good for us. How about 7 PM?"),
            ["6", "pm", "isn't", "good", "for", "us", ".", "how", "about", "7", "pm", "?"]
        );
        assert_eq!(tokenize("  \"hi\", there!!"), ["\"", "hi", "\"", ",", "there", "!", "!"]);
        assert_eq!(tokenize("..."), [".", ".", "."]);
        assert!(tokenize("   ").is_empty());
    }

    fn model() -> (Model, Vec<crate::data::Dialogue>) {
        let s = generate_splits(Domain::Restaurant, (4, 0, 0), 2, 1.0);
        let cfg = ModelConfig {
            embed_dim: 6,
            ..ModelConfig::default()
        };
        (Model::new(cfg, build_vocab(&s.train, 1).unwrap()).unwrap(), s.train)
    }

    #[test]
    fn session_commands() {
        let (m, _) = model();
        let mut r = ReplSession::new(&m);
        assert!(matches!(r.handle_line("   ").unwrap(), ReplEvent::Empty));
        assert_eq!(r.session().turn, 0);
        assert!(matches!(r.handle_line("sys offer(time").unwrap(), ReplEvent::Usage(_)));
        assert!(matches!(r.handle_line("sys offer(time=6 pm)").unwrap(), ReplEvent::SystemActs(_)));
        let ReplEvent::Turn(p) = r.handle_line("6 pm isn't good for us. How about 7 pm?").unwrap() else {
            panic!("expected a turn");
        };
        assert!(p.scored_state.contains_key("time"));
        assert!(format_prediction(&p).contains("time:"));
        assert_eq!(r.session().turn, 1);
        assert!(matches!(r.handle_line("").unwrap(), ReplEvent::Empty));
        assert_eq!(r.session().turn, 1);
        assert!(matches!(r.handle_line("reset").unwrap(), ReplEvent::Reset));
        assert_eq!(r.session(), &m.new_session());
        assert!(matches!(r.handle_line("sys dance(time=6 pm)").unwrap(), ReplEvent::SystemActs(_)));
        assert!(matches!(r.handle_line("hello").unwrap(), ReplEvent::Usage(_)));
        assert_eq!(r.session().turn, 0);
        assert!(matches!(r.handle_line("quit").unwrap(), ReplEvent::Quit));
    }

    #[test]
    fn repl_matches_batch_inference() {
        let (m, corpus) = model();
        let d = &corpus[0];
        let mut batch = m.new_session();
        let mut r = ReplSession::new(&m);
        for t in &d.turns {
            let expected = m.infer_turn(&mut batch, &t.system_acts, t.words()).unwrap();
            r.pending = t.system_acts.clone();
            let ReplEvent::Turn(p) = r.handle_line(&t.words().join(" ")).unwrap() else {
                panic!("expected a turn");
            };
            assert_eq!(*p, expected);
        }
    }
}
