use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schedule::{SsSetup, DEFAULT_PRE_FRACTION};
use crate::data::MAX_SLOT_VALUE_DROPOUT;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Everything a training run needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    /// Dialogues per optimizer step.
    pub batch_size: usize,
    /// Total optimizer steps, `k_max`.
    pub steps: usize,
    pub ss: SsSetup,
    pub p_min: f64,
    pub pre_fraction: f64,
    pub max_dropout: f64,
    pub seed: u64,
    /// Dev evaluation cadence in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    pub min_token_freq: usize,
    pub corpus: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            learning_rate: 0.001,
            batch_size: 10,
            steps: 20_000,
            ss: SsSetup::None,
            p_min: 0.5,
            pre_fraction: DEFAULT_PRE_FRACTION,
            max_dropout: MAX_SLOT_VALUE_DROPOUT,
            seed: 0,
            eval_every: 1000,
            min_token_freq: 1,
            corpus: None,
            dev_corpus: None,
            output: None,
            log: None,
        }
    }
}

/// Keys accepted in a config file, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "embed_dim",
    "act_dim",
    "capacity",
    "act_threshold",
    "separate_encoders",
    "learning_rate",
    "batch_size",
    "steps",
    "ss",
    "p_min",
    "pre_fraction",
    "max_dropout",
    "seed",
    "eval_every",
    "min_token_freq",
    "corpus",
    "dev_corpus",
    "output",
    "log",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    /// Sets one key. Unknown keys are rejected with the list of valid ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "embed_dim" => self.model.embed_dim = parse(key, v)?,
            "act_dim" => self.model.act_dim = Some(parse(key, v)?),
            "capacity" => self.model.capacity = parse(key, v)?,
            "act_threshold" => self.model.act_threshold = parse(key, v)?,
            "separate_encoders" => self.model.separate_encoders = parse_bool(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "ss" => self.ss = v.parse()?,
            "p_min" => self.p_min = parse(key, v)?,
            "pre_fraction" => self.pre_fraction = parse(key, v)?,
            "max_dropout" => self.max_dropout = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "min_token_freq" => self.min_token_freq = parse(key, v)?,
            "corpus" => self.corpus = Some(PathBuf::from(v)),
            "dev_corpus" => self.dev_corpus = Some(PathBuf::from(v)),
            "output" => self.output = Some(PathBuf::from(v)),
            "log" => self.log = Some(PathBuf::from(v)),
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}`; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders the config in the file format accepted by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = vec![
            format!("embed_dim = {}", self.model.embed_dim),
            format!("act_dim = {}", self.model.act_dim()),
            format!("capacity = {}", self.model.capacity),
            format!("act_threshold = {}", self.model.act_threshold),
            format!("separate_encoders = {}", self.model.separate_encoders),
            format!("learning_rate = {}", self.learning_rate),
            format!("batch_size = {}", self.batch_size),
            format!("steps = {}", self.steps),
            format!("ss = {}", self.ss),
            format!("p_min = {}", self.p_min),
            format!("pre_fraction = {}", self.pre_fraction),
            format!("max_dropout = {}", self.max_dropout),
            format!("seed = {}", self.seed),
            format!("eval_every = {}", self.eval_every),
            format!("min_token_freq = {}", self.min_token_freq),
        ];
        for (k, p) in [
            ("corpus", &self.corpus),
            ("dev_corpus", &self.dev_corpus),
            ("output", &self.output),
            ("log", &self.log),
        ] {
            if let Some(p) = p {
                out.push(format!("{k} = {}", p.display()));
            }
        }
        out.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(Error::Config(format!("p_min must lie in (0, 1], got {}", self.p_min)));
        }
        if !(0.0..=1.0).contains(&self.max_dropout) {
            return Err(Error::Config("max_dropout must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.pre_fraction) {
            return Err(Error::Config("pre_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
