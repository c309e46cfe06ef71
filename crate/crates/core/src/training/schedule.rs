use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of training spent on gold inputs before sampling starts.
pub const DEFAULT_PRE_FRACTION: f64 = 0.3;

/// Keep probability of gold inputs as a function of the training step: flat
/// at 1 through `k_pre`, then linear down to `p_min` at `k_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub k_pre: usize,
    pub k_max: usize,
    pub p_min: f64,
}

impl SamplingSchedule {
    pub fn new(k_pre: usize, k_max: usize, p_min: f64) -> Result<Self> {
        if !(p_min > 0.0 && p_min <= 1.0) {
            return Err(Error::Config(format!("p_min must lie in (0, 1], got {p_min}")));
        }
        if k_pre > k_max {
            return Err(Error::Config(format!("k_pre ({k_pre}) exceeds k_max ({k_max})")));
        }
        Ok(Self { k_pre, k_max, p_min })
    }

    /// Schedule with `k_pre = floor(pre_fraction * k_max)`.
    pub fn with_fraction(k_max: usize, p_min: f64, pre_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pre_fraction) {
            return Err(Error::Config(format!(
                "pre-sampling fraction must lie in [0, 1], got {pre_fraction}"
            )));
        }
        Self::new((pre_fraction * k_max as f64).floor() as usize, k_max, p_min)
    }

    /// A schedule that always keeps the gold input.
    pub fn pinned(k_max: usize) -> Self {
        Self {
            k_pre: k_max,
            k_max,
            p_min: 1.0,
        }
    }

    pub fn keep_probability(&self, k: usize) -> f64 {
        keep_probability(k, self)
    }
}

/// `1` for `k <= k_pre`, then `1 - (1 - p_min)(k - k_pre)/(k_max - k_pre)`;
/// steps past `k_max` clamp to `p_min`.
pub fn keep_probability(k: usize, s: &SamplingSchedule) -> f64 {
    if k <= s.k_pre {
        return 1.0;
    }
    if k >= s.k_max {
        return s.p_min;
    }
    let frac = (k - s.k_pre) as f64 / (s.k_max - s.k_pre) as f64;
    1.0 - (1.0 - s.p_min) * frac
}

/// Which inputs are sampled from model predictions during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsSetup {
    #[default]
    None,
    Tags,
    State,
    Both,
}

impl SsSetup {
    pub fn samples_tags(self) -> bool {
        matches!(self, Self::Tags | Self::Both)
    }

    pub fn samples_state(self) -> bool {
        matches!(self, Self::State | Self::Both)
    }
}

impl FromStr for SsSetup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "tags" => Ok(Self::Tags),
            "state" => Ok(Self::State),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!(
                "unknown scheduled sampling setup `{s}` (expected none, tags, state or both)"
            ))),
        }
    }
}

impl fmt::Display for SsSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::Tags => "tags",
            Self::State => "state",
            Self::Both => "both",
        };
        f.write_str(s)
    }
}

/// One Bernoulli draw: `true` keeps the gold input.
pub fn keep_gold<R: Rng>(p: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < p
}

/// Gold tags with probability `p_c`, else the predicted ones.
pub fn sample_tags<'a, R: Rng>(gold: &'a [usize], predicted: &'a [usize], p_c: f64, rng: &mut R) -> &'a [usize] {
    if keep_gold(p_c, rng) {
        gold
    } else {
        predicted
    }
}

/// Gold previous state with probability `p_d`, else the predicted one.
pub fn sample_state<'a, T, R: Rng>(gold: &'a T, predicted: &'a T, p_d: f64, rng: &mut R) -> &'a T {
    if keep_gold(p_d, rng) {
        gold
    } else {
        predicted
    }
}
