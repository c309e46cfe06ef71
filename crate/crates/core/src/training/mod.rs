//! Training: the multi-task loss, scheduled sampling, the optimizer loop and
//! hyperparameter search.

mod config;
mod grid;
mod loss;
mod schedule;
mod trainer;

pub use config::{TrainConfig, CONFIG_KEYS};
pub use grid::{grid_search, select_best, GridResult, GridSpec};
pub use loss::{dialogue_loss, DialogueLoss, LossOptions, LossTerms, TurnChoice};
pub use schedule::{
    keep_gold, keep_probability, sample_state, sample_tags, SamplingSchedule, SsSetup, DEFAULT_PRE_FRACTION,
};
pub use trainer::{init_model, schedules, train, LogRecord, MetricsSummary, TrainOutcome};
