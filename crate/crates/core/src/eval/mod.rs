//! Scoring episodes and latent estimates against simulator truth.

pub mod aspects;
pub mod baselines;
pub mod episode;
pub mod failures;
pub mod fuzzy;
pub mod report;
pub mod stats;

use thiserror::Error;

pub use aspects::{score_latent, AspectAccuracy, Counts};
pub use baselines::{baseline_steps, naive_baselines, BaselineStep, NaiveBaselines};
pub use episode::{classify_stop, score_episode, score_truth, EpisodeMetrics, StopOutcome};
pub use failures::{aggregate_failures, classify_failure, FailureCause, FailureDistribution};
pub use fuzzy::{fuzzy_match, fuzzy_ratio, indel_distance};
pub use report::{score_trace, summarize, MethodSummary, ScoredEpisode};
pub use stats::{paired_permutation_test, PermutationMode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("trace and task do not match: {0}")]
    Mismatch(String),
    #[error("no {0} to aggregate")]
    Empty(&'static str),
}
