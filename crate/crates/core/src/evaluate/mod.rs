//! Classifiers, emotion and loop metrics, statistical tests and survey
//! summaries.

use alloc::string::String;

pub mod classifier;
pub mod hypothesis;
pub mod metrics;
pub mod special;
pub mod survey;

pub use classifier::{
    features, train_classifier, ClassifierConfig, ClassifierModel, LinearTokenClassifier, Target, TrainReport,
};
pub use hypothesis::{
    bonferroni_threshold, friedman, pairwise_bonferroni, wilcoxon_signed_rank, PairwiseResult, StatTestResult,
    TestMethod,
};
pub use metrics::{
    emotion_metrics, group_metrics, loop_metric, render_emotion_table, render_loop_table, EmotionMetrics,
    GroupMetrics, LoopMetric, MetricDifference,
};
pub use survey::{survey_summary, Answer, GroupSummary, Question, SurveyResponse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("degenerate: all paired differences are zero")]
    Degenerate,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("need at least 2 examples per class (high: {positives}, low: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("empty evaluation group")]
    EmptyGroup,
    #[error("invalid classifier config: {0}")]
    InvalidConfig(&'static str),
    #[error("classifier failure: {0}")]
    Model(String),
}
