//! Splitting protocols, oversampling and classification metrics.

mod metrics;
mod split;

pub use metrics::{
    compute_metrics, evaluate_probabilities, reports_from_json, reports_to_json, reports_to_text, roc_auc,
    ConfusionCounts, Metrics, MetricsReport,
};
pub use split::{
    class_weights, plan_runs, random_oversample, repeated_subsampling, stratified_split, ClassWeighting,
    RunSplit, SplitSpec, ValProtocol,
};
