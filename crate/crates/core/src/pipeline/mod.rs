//! End-to-end experiment orchestration.

mod experiment;
mod stages;

pub use experiment::{
    embed_corpus, evaluate_runs, fit_predict, late_bases, late_oof, prepare_experiment, pretraining_pool,
    run_protocol, run_seed, tokenize_articles, Experiment, FitContext, Fitted, ModelConfigs, ModelSpec, RunResult,
};
pub use stages::{
    load_experiment, reports_from_manifests, run_pipeline, run_stage, BaselineSection, CascadeSection,
    DatasetSection, GraphRecord, Layout, Manifest, ModelFamily, RunConfig, Stage, StageOutput, TextSection,
    EMBEDDINGS, GRAPHS, GRAPH_FEATURES_CSV, METRICS_JSON, METRICS_TXT, NEWS, NODE_FEATURES_JSONL,
    PREDICTIONS_HEADER, SUMMARY_JSON, SUMMARY_TXT, TWEETS,
};
