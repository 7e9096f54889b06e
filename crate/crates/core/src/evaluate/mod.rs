//! Confusion-matrix metrics, ranking metrics, cross-validated random search
//! and the repeated-experiment harness.

mod cv;
mod experiment;
mod metrics;

pub use cv::{cross_validate, kfold_split, random_search, Criterion, DrawOutcome, SearchResult, SearchSpace};
pub use experiment::{
    aggregate, fit_and_score, prepare, rep_data, rep_sample, rep_seed, run_experiments, run_rep,
    write_rep_csv, AggregateReport, ExperimentConfig, ExperimentData, ExperimentOutcome, ParamsMode,
    PcaSetting, PreparedData, RepData, RepFailure, RepRecord, Summary, REP_CSV_HEADER,
};
pub use metrics::{confusion_matrix, metrics, pr_auc, roc_auc, ConfusionMatrix, MetricsReport};
