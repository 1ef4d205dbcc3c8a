//! Cohort and split handling, the training loop, multi-seed runs,
//! evaluation metrics, bootstrap intervals and prediction storage.

mod cohort;
mod fit;
mod metrics;
mod store;

pub use cohort::{Cohort, SplitSpec};
pub use fit::{multi_seed_run, run_seed, train, train_on, TrainConfig, TrainOutcome, PNET_LEARNING_RATE};
pub use metrics::{
    aupr, bootstrap_metrics, bootstrap_metrics_with, evaluate, median, quantile, roc_auc, sample_std,
    BootstrapReport, Interval, Metric, MetricsReport, BOOTSTRAP_REPLICATES, DEFAULT_THRESHOLD, MAX_REDRAWS,
};
pub use store::{
    aggregate_seeds, seed_metrics, write_metrics_csv, PredictionRecord, PredictionStore, SeedPredictions,
    SeedSummary, Spread,
};
