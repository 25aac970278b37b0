//! Training, internal and external evaluation, perturbation suites and reports.

mod config;
mod episode;
mod suite;
mod train;

pub use config::RunConfig;
pub use episode::{
    run_episode, run_episode_observed, EpisodeConfig, EpisodeMetrics, FailureReason, Perturbation,
    Tick, LAP_BINS, LAP_BINS_REQUIRED, MAX_TIME_V_MIN,
};
pub use suite::{
    common_failure, emit_report, generalization_conditions, generalization_suite, read_report,
    report_csv, report_json, robustness_conditions, robustness_suite, run_suite, Brain, Condition,
    ReportFormat, RobustnessMagnitudes, SuiteCell, SuiteConfig, SuiteReport,
};
pub use train::{
    evaluate_internal, train, train_on_split, EpochRecord, InternalMetrics, PreparedData,
    TrainHistory, TrainHyper, TrainOutcome,
};
