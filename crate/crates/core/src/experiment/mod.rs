//! Config-driven experiment runs: repetitions, round logs, summaries.

pub mod config;
mod runner;

pub use config::{
    ClientCount, ClipChoice, DatasetConfig, DatasetKind, DpSettings, ExperimentConfig, RunSettings, SamplingChoice,
    SamplingConfig, StopwordSource,
};
pub use runner::{
    build_partition, centralized_dataset, draw_training_set, load_dataset, mean_std, plan_privacy, round_log_csv,
    run_experiment, summary_csv, supported_clients, training_plan, RepetitionSeeds, Summary, SummaryRow, METRICS,
};
