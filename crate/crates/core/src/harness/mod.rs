//! Data ingestion, configuration, orchestration and reporting.

mod config;
mod experiment;
mod format;

pub use config::{
    BaseConfig, BaselineConfig, DataSource, DelayConfig, ExperimentConfig, InitStudyConfig, LabeledStrategy,
    SafeguardConfig, TheoremAnchor, TheoremConfig, TheoremPoint, SCHEMA_VERSION,
};
pub use experiment::{
    load_data, pooled_gain, report, run_experiment, run_plan, train_base, verify, write_delay_csv, write_init_csv,
    LoadedData, OutputEntry, Plan, RunManifest, RunStatus, VerifyReport, MANIFEST_FILE,
};
pub use format::{parse_examples, read_examples, write_examples};
