//! Experiment orchestration: data loading, splitting, tuning, noise sweeps
//! and reporting.

pub mod config;
pub mod io;
pub mod report;
pub mod split;
pub mod sweep;
pub mod tune;

pub use config::{
    read_structured, DataSource, Evaluation, ExperimentConfig, Grid, Grids, Hyper, Loss,
};
pub use io::{load_embeddings, save_embeddings, EmbeddingMeta};
pub use report::write_report;
pub use split::{split_holdout, Split, Standardizer};
pub use sweep::{
    prepare_data, summarize, sweep, sweep_prepared, tune_prepared, PreparedData, RunRecord,
    SummaryRow, SweepOutput, TuningRecord,
};
pub use tune::{tune, TuneResult};
