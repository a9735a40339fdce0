//! Datasets, configuration, batch runs, accuracy reports and replay.

pub mod config;
pub mod dataset;
pub mod report;
pub mod run;
pub mod trajectory;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{BackendKind, BackendSpec, Config, ConfigError};
pub use dataset::{load_dataset, DatasetError, QuestionType, Sample};
pub use report::{accuracy, format_percent, render_text, MetricMode, RunReport, Tally};
pub use run::{read_report, write_report, BatchOutcome, Engine, REPORT_JSON, REPORT_TEXT, TRAJECTORY_FILE};
pub use trajectory::{
    read_trajectories, replay, SampleStatus, Stage, StageFailure, StageTiming, TrajectoryHeader, TrajectoryRecord,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a trajectory file: {message}")]
    BadHeader { path: PathBuf, message: String },
    #[error("trajectory file version {found} cannot be read by this build (expected version {expected}); re-run the batch to regenerate it")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("trajectory record {index} is corrupt: {message}")]
    CorruptRecord { index: usize, message: String },
    #[error("{path}: not a report: {message}")]
    BadReport { path: PathBuf, message: String },
    #[error("consensus scoring needs references, but sample '{sample_id}' has none")]
    ConsensusNeedsReferences { sample_id: String },
}

impl HarnessError {
    /// True for problems with the inputs the user supplied (as opposed to
    /// failures while running).
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Dataset(_) | HarnessError::Config(_) | HarnessError::ConsensusNeedsReferences { .. }
        )
    }
}
