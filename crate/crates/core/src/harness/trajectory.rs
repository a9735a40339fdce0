//! Per-sample trajectory records and the JSON-lines file that holds them.
//!
//! The first line is a header naming the format, its version, the metric and
//! the configuration fingerprint; each following line is one record in
//! sample order.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::QuestionType;
use super::report::{accuracy, MetricMode, RunReport};
use super::HarnessError;
use crate::backend::CallRecord;
use crate::reasoning::{ParaphrasedQuestion, ReasoningTrace, ReflectionNote};
use crate::relations::ExtractionResult;
use crate::types::{KnowledgeBundle, RewardSignal};

pub const FORMAT: &str = "visreason-trajectories";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub metric: MetricMode,
    pub config_fingerprint: String,
}

impl TrajectoryHeader {
    pub fn new(metric: MetricMode, config_fingerprint: impl Into<String>) -> Self {
        Self { format: FORMAT.into(), version: VERSION, metric, config_fingerprint: config_fingerprint.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Resolved,
    Unresolved,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Relations,
    Knowledge,
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    /// `parse_error` when the answer never matched the required format,
    /// `error` otherwise.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub sample_id: String,
    pub question: String,
    pub question_type: QuestionType,
    pub references: Vec<String>,
    pub config_fingerprint: String,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<KnowledgeBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<ParaphrasedQuestion>,
    pub traces: Vec<ReasoningTrace>,
    pub notes: Vec<ReflectionNote>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardSignal>,
    pub timings: Vec<StageTiming>,
    pub calls: Vec<CallRecord>,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Streams a header and records to a file, flushing after each record.
pub struct TrajectoryWriter {
    path: PathBuf,
    out: std::io::BufWriter<std::fs::File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, header: &TrajectoryHeader) -> Result<Self, HarnessError> {
        let file = std::fs::File::create(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let mut writer = Self { path: path.to_path_buf(), out: std::io::BufWriter::new(file) };
        writer.line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(writer)
    }

    pub fn write(&mut self, record: &TrajectoryRecord) -> Result<(), HarnessError> {
        self.line(&record.to_line())
    }

    fn line(&mut self, text: &str) -> Result<(), HarnessError> {
        let io = |source| HarnessError::Io { path: self.path.clone(), source };
        writeln!(self.out, "{text}").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

/// Reads a trajectory file, checking the header. Record indices in errors
/// are zero-based positions after the header.
pub fn read_trajectories(path: &Path) -> Result<(TrajectoryHeader, Vec<TrajectoryRecord>), HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .transpose()
        .map_err(io)?
        .ok_or_else(|| HarnessError::BadHeader { path: path.to_path_buf(), message: "file is empty".into() })?;
    let header: TrajectoryHeader = serde_json::from_str(&first)
        .map_err(|e| HarnessError::BadHeader { path: path.to_path_buf(), message: e.to_string() })?;
    if header.format != FORMAT {
        return Err(HarnessError::BadHeader {
            path: path.to_path_buf(),
            message: format!("format '{}' is not '{FORMAT}'", header.format),
        });
    }
    if header.version != VERSION {
        return Err(HarnessError::VersionMismatch { found: header.version, expected: VERSION });
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let index = records.len();
        let record: TrajectoryRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::CorruptRecord { index, message: e.to_string() })?;
        if record.index != index {
            return Err(HarnessError::CorruptRecord {
                index,
                message: format!("record claims index {}", record.index),
            });
        }
        records.push(record);
    }
    Ok((header, records))
}

/// Recomputes the report from a trajectory file without any backend calls,
/// using the metric recorded in the header unless `metric` overrides it.
pub fn replay(path: &Path, metric: Option<MetricMode>) -> Result<RunReport, HarnessError> {
    let (header, records) = read_trajectories(path)?;
    accuracy(&records, metric.unwrap_or(header.metric))
}
