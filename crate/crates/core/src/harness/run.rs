//! Batch execution: each sample flows through relation extraction, knowledge
//! enrichment and reasoning; records are written in sample order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{Config, ConfigError};
use super::dataset::Sample;
use super::report::{accuracy, render_text, MetricMode, RunReport};
use super::trajectory::{
    SampleStatus, Stage, StageFailure, StageTiming, TrajectoryHeader, TrajectoryRecord, TrajectoryWriter,
};
use super::HarnessError;
use crate::backend::{Backends, Role, Session};
use crate::image::ImageInput;
use crate::knowledge::build_bundle;
use crate::pool::ordered_map;
use crate::prompts::PromptSet;
use crate::reasoning::{solve, Problem, Verdict};
use crate::relations::{extract, ExtractionResult, VrdError};

pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Roles every inference run needs, besides the grounder.
pub const INFERENCE_ROLES: [Role; 5] = [Role::VrdModel, Role::Analyzer, Role::Captioner, Role::Paraphraser, Role::Reasoner];

/// Configuration with its backends and prompts instantiated.
pub struct Engine {
    config: Config,
    backends: Backends,
    prompts: PromptSet,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub records: Vec<TrajectoryRecord>,
    pub report: RunReport,
}

impl Engine {
    pub fn new(config: Config) -> Result<Self, ConfigError> {
        let prompts = config.load_prompts()?;
        let backends = config.build_backends()?;
        Self::from_parts(config, backends, prompts)
    }

    /// Uses `backends` instead of the ones described in `config`.
    pub fn from_parts(config: Config, backends: Backends, prompts: PromptSet) -> Result<Self, ConfigError> {
        config.validate()?;
        let fingerprint = config.fingerprint(&prompts)?;
        Ok(Self { config, backends, prompts, fingerprint })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn missing_inference_roles(&self) -> Vec<Role> {
        let mut missing = self.backends.missing(&INFERENCE_ROLES);
        if self.backends.grounder().uses_model() && !self.backends.is_configured(Role::Grounder) {
            missing.push(Role::Grounder);
        }
        missing
    }

    /// Samples in flight; forced to 1 when a backend cannot serve
    /// concurrent requests.
    pub fn effective_concurrency(&self) -> usize {
        if self.backends.allows_concurrency() {
            self.config.run.concurrency
        } else {
            1
        }
    }

    fn record_wall_time(&self) -> bool {
        self.config.run.record_wall_time.unwrap_or(!self.backends.is_deterministic())
    }

    /// Runs every sample, streaming records to `<out_dir>/trajectories.jsonl`
    /// and writing `report.json` and `report.txt` at the end. Sample
    /// failures are recorded and never stop the batch.
    pub fn run_batch(&self, samples: &[Sample], base_dir: &Path, out_dir: &Path) -> Result<BatchOutcome, HarnessError> {
        let missing = self.missing_inference_roles();
        if !missing.is_empty() {
            return Err(ConfigError::MissingRoles(missing).into());
        }
        let metric = self.config.run.metric;
        if metric == MetricMode::Consensus {
            if let Some(s) = samples.iter().find(|s| s.references.is_empty()) {
                return Err(HarnessError::ConsensusNeedsReferences { sample_id: s.id.clone() });
            }
        }
        std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io { path: out_dir.to_path_buf(), source })?;
        let mut writer =
            TrajectoryWriter::create(&out_dir.join(TRAJECTORY_FILE), &TrajectoryHeader::new(metric, &self.fingerprint))?;
        let mut records = Vec::with_capacity(samples.len());
        ordered_map(
            samples,
            self.effective_concurrency(),
            |i, sample| self.run_sample(i, sample, base_dir),
            |_, record| {
                writer.write(&record)?;
                records.push(record);
                Ok::<_, HarnessError>(())
            },
        )?;
        let report = accuracy(&records, metric)?;
        write_report(out_dir, &report)?;
        Ok(BatchOutcome { records, report })
    }

    /// Runs one sample through all stages. Never fails: errors end up in
    /// the record's `failure`.
    pub fn run_sample(&self, index: usize, sample: &Sample, base_dir: &Path) -> TrajectoryRecord {
        let mut session = Session::new(&self.backends, &self.prompts);
        let mut record = TrajectoryRecord {
            index,
            sample_id: sample.id.clone(),
            question: sample.question.clone(),
            question_type: sample.question_type,
            references: sample.references.clone(),
            config_fingerprint: self.fingerprint.clone(),
            status: SampleStatus::Failed,
            failure: None,
            extraction: None,
            knowledge: None,
            paraphrase: None,
            traces: Vec::new(),
            notes: Vec::new(),
            final_answer: None,
            reward: None,
            timings: Vec::new(),
            calls: Vec::new(),
            warnings: Vec::new(),
        };
        if let Err(failure) = self.pipeline(&mut session, sample, base_dir, &mut record) {
            log::warn!("sample {} failed in {:?}: {}", sample.id, failure.stage, failure.message);
            record.status = SampleStatus::Failed;
            record.failure = Some(failure);
        }
        let (calls, warnings) = session.into_parts();
        record.calls = calls;
        record.warnings = warnings;
        record
    }

    fn pipeline(
        &self,
        session: &mut Session<'_>,
        sample: &Sample,
        base_dir: &Path,
        record: &mut TrajectoryRecord,
    ) -> Result<(), StageFailure> {
        let image = ImageInput::load(&base_dir.join(&sample.image)).map_err(|e| failure(Stage::Input, e))?;

        let (extraction, degenerate) = self
            .timed(session, &mut record.timings, Stage::Relations, |s| {
                match extract(s, &image, self.config.vrd.extraction_mode, &self.config.thresholds) {
                    Ok(r) => Ok((r, false)),
                    Err(VrdError::NoKeyEntities { entities }) => {
                        s.warn(format!("{}: no key entities; continuing without a description", sample.id));
                        let empty = ExtractionResult {
                            entities,
                            relations: Vec::new(),
                            regions: Vec::new(),
                            description_d: String::new(),
                        };
                        Ok((empty, true))
                    }
                    Err(e) => Err(e),
                }
            })
            .map_err(|e| failure(Stage::Relations, e))?;
        let key_names: Vec<String> = extraction.key_entities().map(|e| e.name.clone()).collect();
        let description = extraction.description_d.clone();
        record.extraction = Some(extraction);

        let bundle = self
            .timed(session, &mut record.timings, Stage::Knowledge, |s| {
                build_bundle(s, &image, &description, &key_names, degenerate)
            })
            .map_err(|e| failure(Stage::Knowledge, e))?;
        let caption = bundle.caption_c.clone();
        record.knowledge = Some(bundle);

        let problem = Problem {
            question: &sample.question,
            choices: sample.choices(),
            references: &sample.references,
            caption_c: &caption,
        };
        let outcome = self
            .timed(session, &mut record.timings, Stage::Reasoning, |s| solve(s, &image, &problem, &self.config.reasoner))
            .map_err(|e| failure(Stage::Reasoning, e))?;
        record.reward = outcome.final_reward().cloned();
        record.final_answer = outcome.final_answer.clone();
        record.paraphrase = Some(outcome.paraphrase);
        record.traces = outcome.traces;
        record.notes = outcome.notes;
        match outcome.verdict {
            Verdict::Resolved => record.status = SampleStatus::Resolved,
            Verdict::Unresolved => record.status = SampleStatus::Unresolved,
            Verdict::ParseError => {
                return Err(StageFailure {
                    stage: Stage::Reasoning,
                    kind: "parse_error".into(),
                    message: outcome.parse_error.unwrap_or_default(),
                })
            }
        }
        Ok(())
    }

    fn timed<'s, T>(
        &self,
        session: &mut Session<'s>,
        timings: &mut Vec<StageTiming>,
        stage: Stage,
        f: impl FnOnce(&mut Session<'s>) -> T,
    ) -> T {
        let calls_before = session.call_count();
        let start = Instant::now();
        let out = f(session);
        timings.push(StageTiming {
            stage,
            calls: session.call_count() - calls_before,
            elapsed_ms: self.record_wall_time().then(|| start.elapsed().as_millis() as u64),
        });
        out
    }
}

fn failure(stage: Stage, error: impl std::fmt::Display) -> StageFailure {
    StageFailure { stage, kind: "error".into(), message: error.to_string() }
}

/// Writes `report.json` and `report.txt` into `out_dir`.
pub fn write_report(out_dir: &Path, report: &RunReport) -> Result<(PathBuf, PathBuf), HarnessError> {
    let json_path = out_dir.join(REPORT_JSON);
    let text_path = out_dir.join(REPORT_TEXT);
    let json = format!("{}\n", serde_json::to_string_pretty(report).expect("report serializes"));
    std::fs::write(&json_path, json).map_err(|source| HarnessError::Io { path: json_path.clone(), source })?;
    std::fs::write(&text_path, render_text(report)).map_err(|source| HarnessError::Io { path: text_path.clone(), source })?;
    Ok((json_path, text_path))
}

/// Reads a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<RunReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::BadReport { path: path.to_path_buf(), message: e.to_string() })
}
