//! Pseudo-ground-truth curation: sample candidates from a teacher model,
//! score each with a judge, keep those strictly above the threshold, and
//! render training records.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{parse_score, Asked, BackendError, Backends, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::pool::ordered_map;
use crate::prompts::{PromptKind, PromptSet};
use crate::scoring::sequence_loss;
use crate::template::{has_placeholder, Vars};
use crate::types::{TokenLogProbs, ValidityScore};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("role {0} must be configured for curation")]
    RoleMissing(Role),
    #[error("caption curation item '{0}' has no analysis input")]
    MissingAnalysisInput(String),
    #[error("candidate for item '{0}' was not retained")]
    NotRetained(String),
    #[error("training record for item '{0}' still contains a placeholder")]
    UnsubstitutedPlaceholder(String),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Analysis,
    Caption,
}

/// One (image, description) pair to curate; `analysis` is required for
/// caption curation and must come from a retained analysis candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationItem {
    pub id: String,
    pub image: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub item_id: String,
    pub kind: CandidateKind,
    pub image: String,
    pub sample_index: u32,
    pub description_d: String,
    pub content: String,
    pub judge_score: ValidityScore,
    pub retained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_input: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub image: String,
    pub template: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurationOutcome {
    pub candidates: Vec<CandidateRecord>,
    pub failures: Vec<ItemFailure>,
}

impl CurationOutcome {
    pub fn retained(&self) -> Vec<CandidateRecord> {
        self.candidates.iter().filter(|c| c.retained).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationConfig {
    pub samples_per_item: usize,
    pub tau: ValidityScore,
    pub concurrency: usize,
    /// Directory image paths are resolved against.
    pub base_dir: PathBuf,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            samples_per_item: 3,
            tau: ValidityScore::new(0.6).expect("in range"),
            concurrency: 4,
            base_dir: PathBuf::from("."),
        }
    }
}

/// Samples, judges and flags candidates for every item. Items whose teacher
/// or judge calls fail are reported in `failures`; the rest still run.
pub fn curate(
    backends: &Backends,
    prompts: &PromptSet,
    kind: CandidateKind,
    items: &[CurationItem],
    config: &CurationConfig,
) -> Result<CurationOutcome, CurationError> {
    for role in [Role::Teacher, Role::Judge] {
        if !backends.is_configured(role) {
            return Err(CurationError::RoleMissing(role));
        }
    }
    if kind == CandidateKind::Caption {
        if let Some(item) = items.iter().find(|i| i.analysis.as_deref().is_none_or(|a| a.trim().is_empty())) {
            return Err(CurationError::MissingAnalysisInput(item.id.clone()));
        }
    }
    let concurrency = if backends.allows_concurrency() { config.concurrency } else { 1 };
    let mut outcome = CurationOutcome::default();
    ordered_map(
        items,
        concurrency,
        |_, item| curate_item(backends, prompts, kind, item, config),
        |_, result| {
            match result {
                Ok(mut records) => outcome.candidates.append(&mut records),
                Err(failure) => {
                    log::warn!("curation item {} failed: {}", failure.item_id, failure.error);
                    outcome.failures.push(failure);
                }
            }
            Ok::<_, CurationError>(())
        },
    )?;
    Ok(outcome)
}

fn curate_item(
    backends: &Backends,
    prompts: &PromptSet,
    kind: CandidateKind,
    item: &CurationItem,
    config: &CurationConfig,
) -> Result<Vec<CandidateRecord>, ItemFailure> {
    let fail = |error: String| ItemFailure { item_id: item.id.clone(), error };
    let image = ImageInput::load(&config.base_dir.join(&item.image)).map_err(|e| fail(e.to_string()))?;
    let mut session = Session::new(backends, prompts);
    let analysis = item.analysis.clone().unwrap_or_default();
    let (teacher_prompt, judge_prompt) = match kind {
        CandidateKind::Analysis => (PromptKind::TeacherAnalysis, PromptKind::JudgeAnalysis),
        CandidateKind::Caption => (PromptKind::TeacherCaption, PromptKind::JudgeCaption),
    };
    let vars = Vars::new().set("description", item.description.as_str()).set("analysis", analysis.as_str());
    let prompt = session.render(teacher_prompt, &vars).map_err(|e| fail(e.to_string()))?;

    let mut records = Vec::with_capacity(config.samples_per_item);
    for sample_index in 0..config.samples_per_item {
        let content = session
            .complete_text(Role::Teacher, vec![ChatMessage::user_with_image(prompt.clone(), &image)])
            .map_err(|e| fail(e.to_string()))?;
        let judge_score = judge(&mut session, &image, judge_prompt, &vars, &content).map_err(fail)?;
        records.push(CandidateRecord {
            item_id: item.id.clone(),
            kind,
            image: item.image.clone(),
            sample_index: sample_index as u32,
            description_d: item.description.clone(),
            content,
            judge_score,
            retained: judge_score.exceeds(config.tau),
            analysis_input: (kind == CandidateKind::Caption).then(|| analysis.clone()),
        });
    }
    Ok(records)
}

fn judge(
    session: &mut Session<'_>,
    image: &ImageInput,
    prompt: PromptKind,
    vars: &Vars,
    candidate: &str,
) -> Result<ValidityScore, String> {
    let mut vars = vars.clone();
    vars.insert("candidate", candidate);
    let text = session.render(prompt, &vars).map_err(|e| e.to_string())?;
    match session
        .ask_parsed(
            Role::Judge,
            vec![ChatMessage::user_with_image(text, image)],
            "Reply with a single number between 0 and 1.",
            |t| parse_score(t).map_err(|e| e.to_string()),
        )
        .map_err(|e: BackendError| e.to_string())?
    {
        Asked::Parsed(score) => Ok(score),
        Asked::Unparsed { reason, .. } => Err(format!("judge output unusable: {reason}")),
    }
}

/// Renders the fine-tuning prompt for each retained candidate and pairs it
/// with the candidate text as the target.
pub fn emit_training_records(
    retained: &[CandidateRecord],
    prompts: &PromptSet,
) -> Result<Vec<TrainingRecord>, CurationError> {
    retained
        .iter()
        .map(|c| {
            if !c.retained {
                return Err(CurationError::NotRetained(c.item_id.clone()));
            }
            let mut vars = Vars::new().set("image_ref", c.image.as_str()).set("description", c.description_d.as_str());
            let kind = match c.kind {
                CandidateKind::Analysis => PromptKind::TrainAnalysis,
                CandidateKind::Caption => {
                    let analysis = c
                        .analysis_input
                        .as_deref()
                        .ok_or_else(|| CurationError::MissingAnalysisInput(c.item_id.clone()))?;
                    vars.insert("analysis", analysis);
                    PromptKind::TrainCaption
                }
            };
            let template = prompts.render(kind, &vars)?;
            if has_placeholder(&template) {
                return Err(CurationError::UnsubstitutedPlaceholder(c.item_id.clone()));
            }
            Ok(TrainingRecord { image: c.image.clone(), template, target: c.content.clone() })
        })
        .collect()
}

/// Caption-curation items built from retained analysis candidates, one per
/// candidate.
pub fn items_from_retained(records: &[CandidateRecord]) -> Vec<CurationItem> {
    records
        .iter()
        .filter(|r| r.retained && r.kind == CandidateKind::Analysis)
        .map(|r| CurationItem {
            id: format!("{}#{}", r.item_id, r.sample_index),
            image: r.image.clone(),
            description: r.description_d.clone(),
            analysis: Some(r.content.clone()),
        })
        .collect()
}

pub fn load_items(path: &Path) -> Result<Vec<CurationItem>, CurationError> {
    read_jsonl(path)
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateRecord>, CurationError> {
    read_jsonl(path)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CurationError> {
    let io = |source| CurationError::Io { path: path.to_path_buf(), source };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(file, "{line}").map_err(io)?;
    }
    file.flush().map_err(io)
}

#[derive(Deserialize)]
struct LogProbLine {
    logprobs: TokenLogProbs,
}

/// Per-record losses from a JSON-lines file of `{"logprobs": [...]}` objects
/// supplied by an external trainer.
pub fn losses_from_file(path: &Path) -> Result<Vec<f64>, CurationError> {
    let lines: Vec<LogProbLine> = read_jsonl(path)?;
    Ok(lines.iter().map(|l| sequence_loss(&l.logprobs)).collect())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CurationError> {
    let file = std::fs::File::open(path).map_err(|source| CurationError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CurationError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CurationError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}
