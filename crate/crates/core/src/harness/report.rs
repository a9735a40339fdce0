//! Accuracy reports computed from trajectory records.
//!
//! Per-sample scores are multiples of one third in both metric modes, so
//! sums are kept as integer counts of thirds and only formatted at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dataset::QuestionType;
use super::trajectory::{SampleStatus, TrajectoryRecord};
use super::HarnessError;
use crate::scoring::count_matching_references;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// 1 if the final answer passed evaluation, else 0.
    #[default]
    Exact,
    /// min(matching references / 3, 1).
    Consensus,
}

impl MetricMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricMode::Exact => "exact",
            MetricMode::Consensus => "consensus",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub count: usize,
    /// Sum of per-sample scores in thirds.
    pub score_thirds: u64,
    /// Percentage with one decimal; absent when `count` is zero.
    pub accuracy: Option<String>,
}

impl Tally {
    fn add(&mut self, thirds: u64) {
        self.count += 1;
        self.score_thirds += thirds;
    }

    fn finish(&mut self) {
        self.accuracy = (self.count > 0).then(|| format_percent(self.score_thirds, 3 * self.count as u64));
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub metric: MetricMode,
    pub overall: Tally,
    /// Only question types that occur in the records.
    pub per_type: BTreeMap<QuestionType, Tally>,
    pub unresolved: usize,
    pub stage_failures: usize,
    /// Mean number of reflection notes per sample that produced at least one
    /// answer, two decimals.
    pub mean_reflection_depth: Option<String>,
}

/// Score of one record in thirds.
pub fn sample_score_thirds(record: &TrajectoryRecord, metric: MetricMode) -> Result<u64, HarnessError> {
    match metric {
        MetricMode::Exact => Ok(if record.reward.as_ref().is_some_and(|r| r.is_pass()) { 3 } else { 0 }),
        MetricMode::Consensus => {
            if record.references.is_empty() {
                return Err(HarnessError::ConsensusNeedsReferences { sample_id: record.sample_id.clone() });
            }
            Ok(match &record.final_answer {
                Some(answer) => count_matching_references(answer, &record.references).min(3) as u64,
                None => 0,
            })
        }
    }
}

pub fn accuracy(records: &[TrajectoryRecord], metric: MetricMode) -> Result<RunReport, HarnessError> {
    let mut report = RunReport { metric, ..RunReport::default() };
    let (mut depth_sum, mut depth_count) = (0u64, 0u64);
    for record in records {
        let thirds = sample_score_thirds(record, metric)?;
        report.overall.add(thirds);
        report.per_type.entry(record.question_type).or_default().add(thirds);
        match record.status {
            SampleStatus::Unresolved => report.unresolved += 1,
            SampleStatus::Failed => report.stage_failures += 1,
            SampleStatus::Resolved => {}
        }
        if !record.traces.is_empty() {
            depth_sum += record.notes.len() as u64;
            depth_count += 1;
        }
    }
    report.overall.finish();
    report.per_type.values_mut().for_each(Tally::finish);
    report.mean_reflection_depth = (depth_count > 0).then(|| format_fixed(depth_sum, depth_count, 2));
    Ok(report)
}

/// `100 * num / den` with one decimal, rounded half away from zero.
pub fn format_percent(num: u64, den: u64) -> String {
    format_fixed(num * 100, den, 1)
}

/// `num / den` with `decimals` places, rounded half away from zero, using
/// integer arithmetic only.
pub fn format_fixed(num: u64, den: u64, decimals: u32) -> String {
    assert!(den > 0, "denominator must be positive");
    let scale = 10u128.pow(decimals);
    let scaled = (2 * num as u128 * scale + den as u128) / (2 * den as u128);
    if decimals == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
}

/// Plain-text table: overall first, then each question type present.
pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "metric: {}", report.metric.as_str());
    let _ = writeln!(out, "{:<16} {:>6} {:>9}", "type", "count", "accuracy");
    let row = |out: &mut String, name: &str, t: &Tally| {
        let _ = writeln!(out, "{:<16} {:>6} {:>9}", name, t.count, t.accuracy.as_deref().unwrap_or("-"));
    };
    row(&mut out, "overall", &report.overall);
    for (ty, t) in &report.per_type {
        row(&mut out, ty.as_str(), t);
    }
    let _ = writeln!(out, "unresolved: {}", report.unresolved);
    let _ = writeln!(out, "stage failures: {}", report.stage_failures);
    let _ = writeln!(out, "mean reflection depth: {}", report.mean_reflection_depth.as_deref().unwrap_or("-"));
    out
}
