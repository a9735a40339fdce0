use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("validity score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("log-probability at position {index} is {value}, expected <= 0")]
    PositiveLogProb { index: usize, value: f64 },
    #[error("alpha must be at least 1")]
    AlphaZero,
    #[error("gamma must be finite, got {0}")]
    GammaNotFinite(f64),
}

/// A score on the closed unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ValidityScore(f64);

impl ValidityScore {
    pub const ZERO: ValidityScore = ValidityScore(0.0);
    pub const ONE: ValidityScore = ValidityScore(1.0);

    pub fn new(value: f64) -> Result<Self, TypeError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(TypeError::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Strict comparison used by every threshold in the pipeline.
    pub fn exceeds(self, threshold: ValidityScore) -> bool {
        self.0 > threshold.0
    }
}

impl TryFrom<f64> for ValidityScore {
    type Error = TypeError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ValidityScore> for f64 {
    fn from(score: ValidityScore) -> f64 {
        score.0
    }
}

impl fmt::Display for ValidityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hyperparameters for relation weighting and every threshold filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// Influence of a subject's relation count on each relation's weight.
    pub gamma: f64,
    /// Relation count at which the weight is exactly 1.
    pub alpha: u32,
    pub theta_e: ValidityScore,
    pub theta_re: ValidityScore,
    pub tau: ValidityScore,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            alpha: 4,
            theta_e: ValidityScore(0.5),
            theta_re: ValidityScore(0.55),
            tau: ValidityScore(0.6),
        }
    }
}

impl ScoringParams {
    pub const GAMMA_BAND: (f64, f64) = (0.05, 0.2);

    /// Rejects unusable values; a gamma outside the recommended band only warns.
    pub fn validate(&self) -> Result<(), TypeError> {
        if self.alpha == 0 {
            return Err(TypeError::AlphaZero);
        }
        if !self.gamma.is_finite() {
            return Err(TypeError::GammaNotFinite(self.gamma));
        }
        if !self.gamma_in_band() {
            log::warn!(
                "gamma {} outside the recommended band ({}, {})",
                self.gamma,
                Self::GAMMA_BAND.0,
                Self::GAMMA_BAND.1
            );
        }
        Ok(())
    }

    pub fn gamma_in_band(&self) -> bool {
        self.gamma > Self::GAMMA_BAND.0 && self.gamma < Self::GAMMA_BAND.1
    }
}

/// Axis-aligned region in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub label: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn has_area(&self) -> bool {
        self.w > 0 && self.h > 0
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}, {}, {}, {}", self.label, self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub name: String,
    pub region: Option<BoundingBox>,
    pub score_e: ValidityScore,
    pub is_key: bool,
}

impl ScoredEntity {
    pub fn new(name: impl Into<String>, score_e: ValidityScore, theta_e: ValidityScore) -> Self {
        Self {
            name: name.into(),
            region: None,
            score_e,
            is_key: score_e.exceeds(theta_e),
        }
    }
}

/// A (subject, predicate, object) triple with its validity and joint scores.
///
/// Before [`crate::relations::score_relations`] runs, `joint_score` is 0 and
/// `is_key` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRelation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub score_r: ValidityScore,
    pub joint_score: f64,
    pub is_key: bool,
}

impl ScoredRelation {
    pub fn candidate(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        score_r: ValidityScore,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            score_r,
            joint_score: 0.0,
            is_key: false,
        }
    }

    pub fn triple(&self) -> (&str, &str, &str) {
        (&self.subject, &self.predicate, &self.object)
    }

    pub fn sentence(&self) -> String {
        format!("{} {} {}.", self.subject, self.predicate, self.object)
    }
}

/// Per-image knowledge: preliminary description, causal analysis, caption.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBundle {
    pub description_d: String,
    pub analysis_a: String,
    pub caption_c: String,
    /// Set when no key entity was found and `description_d` is empty.
    #[serde(default)]
    pub degenerate: bool,
}

impl KnowledgeBundle {
    pub fn is_complete(&self) -> bool {
        !self.caption_c.trim().is_empty()
            && !self.analysis_a.trim().is_empty()
            && (self.degenerate || !self.description_d.trim().is_empty())
    }
}

/// Natural-log token probabilities of a target sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TokenLogProbs(Vec<f64>);

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self, TypeError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v > 0.0)
        {
            return Err(TypeError::PositiveLogProb { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for TokenLogProbs {
    type Error = TypeError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<TokenLogProbs> for Vec<f64> {
    fn from(lp: TokenLogProbs) -> Vec<f64> {
        lp.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardOutcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    ReferenceMatch,
    SelfAssessment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFlag {
    /// Reference matching was requested with no references.
    NoReferences,
    /// The self-assessment reply never contained PASS or FAIL.
    UnparseableAssessment,
}

/// Binary reward for a predicted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub outcome: RewardOutcome,
    pub matched_reference: Option<String>,
    pub mode: EvaluationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<RewardFlag>,
}

impl RewardSignal {
    pub fn is_pass(&self) -> bool {
        self.outcome == RewardOutcome::Pass
    }

    pub fn self_assessed(pass: bool) -> Self {
        Self {
            outcome: if pass { RewardOutcome::Pass } else { RewardOutcome::Fail },
            matched_reference: None,
            mode: EvaluationMode::SelfAssessment,
            flag: None,
        }
    }
}
