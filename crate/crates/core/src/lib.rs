//! Visual question answering pipeline built from four cooperating stages:
//!
//! 1. [`relations`] extracts entities and relationships from an image, scores
//!    them, and composes a preliminary description.
//! 2. [`knowledge`] turns that description into a causal analysis and a
//!    detailed caption, and curates teacher-generated training data.
//! 3. [`reasoning`] repairs underspecified questions, answers them with an
//!    evidence-first prompt, and retries with verbal self-reflection.
//! 4. [`harness`] loads datasets, runs batches, computes accuracy and persists
//!    replayable trajectories.
//!
//! All model access goes through [`backend`], which speaks the
//! OpenAI-compatible chat-completions protocol or replays scripted responses.

pub mod backend;
pub mod harness;
pub mod image;
pub mod knowledge;
pub mod pool;
pub mod prompts;
pub mod reasoning;
pub mod relations;
pub mod scoring;
pub mod template;
pub mod types;

pub use scoring::{
    distillation_loss, filter_by_threshold, joint_validity_score, normalize_answer,
    reference_match_reward, relation_weight,
};
pub use types::{
    EvaluationMode, KnowledgeBundle, RewardFlag, RewardOutcome, RewardSignal, ScoredEntity,
    ScoredRelation, ScoringParams, TokenLogProbs, ValidityScore,
};
