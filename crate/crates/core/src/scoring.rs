//! Pure scoring math: relation weighting, joint validity, threshold
//! filtering, distillation loss, answer normalization and reward mapping.

use crate::types::{
    EvaluationMode, RewardFlag, RewardOutcome, RewardSignal, ScoringParams, TokenLogProbs,
    TypeError, ValidityScore,
};

/// Weight applied to each of a subject's relations given how many it holds.
///
/// `1 + gamma * (alpha - n)`, clamped below at 0.
pub fn relation_weight(n_relations: usize, params: &ScoringParams) -> f64 {
    let raw = 1.0 + params.gamma * (f64::from(params.alpha) - n_relations as f64);
    raw.max(0.0)
}

/// Joint entity-relation validity: `score_e * weight(n) * score_r`.
pub fn joint_validity_score(
    score_e: ValidityScore,
    score_r: ValidityScore,
    n_relations: usize,
    params: &ScoringParams,
) -> f64 {
    score_e.value() * relation_weight(n_relations, params) * score_r.value()
}

/// Keeps items whose score is strictly greater than `tau`, in input order.
pub fn filter_by_threshold<T, I>(candidates: I, tau: ValidityScore) -> Vec<T>
where
    I: IntoIterator<Item = (T, ValidityScore)>,
{
    candidates
        .into_iter()
        .filter_map(|(item, score)| score.exceeds(tau).then_some(item))
        .collect()
}

/// Negative log-likelihood of a target sequence from its token log-probabilities.
pub fn distillation_loss(logprobs: &[f64]) -> Result<f64, TypeError> {
    let checked = TokenLogProbs::new(logprobs.to_vec())?;
    Ok(sequence_loss(&checked))
}

pub fn sequence_loss(logprobs: &TokenLogProbs) -> f64 {
    0.0 - logprobs.values().iter().sum::<f64>()
}

const TERMINAL_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':'];
const ARTICLES: &[&str] = &["a", "an", "the"];

/// Canonical answer form used for exact matching.
///
/// Lowercases, collapses whitespace, drops trailing punctuation and leading
/// articles. A lone article such as the choice letter "A" is kept.
pub fn normalize_answer(raw: &str) -> String {
    let mut current = raw.to_string();
    loop {
        let next = normalize_pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn normalize_pass(s: &str) -> String {
    let lowered = s.to_lowercase();
    let joined = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let stripped = joined.trim_end_matches(TERMINAL_PUNCTUATION).trim_end();
    let mut tokens: Vec<&str> = stripped.split_whitespace().collect();
    while tokens.len() > 1 && ARTICLES.contains(&tokens[0]) {
        tokens.remove(0);
    }
    tokens.join(" ")
}

/// Exact-match reward against a list of reference answers.
pub fn reference_match_reward(predicted: &str, references: &[String]) -> RewardSignal {
    if references.is_empty() {
        return RewardSignal {
            outcome: RewardOutcome::Fail,
            matched_reference: None,
            mode: EvaluationMode::ReferenceMatch,
            flag: Some(RewardFlag::NoReferences),
        };
    }
    let target = normalize_answer(predicted);
    let matched = references
        .iter()
        .find(|r| normalize_answer(r) == target)
        .cloned();
    RewardSignal {
        outcome: if matched.is_some() { RewardOutcome::Pass } else { RewardOutcome::Fail },
        matched_reference: matched,
        mode: EvaluationMode::ReferenceMatch,
        flag: None,
    }
}

/// Number of references equal to the prediction after normalization.
pub fn count_matching_references(predicted: &str, references: &[String]) -> usize {
    let target = normalize_answer(predicted);
    references
        .iter()
        .filter(|r| normalize_answer(r) == target)
        .count()
}
