use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::types::ValidityScore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreParseError {
    #[error("no number in model output {0:?}")]
    NoNumber(String),
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?(?:\d+(?:\.\d+)?|\.\d+)").expect("valid regex"));

/// Reads the first number in `text` as a validity score.
///
/// "Score: 0.85", "0.9/1.0" and "1" all parse; the first number must lie in
/// [0, 1].
pub fn parse_score(text: &str) -> Result<ValidityScore, ScoreParseError> {
    let m = NUMBER
        .find(text)
        .ok_or_else(|| ScoreParseError::NoNumber(text.chars().take(80).collect()))?;
    let value: f64 = m
        .as_str()
        .parse()
        .map_err(|_| ScoreParseError::NoNumber(m.as_str().to_string()))?;
    ValidityScore::new(value).map_err(|_| ScoreParseError::OutOfRange(value))
}
