//! JSON-lines datasets of image questions.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: line {line}: duplicate sample id '{id}'")]
    DuplicateId { path: PathBuf, line: usize, id: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    YesNo,
    Number,
    Other,
    MultipleChoice,
    DirectAnswer,
    #[default]
    Unspecified,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::YesNo,
        QuestionType::Number,
        QuestionType::Other,
        QuestionType::MultipleChoice,
        QuestionType::DirectAnswer,
        QuestionType::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::YesNo => "yes_no",
            QuestionType::Number => "number",
            QuestionType::Other => "other",
            QuestionType::MultipleChoice => "multiple_choice",
            QuestionType::DirectAnswer => "direct_answer",
            QuestionType::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One question about one image. `image` is relative to the dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    #[serde(alias = "image_path")]
    pub image: String,
    pub question: String,
    #[serde(default)]
    pub question_type: QuestionType,
    /// Accepted answers; repeated entries count separately for consensus
    /// scoring.
    #[serde(default)]
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl Sample {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("field 'id' is empty".into());
        }
        if self.image.trim().is_empty() {
            return Err("field 'image' is empty".into());
        }
        if self.question.trim().is_empty() {
            return Err("field 'question' is empty".into());
        }
        if self.question_type == QuestionType::MultipleChoice && self.choices.as_ref().is_none_or(|c| c.len() < 2) {
            return Err("multiple_choice sample needs at least 2 choices".into());
        }
        Ok(())
    }

    pub fn choices(&self) -> &[String] {
        self.choices.as_deref().unwrap_or_default()
    }
}

/// Reads and validates every non-blank line of `path`.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    parse_dataset(BufReader::new(file), path)
}

pub fn parse_dataset(reader: impl BufRead, path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| DatasetError::Line { path: path.to_path_buf(), line: line_no, message };
        let sample: Sample = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        sample.validate().map_err(at)?;
        if !ids.insert(sample.id.clone()) {
            return Err(DatasetError::DuplicateId { path: path.to_path_buf(), line: line_no, id: sample.id });
        }
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Sample>, DatasetError> {
        parse_dataset(text.as_bytes(), Path::new("d.jsonl"))
    }

    #[test]
    fn loads_lines() {
        let text = (0..10)
            .map(|i| format!(r#"{{"id":"s{i}","image":"a.png","question":"q?","question_type":"yes_no","references":["yes"]}}"#))
            .collect::<Vec<_>>()
            .join("\n");
        let samples = parse(&text).unwrap();
        assert_eq!(samples.len(), 10);
        assert_eq!(samples[3].id, "s3");
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let text = "{\"id\":\"a\",\"image\":\"x.png\",\"question\":\"q\"}\n{\"id\":\"a\",\"image\":\"y.png\",\"question\":\"q\"}";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateId { line: 2, ref id, .. } if id == "a"));
        assert!(err.to_string().contains("'a'"));
    }

    #[test]
    fn multiple_choice_needs_two_choices() {
        let text = r#"{"id":"a","image":"x.png","question":"q","question_type":"multiple_choice","choices":["only"]}"#;
        assert!(matches!(parse(text), Err(DatasetError::Line { line: 1, .. })));
    }

    #[test]
    fn errors_name_line_and_field() {
        let err = parse("\n{\"id\":\"a\",\"question\":\"q\"}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("image"), "{err}");
        assert!(parse("{not json").unwrap_err().to_string().contains("line 1"));
    }
}
