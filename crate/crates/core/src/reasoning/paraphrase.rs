//! Rewriting questions whose subject reference is ambiguous, using facts from
//! the detailed caption.

use serde::{Deserialize, Serialize};

use super::sections::{first_line, list_items, split_sections};
use super::ReasoningError;
use crate::backend::{Asked, ChatMessage, Role, Session};
use crate::prompts::PromptKind;
use crate::template::Vars;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphrasedQuestion {
    pub original: String,
    /// Empty when the question was already unambiguous.
    pub subject: String,
    pub context_snippets: Vec<String>,
    pub paraphrased: String,
    /// Set when the model reply could not be parsed and the original
    /// question is used instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl ParaphrasedQuestion {
    /// The question unchanged, as used when there is nothing to repair.
    pub fn unchanged(question: &str) -> Self {
        Self {
            original: question.to_string(),
            subject: String::new(),
            context_snippets: Vec::new(),
            paraphrased: question.to_string(),
            fallback: false,
        }
    }
}

/// One paraphraser call. An unusable reply, after re-asks, falls back to the
/// original question with `fallback` set.
pub fn paraphrase(
    session: &mut Session<'_>,
    question: &str,
    caption_c: &str,
) -> Result<ParaphrasedQuestion, ReasoningError> {
    if question.trim().is_empty() {
        return Err(ReasoningError::EmptyQuestion);
    }
    let prompt = session.render(PromptKind::Paraphrase, &Vars::new().set("question", question).set("caption", caption_c))?;
    let asked = session.ask_parsed(
        Role::Paraphraser,
        vec![ChatMessage::user(prompt)],
        "Reply with 'Subject:', 'Context:' and 'Paraphrase:' sections.",
        |text| parse_paraphrase(question, text),
    )?;
    Ok(match asked {
        Asked::Parsed(p) => p,
        Asked::Unparsed { reason, .. } => {
            session.warn(format!("paraphrase unusable ({reason}); using the original question"));
            ParaphrasedQuestion { fallback: true, ..ParaphrasedQuestion::unchanged(question) }
        }
    })
}

/// Parses a `Subject:` / `Context:` / `Paraphrase:` reply. A subject of
/// `none` means the question needs no repair.
pub fn parse_paraphrase(original: &str, text: &str) -> Result<ParaphrasedQuestion, String> {
    let sections = split_sections(text, &["Subject", "Context", "Paraphrase"])?;
    let subject = first_line(&sections[0]);
    if subject.is_empty() {
        return Err("empty subject".into());
    }
    let no_ambiguity = subject.trim_matches(['"', '.', '\'']).eq_ignore_ascii_case("none");
    if no_ambiguity {
        return Ok(ParaphrasedQuestion::unchanged(original));
    }
    let paraphrased = first_line(&sections[2]);
    if paraphrased.is_empty() {
        return Err("empty paraphrase".into());
    }
    Ok(ParaphrasedQuestion {
        original: original.to_string(),
        subject,
        context_snippets: list_items(&sections[1]),
        paraphrased,
        fallback: false,
    })
}
