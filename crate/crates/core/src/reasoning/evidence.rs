//! Evidence-first answering: the model lists facts, reasons over them step
//! by step, then answers.

use serde::{Deserialize, Serialize};

use super::paraphrase::ParaphrasedQuestion;
use super::reflection::{render_notes, ReflectionNote};
use super::sections::{first_line, list_items, split_sections};
use super::ReasoningError;
use crate::backend::{Asked, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::template::Vars;
use crate::types::RewardSignal;

pub const MARKERS: [&str; 3] = ["Evidence", "Reasoning", "Answer"];

/// A parsed evidence / reasoning / answer reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeResponse {
    pub evidence: Vec<String>,
    pub steps: Vec<String>,
    pub answer: String,
}

impl CoeResponse {
    /// Requires all three sections, at least one evidence line, at least one
    /// step and a non-empty answer.
    pub fn parse(text: &str) -> Result<Self, String> {
        let sections = split_sections(text, &MARKERS)?;
        let evidence = list_items(&sections[0]);
        let steps = list_items(&sections[1]);
        let answer = first_line(&sections[2]);
        if evidence.is_empty() {
            return Err("no evidence listed".into());
        }
        if steps.is_empty() {
            return Err("no reasoning steps".into());
        }
        if answer.is_empty() {
            return Err("empty answer".into());
        }
        Ok(Self { evidence, steps, answer })
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn render(&self) -> String {
        let mut out = String::from("Evidence:\n");
        for e in &self.evidence {
            out.push_str(&format!("- {e}\n"));
        }
        out.push_str("Reasoning:\n");
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. {s}\n", i + 1));
        }
        out.push_str(&format!("Answer: {}", self.answer));
        out
    }
}

/// One answering attempt and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub attempt_index: u32,
    pub question: ParaphrasedQuestion,
    pub evidence: Vec<String>,
    pub steps: Vec<String>,
    pub predicted: String,
    pub reward: RewardSignal,
}

impl ReasoningTrace {
    pub fn response(&self) -> CoeResponse {
        CoeResponse { evidence: self.evidence.clone(), steps: self.steps.clone(), answer: self.predicted.clone() }
    }
}

/// Asks the reasoner for an evidence-first answer. Earlier reflection notes
/// are included in the prompt. A reply that stays malformed after re-asks is
/// a [`ReasoningError::Unparseable`].
pub fn coe_reason(
    session: &mut Session<'_>,
    question: &ParaphrasedQuestion,
    image: &ImageInput,
    caption_c: &str,
    choices: &[String],
    reflections: &[ReflectionNote],
) -> Result<CoeResponse, ReasoningError> {
    let vars = Vars::new()
        .set("question", question.paraphrased.as_str())
        .set("caption", caption_c)
        .set("choices", choices.join("; "))
        .set("reflections", render_notes(reflections));
    let prompt = session.render(PromptKind::Coe, &vars)?;
    match session.ask_parsed(
        Role::Reasoner,
        vec![ChatMessage::user_with_image(prompt, image)],
        "Reply with 'Evidence:', 'Reasoning:' and 'Answer:' sections, in that order.",
        CoeResponse::parse,
    )? {
        Asked::Parsed(r) => Ok(r),
        Asked::Unparsed { reason, attempts } => Err(ReasoningError::Unparseable { reason, attempts }),
    }
}
