//! Verbal reflection on a failed attempt: why it failed and what to do
//! differently next time.

use serde::{Deserialize, Serialize};

use super::evidence::ReasoningTrace;
use super::sections::split_sections;
use super::ReasoningError;
use crate::backend::{Asked, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::template::Vars;

pub const GENERIC_CAUSE: &str = "the answer was judged incorrect";
pub const GENERIC_PLAN: &str = "re-examine evidence extraction";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionNote {
    pub failure_cause: String,
    pub plan: String,
    pub produced_after_attempt: u32,
    /// Set when the reply was unusable and the generic note was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl ReflectionNote {
    pub fn generic(after_attempt: u32) -> Self {
        Self {
            failure_cause: GENERIC_CAUSE.into(),
            plan: GENERIC_PLAN.into(),
            produced_after_attempt: after_attempt,
            fallback: true,
        }
    }
}

/// Notes as they appear in the answering prompt, oldest first.
pub fn render_notes(notes: &[ReflectionNote]) -> String {
    notes
        .iter()
        .map(|n| format!("- After attempt {}: {} Plan: {}", n.produced_after_attempt, n.failure_cause, n.plan))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a `Cause:` / `Plan:` reply; both must be non-empty.
pub fn parse_reflection(text: &str, after_attempt: u32) -> Result<ReflectionNote, String> {
    let sections = split_sections(text, &["Cause", "Plan"])?;
    let join = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let (cause, plan) = (join(&sections[0]), join(&sections[1]));
    if cause.is_empty() || plan.is_empty() {
        return Err("empty cause or plan".into());
    }
    Ok(ReflectionNote { failure_cause: cause, plan, produced_after_attempt: after_attempt, fallback: false })
}

/// One reasoner call reflecting on `failed`. An unusable reply yields the
/// generic note so the retry loop can continue.
pub fn reflect(
    session: &mut Session<'_>,
    image: &ImageInput,
    caption_c: &str,
    failed: &ReasoningTrace,
) -> Result<ReflectionNote, ReasoningError> {
    if failed.reward.is_pass() {
        return Err(ReasoningError::ReflectOnPass(failed.attempt_index));
    }
    let trajectory = format!("{}\nThis answer was judged incorrect.", failed.response().render());
    let vars = Vars::new()
        .set("question", failed.question.paraphrased.as_str())
        .set("caption", caption_c)
        .set("trajectory", trajectory);
    let prompt = session.render(PromptKind::Reflection, &vars)?;
    let after = failed.attempt_index;
    Ok(
        match session.ask_parsed(
            Role::Reasoner,
            vec![ChatMessage::user_with_image(prompt, image)],
            "Reply with 'Cause:' and 'Plan:' sections.",
            |text| parse_reflection(text, after),
        )? {
            Asked::Parsed(note) => note,
            Asked::Unparsed { reason, .. } => {
                session.warn(format!("reflection after attempt {after} unusable ({reason}); using generic note"));
                ReflectionNote::generic(after)
            }
        },
    )
}
