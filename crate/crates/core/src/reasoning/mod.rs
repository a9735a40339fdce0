//! Question answering: repair the question, answer with evidence, evaluate,
//! and retry with accumulated reflection notes until an answer passes or the
//! attempt budget runs out.

mod evidence;
mod paraphrase;
mod reflection;
mod sections;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evidence::{coe_reason, CoeResponse, ReasoningTrace, MARKERS};
pub use paraphrase::{paraphrase, parse_paraphrase, ParaphrasedQuestion};
pub use reflection::{parse_reflection, reflect, render_notes, ReflectionNote, GENERIC_CAUSE, GENERIC_PLAN};

use crate::backend::{Asked, BackendError, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::scoring::reference_match_reward;
use crate::template::Vars;
use crate::types::{EvaluationMode, RewardFlag, RewardOutcome, RewardSignal};

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("answer unparseable after {attempts} attempts: {reason}")]
    Unparseable { reason: String, attempts: u32 },
    #[error("attempt {0} passed; reflection needs a failed attempt")]
    ReflectOnPass(u32),
    #[error("max_reflections must be at least 1")]
    ZeroBudget,
}

/// How answers are judged: `auto` uses reference matching when references
/// exist and self-assessment otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationPolicy {
    #[default]
    Auto,
    ReferenceMatch,
    SelfAssessment,
}

impl EvaluationPolicy {
    pub fn resolve(self, references: &[String]) -> EvaluationMode {
        match self {
            EvaluationPolicy::Auto if references.is_empty() => EvaluationMode::SelfAssessment,
            EvaluationPolicy::Auto | EvaluationPolicy::ReferenceMatch => EvaluationMode::ReferenceMatch,
            EvaluationPolicy::SelfAssessment => EvaluationMode::SelfAssessment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    /// Maximum answering attempts per sample.
    pub max_reflections: u32,
    pub evaluation_mode: EvaluationPolicy,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self { max_reflections: 3, evaluation_mode: EvaluationPolicy::Auto }
    }
}

/// What the solver needs to know about one question.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub question: &'a str,
    pub choices: &'a [String],
    pub references: &'a [String],
    pub caption_c: &'a str,
}

/// Scores `predicted`. Reference matching compares normalized strings;
/// self-assessment asks the reasoner for a PASS/FAIL verdict.
pub fn evaluate(
    session: &mut Session<'_>,
    image: &ImageInput,
    question: &str,
    caption_c: &str,
    predicted: &str,
    references: &[String],
    mode: EvaluationMode,
) -> Result<RewardSignal, ReasoningError> {
    match mode {
        EvaluationMode::ReferenceMatch => Ok(reference_match_reward(predicted, references)),
        EvaluationMode::SelfAssessment => {
            let vars = Vars::new().set("question", question).set("caption", caption_c).set("answer", predicted);
            let prompt = session.render(PromptKind::SelfAssessment, &vars)?;
            Ok(
                match session.ask_parsed(
                    Role::Reasoner,
                    vec![ChatMessage::user_with_image(prompt, image)],
                    "Reply with exactly PASS or FAIL.",
                    parse_verdict,
                )? {
                    Asked::Parsed(pass) => RewardSignal::self_assessed(pass),
                    Asked::Unparsed { .. } => RewardSignal {
                        outcome: RewardOutcome::Fail,
                        matched_reference: None,
                        mode: EvaluationMode::SelfAssessment,
                        flag: Some(RewardFlag::UnparseableAssessment),
                    },
                },
            )
        }
    }
}

/// `true` for PASS, `false` for FAIL; exactly one of the two words must occur.
pub fn parse_verdict(text: &str) -> Result<bool, String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .map(str::to_ascii_uppercase)
        .collect();
    let pass = words.iter().any(|w| w == "PASS");
    let fail = words.iter().any(|w| w == "FAIL");
    match (pass, fail) {
        (true, false) => Ok(true),
        (false, true) => Ok(false),
        (true, true) => Err("both PASS and FAIL present".into()),
        (false, false) => Err("no PASS or FAIL token".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Resolved,
    Unresolved,
    ParseError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub paraphrase: ParaphrasedQuestion,
    pub traces: Vec<ReasoningTrace>,
    pub notes: Vec<ReflectionNote>,
    pub final_answer: Option<String>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl SolveOutcome {
    pub fn resolved(&self) -> bool {
        self.verdict == Verdict::Resolved
    }

    /// Reward of the final attempt, if any attempt completed.
    pub fn final_reward(&self) -> Option<&RewardSignal> {
        self.traces.last().map(|t| &t.reward)
    }
}

/// Paraphrases once, then answers and evaluates up to `max_reflections`
/// times, reflecting after each failure that leaves budget for a retry.
pub fn solve(
    session: &mut Session<'_>,
    image: &ImageInput,
    problem: &Problem<'_>,
    config: &ReasonerConfig,
) -> Result<SolveOutcome, ReasoningError> {
    if config.max_reflections == 0 {
        return Err(ReasoningError::ZeroBudget);
    }
    let mode = config.evaluation_mode.resolve(problem.references);
    let question = paraphrase(session, problem.question, problem.caption_c)?;
    let mut outcome = SolveOutcome {
        paraphrase: question.clone(),
        traces: Vec::new(),
        notes: Vec::new(),
        final_answer: None,
        verdict: Verdict::Unresolved,
        parse_error: None,
    };
    for attempt in 1..=config.max_reflections {
        let response = match coe_reason(session, &question, image, problem.caption_c, problem.choices, &outcome.notes) {
            Ok(r) => r,
            Err(ReasoningError::Unparseable { reason, attempts }) => {
                outcome.verdict = Verdict::ParseError;
                outcome.parse_error = Some(format!("attempt {attempt}: unparseable after {attempts} replies: {reason}"));
                outcome.final_answer = None;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        };
        let reward = evaluate(
            session,
            image,
            &question.paraphrased,
            problem.caption_c,
            &response.answer,
            problem.references,
            mode,
        )?;
        let passed = reward.is_pass();
        let trace = ReasoningTrace {
            attempt_index: attempt,
            question: question.clone(),
            evidence: response.evidence,
            steps: response.steps,
            predicted: response.answer,
            reward,
        };
        outcome.final_answer = Some(trace.predicted.clone());
        outcome.traces.push(trace);
        if passed {
            outcome.verdict = Verdict::Resolved;
            return Ok(outcome);
        }
        if attempt < config.max_reflections {
            let note = reflect(session, image, problem.caption_c, outcome.traces.last().expect("just pushed"))?;
            outcome.notes.push(note);
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{Backends, Exhaustion, ScriptEntry, ScriptedBackend, ScriptedScenario};
    use crate::image::test_support::blank_image;
    use crate::prompts::PromptSet;

    fn coe(answer: &str) -> String {
        format!("Evidence:\n- fact\nReasoning:\n1. step\nAnswer: {answer}")
    }

    fn scripted(entries: Vec<ScriptEntry>) -> (Arc<ScriptedBackend>, Backends) {
        let b = Arc::new(ScriptedBackend::new(ScriptedScenario::matchers(entries, Exhaustion::RepeatLast)).unwrap());
        (b.clone(), Backends::new().bind_all(b))
    }

    fn base_entries() -> Vec<ScriptEntry> {
        vec![
            ScriptEntry::matching(&["Task: question paraphrase"], "Subject: none\nContext:\nParaphrase: -").for_role(Role::Paraphraser),
            ScriptEntry::matching(&["Task: reflection"], "Cause: overlooked a detail.\nPlan: look closer.").for_role(Role::Reasoner),
        ]
    }

    fn refs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn run(entries: Vec<ScriptEntry>, references: &[String], config: ReasonerConfig) -> SolveOutcome {
        let (_, backends) = scripted(entries);
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let problem = Problem { question: "Is there sugar on her face?", choices: &[], references, caption_c: "A girl eats a donut." };
        solve(&mut s, &blank_image("girl.png"), &problem, &config).unwrap()
    }

    #[test]
    fn fail_reflect_pass() {
        let mut entries = base_entries();
        entries.insert(0, ScriptEntry::matching(&["Task: answer with evidence", "After attempt 1"], coe("yes")));
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], coe("no")));
        let out = run(entries, &refs(&["yes"]), ReasonerConfig::default());
        assert_eq!(out.traces.len(), 2);
        assert_eq!(out.notes.len(), 1);
        assert_eq!(out.final_answer.as_deref(), Some("yes"));
        assert!(out.resolved());
        assert_eq!(out.notes[0].produced_after_attempt, 1);
    }

    #[test]
    fn first_attempt_passes() {
        let mut entries = base_entries();
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], coe("Yes.")));
        let out = run(entries, &refs(&["yes"]), ReasonerConfig::default());
        assert_eq!((out.traces.len(), out.notes.len()), (1, 0));
    }

    #[test]
    fn always_fail_is_bounded() {
        let mut entries = base_entries();
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], coe("no")));
        let out = run(entries, &refs(&["yes"]), ReasonerConfig::default());
        assert_eq!((out.traces.len(), out.notes.len()), (3, 2));
        assert_eq!(out.verdict, Verdict::Unresolved);
        assert_eq!(out.final_answer.as_deref(), Some("no"));
        let idx: Vec<u32> = out.traces.iter().map(|t| t.attempt_index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn notes_accumulate_in_prompts() {
        let mut entries = base_entries();
        entries.insert(0, ScriptEntry::matching(&["Task: answer with evidence", "After attempt 1", "After attempt 2"], coe("yes")));
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], coe("no")));
        let out = run(entries, &refs(&["yes"]), ReasonerConfig::default());
        assert_eq!((out.traces.len(), out.notes.len()), (3, 2));
        assert!(out.resolved());
    }

    #[test]
    fn parse_error_verdict() {
        let mut entries = base_entries();
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], "I think yes."));
        let out = run(entries, &refs(&["yes"]), ReasonerConfig::default());
        assert_eq!(out.verdict, Verdict::ParseError);
        assert!(out.traces.is_empty());
        assert!(out.final_answer.is_none());
    }

    #[test]
    fn self_assessment_mode() {
        let mut entries = base_entries();
        entries.push(ScriptEntry::matching(&["Task: answer with evidence"], coe("no")));
        entries.push(ScriptEntry::matching(&["Task: answer check"], "FAIL"));
        let out = run(entries, &[], ReasonerConfig { max_reflections: 1, ..Default::default() });
        assert_eq!(out.traces.len(), 1);
        assert_eq!(out.traces[0].reward.mode, EvaluationMode::SelfAssessment);
        assert!(!out.traces[0].reward.is_pass());
    }

    #[test]
    fn evaluate_modes() {
        let (_, backends) = scripted(vec![ScriptEntry::matching(&["Task: answer check"], "maybe")]);
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("a.png");
        let r = evaluate(&mut s, &img, "q", "c", "cigarette", &refs(&["cigarette"]), EvaluationMode::ReferenceMatch).unwrap();
        assert!(r.is_pass());
        let r = evaluate(&mut s, &img, "q", "c", "x", &[], EvaluationMode::ReferenceMatch).unwrap();
        assert_eq!(r.flag, Some(RewardFlag::NoReferences));
        let r = evaluate(&mut s, &img, "q", "c", "x", &[], EvaluationMode::SelfAssessment).unwrap();
        assert_eq!(r.flag, Some(RewardFlag::UnparseableAssessment));
        assert_eq!(s.call_count(), 3);
    }

    #[test]
    fn verdict_tokens() {
        assert_eq!(parse_verdict("PASS"), Ok(true));
        assert_eq!(parse_verdict("Verdict: fail."), Ok(false));
        assert!(parse_verdict("PASS or FAIL").is_err());
        assert!(parse_verdict("passing").is_err());
    }

    #[test]
    fn policy_resolution() {
        assert_eq!(EvaluationPolicy::Auto.resolve(&[]), EvaluationMode::SelfAssessment);
        assert_eq!(EvaluationPolicy::Auto.resolve(&refs(&["a"])), EvaluationMode::ReferenceMatch);
        assert_eq!(EvaluationPolicy::SelfAssessment.resolve(&refs(&["a"])), EvaluationMode::SelfAssessment);
    }
}
