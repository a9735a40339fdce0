//! Knowledge enrichment: causal analysis and detailed captions at inference
//! time, and curation of teacher-generated training data.

pub mod curation;

use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::template::Vars;
use crate::types::KnowledgeBundle;

pub use curation::{
    curate, emit_training_records, items_from_retained, CandidateKind, CandidateRecord, CurationConfig,
    CurationError, CurationItem, CurationOutcome, ItemFailure, TrainingRecord,
};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("analysis requires a preliminary description unless the sample is degenerate")]
    MissingDescription,
    #[error("caption requires a non-empty analysis")]
    MissingAnalysis,
}

/// Causal analysis of the description. With `degenerate` set and an empty
/// description, the description section is left out of the prompt.
pub fn analyze_causal(
    session: &mut Session<'_>,
    image: &ImageInput,
    description_d: &str,
    degenerate: bool,
) -> Result<String, KnowledgeError> {
    if description_d.trim().is_empty() && !degenerate {
        return Err(KnowledgeError::MissingDescription);
    }
    let prompt = session.render(PromptKind::Analysis, &Vars::new().set("description", description_d))?;
    Ok(session.complete_text(Role::Analyzer, vec![ChatMessage::user_with_image(prompt, image)])?)
}

/// Detailed caption. Key entities missing from the caption are recorded as
/// session warnings; the caption is still returned.
pub fn enrich_caption(
    session: &mut Session<'_>,
    image: &ImageInput,
    description_d: &str,
    analysis_a: &str,
    key_entities: &[String],
) -> Result<String, KnowledgeError> {
    if analysis_a.trim().is_empty() {
        return Err(KnowledgeError::MissingAnalysis);
    }
    let vars = Vars::new().set("description", description_d).set("analysis", analysis_a);
    let prompt = session.render(PromptKind::Caption, &vars)?;
    let caption = session.complete_text(Role::Captioner, vec![ChatMessage::user_with_image(prompt, image)])?;
    let lowered = caption.to_lowercase();
    for name in key_entities {
        if !lowered.contains(&name.to_lowercase()) {
            session.warn(format!("{}: caption does not mention key entity '{}'", image.reference, name));
        }
    }
    Ok(caption)
}

/// Analysis followed by caption.
pub fn build_bundle(
    session: &mut Session<'_>,
    image: &ImageInput,
    description_d: &str,
    key_entities: &[String],
    degenerate: bool,
) -> Result<KnowledgeBundle, KnowledgeError> {
    let analysis_a = analyze_causal(session, image, description_d, degenerate)?;
    let caption_c = enrich_caption(session, image, description_d, &analysis_a, key_entities)?;
    Ok(KnowledgeBundle { description_d: description_d.to_string(), analysis_a, caption_c, degenerate })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{Backends, Exhaustion, ScriptEntry, ScriptedBackend, ScriptedScenario};
    use crate::image::test_support::blank_image;
    use crate::prompts::PromptSet;

    fn backends() -> (Arc<ScriptedBackend>, Backends) {
        let b = Arc::new(
            ScriptedBackend::new(ScriptedScenario::matchers(
                vec![
                    ScriptEntry::matching(&["Task: causal analysis", "squatting at train door"], "The man may disembark at the next station.")
                        .for_role(Role::Analyzer),
                    ScriptEntry::matching(&["Task: causal analysis"], "Nothing specific can be inferred.").for_role(Role::Analyzer),
                    ScriptEntry::matching(&["Task: detailed caption", "disembark"], "A man squats at the train door, ready to get off in the cold weather.")
                        .for_role(Role::Captioner),
                    ScriptEntry::matching(&["Task: detailed caption"], "A quiet scene.").for_role(Role::Captioner),
                ],
                Exhaustion::Error,
            ))
            .unwrap(),
        );
        (b.clone(), Backends::new().bind_all(b))
    }

    #[test]
    fn analysis_and_caption() {
        let (_, backends) = backends();
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("train.png");
        let keys = vec!["man".to_string(), "train door".to_string()];
        let bundle = build_bundle(&mut s, &img, "man squatting at train door.", &keys, false).unwrap();
        assert!(bundle.analysis_a.contains("disembark at the next station"));
        assert!(bundle.caption_c.contains("cold weather"));
        assert!(bundle.is_complete());
        assert!(s.warnings().is_empty());

        let mut s2 = Session::new(&backends, &prompts);
        let again = build_bundle(&mut s2, &img, "man squatting at train door.", &keys, false).unwrap();
        assert_eq!(again, bundle);
    }

    #[test]
    fn degenerate_prompt_omits_description() {
        let (_, backends) = backends();
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("blank.png");
        assert!(matches!(analyze_causal(&mut s, &img, "", false), Err(KnowledgeError::MissingDescription)));
        let a = analyze_causal(&mut s, &img, "", true).unwrap();
        assert_eq!(a, "Nothing specific can be inferred.");
        let rendered = prompts.render(PromptKind::Analysis, &Vars::new().set("description", "")).unwrap();
        assert!(!rendered.contains("Preliminary description"));
    }

    #[test]
    fn missing_entity_is_a_warning() {
        let (_, backends) = backends();
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("x.png");
        let c = enrich_caption(&mut s, &img, "dog near pole.", "calm", &["dog".to_string()]).unwrap();
        assert_eq!(c, "A quiet scene.");
        assert_eq!(s.warnings().len(), 1);
        assert!(matches!(enrich_caption(&mut s, &img, "d", " ", &[]), Err(KnowledgeError::MissingAnalysis)));
    }
}
