//! The prompt set used by every stage, loaded from a directory with built-in
//! fallbacks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::template::{Template, TemplateError, Vars};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("reading prompt file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptKind {
    EntityExtraction,
    EntityListing,
    EntityJudge,
    RelationDetection,
    TargetResolution,
    RelationJudge,
    Analysis,
    Caption,
    Paraphrase,
    Coe,
    SelfAssessment,
    Reflection,
    TeacherAnalysis,
    TeacherCaption,
    JudgeAnalysis,
    JudgeCaption,
    TrainAnalysis,
    TrainCaption,
    Grounding,
}

impl PromptKind {
    pub const ALL: [PromptKind; 19] = [
        PromptKind::EntityExtraction,
        PromptKind::EntityListing,
        PromptKind::EntityJudge,
        PromptKind::RelationDetection,
        PromptKind::TargetResolution,
        PromptKind::RelationJudge,
        PromptKind::Analysis,
        PromptKind::Caption,
        PromptKind::Paraphrase,
        PromptKind::Coe,
        PromptKind::SelfAssessment,
        PromptKind::Reflection,
        PromptKind::TeacherAnalysis,
        PromptKind::TeacherCaption,
        PromptKind::JudgeAnalysis,
        PromptKind::JudgeCaption,
        PromptKind::TrainAnalysis,
        PromptKind::TrainCaption,
        PromptKind::Grounding,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            PromptKind::EntityExtraction => "entity_extraction",
            PromptKind::EntityListing => "entity_listing",
            PromptKind::EntityJudge => "entity_judge",
            PromptKind::RelationDetection => "relation_detection",
            PromptKind::TargetResolution => "target_resolution",
            PromptKind::RelationJudge => "relation_judge",
            PromptKind::Analysis => "analysis",
            PromptKind::Caption => "caption",
            PromptKind::Paraphrase => "paraphrase",
            PromptKind::Coe => "coe",
            PromptKind::SelfAssessment => "self_assessment",
            PromptKind::Reflection => "reflection",
            PromptKind::TeacherAnalysis => "teacher_analysis",
            PromptKind::TeacherCaption => "teacher_caption",
            PromptKind::JudgeAnalysis => "judge_analysis",
            PromptKind::JudgeCaption => "judge_caption",
            PromptKind::TrainAnalysis => "train_analysis",
            PromptKind::TrainCaption => "train_caption",
            PromptKind::Grounding => "grounding",
        }
    }

    /// Placeholders a replacement template must still contain.
    pub fn required(self) -> &'static [&'static str] {
        match self {
            PromptKind::EntityExtraction | PromptKind::EntityListing => &[],
            PromptKind::EntityJudge => &["entity"],
            PromptKind::RelationDetection => &["subject", "entity_list", "region_list"],
            PromptKind::TargetResolution => &["subject", "predicates", "region_list"],
            PromptKind::RelationJudge => &["subject", "relation"],
            PromptKind::Analysis | PromptKind::TeacherAnalysis => &["description"],
            PromptKind::Caption | PromptKind::TeacherCaption => &["description", "analysis"],
            PromptKind::Paraphrase => &["question", "caption"],
            PromptKind::Coe => &["question", "caption", "reflections"],
            PromptKind::SelfAssessment => &["question", "caption", "answer"],
            PromptKind::Reflection => &["question", "caption", "trajectory"],
            PromptKind::JudgeAnalysis => &["description", "candidate"],
            PromptKind::JudgeCaption => &["description", "analysis", "candidate"],
            PromptKind::TrainAnalysis => &["image_ref", "description"],
            PromptKind::TrainCaption => &["image_ref", "description", "analysis"],
            PromptKind::Grounding => &["entity_list"],
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptKind::EntityExtraction => include_str!("../prompts/entity_extraction.txt"),
            PromptKind::EntityListing => include_str!("../prompts/entity_listing.txt"),
            PromptKind::EntityJudge => include_str!("../prompts/entity_judge.txt"),
            PromptKind::RelationDetection => include_str!("../prompts/relation_detection.txt"),
            PromptKind::TargetResolution => include_str!("../prompts/target_resolution.txt"),
            PromptKind::RelationJudge => include_str!("../prompts/relation_judge.txt"),
            PromptKind::Analysis => include_str!("../prompts/analysis.txt"),
            PromptKind::Caption => include_str!("../prompts/caption.txt"),
            PromptKind::Paraphrase => include_str!("../prompts/paraphrase.txt"),
            PromptKind::Coe => include_str!("../prompts/coe.txt"),
            PromptKind::SelfAssessment => include_str!("../prompts/self_assessment.txt"),
            PromptKind::Reflection => include_str!("../prompts/reflection.txt"),
            PromptKind::TeacherAnalysis => include_str!("../prompts/teacher_analysis.txt"),
            PromptKind::TeacherCaption => include_str!("../prompts/teacher_caption.txt"),
            PromptKind::JudgeAnalysis => include_str!("../prompts/judge_analysis.txt"),
            PromptKind::JudgeCaption => include_str!("../prompts/judge_caption.txt"),
            PromptKind::TrainAnalysis => include_str!("../prompts/train_analysis.txt"),
            PromptKind::TrainCaption => include_str!("../prompts/train_caption.txt"),
            PromptKind::Grounding => include_str!("../prompts/grounding.txt"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<PromptKind, Template>,
}

impl PromptSet {
    pub fn builtin() -> Self {
        let templates = PromptKind::ALL
            .iter()
            .map(|&kind| {
                let t = Template::parse(kind.file_stem(), kind.builtin())
                    .expect("built-in prompt parses");
                (kind, t)
            })
            .collect();
        Self { templates }
    }

    /// Loads `<dir>/<stem>.txt` for each prompt, falling back to the built-in
    /// text for files that are absent.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{}.txt", kind.file_stem()));
            if !path.exists() {
                continue;
            }
            let source = std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path: path.clone(), source })?;
            set.replace(kind, &source)?;
        }
        Ok(set)
    }

    pub fn replace(&mut self, kind: PromptKind, source: &str) -> Result<(), PromptError> {
        let template = Template::parse(kind.file_stem(), source)?;
        template.require(kind.required())?;
        self.templates.insert(kind, template);
        Ok(())
    }

    pub fn get(&self, kind: PromptKind) -> &Template {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: PromptKind, vars: &Vars) -> Result<String, TemplateError> {
        self.get(kind).render(vars)
    }

    /// Concatenated template sources, used to fingerprint a configuration.
    pub fn digest_source(&self) -> String {
        let mut out = String::new();
        for (kind, t) in &self.templates {
            out.push_str(kind.file_stem());
            out.push('\0');
            out.push_str(&format!("{:?}", t));
            out.push('\0');
        }
        out
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_carry_required_placeholders() {
        let set = PromptSet::builtin();
        for kind in PromptKind::ALL {
            set.get(kind).require(kind.required()).unwrap();
        }
    }

    #[test]
    fn directory_override_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("coe.txt"), "Q={{question}} C={{caption}} R={{reflections}}").unwrap();
        let set = PromptSet::load(dir.path()).unwrap();
        let out = set
            .render(
                PromptKind::Coe,
                &Vars::new().set("question", "q").set("caption", "c").set("reflections", ""),
            )
            .unwrap();
        assert_eq!(out, "Q=q C=c R=");

        std::fs::write(dir.path().join("relation_detection.txt"), "{{subject}} only").unwrap();
        let err = PromptSet::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("entity_list"));
    }
}
