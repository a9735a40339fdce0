//! Visual relationship detection: score entities, pick key entities, find and
//! score their relations, keep the key relations and compose the preliminary
//! description.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{parse_score, propose_regions, Asked, BackendError, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::scoring::joint_validity_score;
use crate::template::Vars;
use crate::types::{BoundingBox, ScoredEntity, ScoredRelation, ScoringParams, ValidityScore};

#[derive(Debug, Error)]
pub enum VrdError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{step}: unusable model output after re-asks ({reason})")]
    Unparseable { step: &'static str, reason: String },
    /// Recoverable: the caller may continue with an empty description.
    #[error("no key entities among {} extracted", entities.len())]
    NoKeyEntities { entities: Vec<ScoredEntity> },
    #[error("no key entities supplied")]
    EmptyKeyEntities,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// One call returning `name: score` lines.
    #[default]
    Batched,
    /// One call listing names, then one judging call per entity.
    PerEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entities: Vec<ScoredEntity>,
    /// Every scored relation; `is_key` marks the selected ones.
    pub relations: Vec<ScoredRelation>,
    pub regions: Vec<BoundingBox>,
    pub description_d: String,
}

impl ExtractionResult {
    pub fn key_entities(&self) -> impl Iterator<Item = &ScoredEntity> {
        self.entities.iter().filter(|e| e.is_key)
    }

    pub fn key_relations(&self) -> impl Iterator<Item = &ScoredRelation> {
        self.relations.iter().filter(|r| r.is_key)
    }
}

/// Runs the whole stage for one image.
pub fn extract(
    session: &mut Session<'_>,
    image: &ImageInput,
    mode: ExtractionMode,
    params: &ScoringParams,
) -> Result<ExtractionResult, VrdError> {
    let mut entities = extract_entities(session, image, mode, params.theta_e)?;
    let key_names: Vec<String> = entities.iter().filter(|e| e.is_key).map(|e| e.name.clone()).collect();
    if key_names.is_empty() {
        return Err(VrdError::NoKeyEntities { entities });
    }
    let regions = propose_regions(session, image, &key_names)?;
    for e in entities.iter_mut().filter(|e| e.is_key) {
        e.region = regions.iter().find(|b| b.label == e.name).cloned();
    }
    let key: Vec<ScoredEntity> = entities.iter().filter(|e| e.is_key).cloned().collect();
    let candidates = detect_relations(session, image, &key, &regions)?;
    let relations = score_relations(candidates, &key, params);
    let selected = select_key_relations(relations.clone(), &key, params);
    let description_d = compose_description(&key, &selected)?;
    Ok(ExtractionResult { entities, relations, regions, description_d })
}

pub fn extract_entities(
    session: &mut Session<'_>,
    image: &ImageInput,
    mode: ExtractionMode,
    theta_e: ValidityScore,
) -> Result<Vec<ScoredEntity>, VrdError> {
    let scored = match mode {
        ExtractionMode::Batched => {
            let prompt = session.render(PromptKind::EntityExtraction, &Vars::new())?;
            let asked = session.ask_parsed(
                Role::VrdModel,
                vec![ChatMessage::user_with_image(prompt, image)],
                "Reply with one `name: score` line per entity, scores between 0 and 1.",
                parse_entity_scores,
            )?;
            expect_parsed(asked, "entity extraction")?
        }
        ExtractionMode::PerEntity => {
            let prompt = session.render(PromptKind::EntityListing, &Vars::new())?;
            let asked = session.ask_parsed(
                Role::VrdModel,
                vec![ChatMessage::user_with_image(prompt, image)],
                "Reply with one entity name per line.",
                parse_name_list,
            )?;
            let names = expect_parsed(asked, "entity listing")?;
            let mut scored = Vec::with_capacity(names.len());
            for name in names {
                let prompt = session.render(PromptKind::EntityJudge, &Vars::new().set("entity", name.as_str()))?;
                let score = judge(session, image, prompt, "entity judging")?;
                scored.push((name, score));
            }
            scored
        }
    };
    Ok(scored.into_iter().map(|(name, s)| ScoredEntity::new(name, s, theta_e)).collect())
}

/// Parses `name: score` lines. Blank lines are skipped; a repeated name
/// keeps its highest score at its first position.
pub fn parse_entity_scores(text: &str) -> Result<Vec<(String, ValidityScore)>, String> {
    let mut out: Vec<(String, ValidityScore)> = Vec::new();
    for line in text.lines().map(strip_list_marker).filter(|l| !l.is_empty()) {
        let (name, score) = line
            .rsplit_once(':')
            .ok_or_else(|| format!("line {line:?} is not `name: score`"))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(format!("line {line:?} has no entity name"));
        }
        let score = parse_score(score).map_err(|e| format!("line {line:?}: {e}"))?;
        match out.iter_mut().find(|(n, _)| n.eq_ignore_ascii_case(name)) {
            Some(existing) if score > existing.1 => existing.1 = score,
            Some(_) => {}
            None => out.push((name.to_string(), score)),
        }
    }
    if out.is_empty() {
        return Err("no entities listed".into());
    }
    Ok(out)
}

fn parse_name_list(text: &str) -> Result<Vec<String>, String> {
    let mut out: Vec<String> = Vec::new();
    for name in text.lines().map(strip_list_marker).filter(|l| !l.is_empty()) {
        if !out.iter().any(|n| n.eq_ignore_ascii_case(name)) {
            out.push(name.to_string());
        }
    }
    if out.is_empty() {
        return Err("no entities listed".into());
    }
    Ok(out)
}

/// Candidate relations for each key entity, scored by the relation judge and
/// deduplicated. `joint_score` is not yet computed.
pub fn detect_relations(
    session: &mut Session<'_>,
    image: &ImageInput,
    key_entities: &[ScoredEntity],
    regions: &[BoundingBox],
) -> Result<Vec<ScoredRelation>, VrdError> {
    if key_entities.is_empty() {
        return Err(VrdError::EmptyKeyEntities);
    }
    let entity_list = key_entities.iter().map(|e| e.name.as_str()).collect::<Vec<_>>().join(", ");
    let region_list = if regions.is_empty() {
        "(none)".to_string()
    } else {
        regions.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("\n")
    };
    let mut candidates = Vec::new();
    for subject in key_entities {
        let vars = Vars::new()
            .set("subject", subject.name.as_str())
            .set("entity_list", entity_list.as_str())
            .set("region_list", region_list.as_str());
        let prompt = session.render(PromptKind::RelationDetection, &vars)?;
        let asked = session.ask_parsed(
            Role::VrdModel,
            vec![ChatMessage::user_with_image(prompt, image)],
            "Reply with one predicate per line, or `none`.",
            parse_predicates,
        )?;
        let predicates = expect_parsed(asked, "relation detection")?;
        if predicates.is_empty() {
            continue;
        }

        let vars = Vars::new()
            .set("subject", subject.name.as_str())
            .set("predicates", predicates.join("\n"))
            .set("region_list", region_list.as_str());
        let prompt = session.render(PromptKind::TargetResolution, &vars)?;
        let asked = session.ask_parsed(
            Role::VrdModel,
            vec![ChatMessage::user_with_image(prompt, image)],
            "Reply with one `predicate: target` line per predicate.",
            parse_targets,
        )?;
        let targets = expect_parsed(asked, "target resolution")?;

        for predicate in &predicates {
            let Some((_, object)) = targets.iter().find(|(p, _)| p.eq_ignore_ascii_case(predicate)) else {
                session.warn(format!("{}: no target resolved for '{} {}'", image.reference, subject.name, predicate));
                continue;
            };
            let relation = format!("{} {} {}", subject.name, predicate, object);
            let vars = Vars::new().set("subject", subject.name.as_str()).set("relation", relation);
            let prompt = session.render(PromptKind::RelationJudge, &vars)?;
            let score = judge(session, image, prompt, "relation judging")?;
            candidates.push(ScoredRelation::candidate(subject.name.as_str(), predicate.as_str(), object.as_str(), score));
        }
    }
    Ok(dedup_relations(candidates))
}

fn parse_predicates(text: &str) -> Result<Vec<String>, String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines().map(strip_list_marker).filter(|l| !l.is_empty()) {
        if line.eq_ignore_ascii_case("none") {
            continue;
        }
        for p in line.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            if p.contains(':') {
                return Err(format!("predicate {p:?} looks like a key-value line"));
            }
            if !out.iter().any(|x| x.eq_ignore_ascii_case(p)) {
                out.push(p.to_string());
            }
        }
    }
    Ok(out)
}

fn parse_targets(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for line in text.lines().map(strip_list_marker).filter(|l| !l.is_empty()) {
        for part in line.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (p, t) = part
                .rsplit_once(':')
                .ok_or_else(|| format!("line {part:?} is not `predicate: target`"))?;
            let (p, t) = (p.trim(), t.trim());
            if p.is_empty() || t.is_empty() {
                return Err(format!("line {part:?} is missing a predicate or target"));
            }
            out.push((p.to_string(), t.to_string()));
        }
    }
    if out.is_empty() {
        return Err("no targets given".into());
    }
    Ok(out)
}

/// Identical (subject, predicate, object) triples collapse to one, keeping
/// the highest relation score at the first occurrence's position.
pub fn dedup_relations(relations: Vec<ScoredRelation>) -> Vec<ScoredRelation> {
    let mut out: Vec<ScoredRelation> = Vec::with_capacity(relations.len());
    for r in relations {
        match out.iter_mut().find(|x| x.triple() == r.triple()) {
            Some(existing) => {
                if r.score_r > existing.score_r {
                    existing.score_r = r.score_r;
                }
            }
            None => out.push(r),
        }
    }
    out
}

/// Computes the joint score of every relation. The relation count used for
/// weighting is the number of relations sharing the subject.
pub fn score_relations(
    relations: Vec<ScoredRelation>,
    key_entities: &[ScoredEntity],
    params: &ScoringParams,
) -> Vec<ScoredRelation> {
    let mut per_subject: HashMap<&str, usize> = HashMap::new();
    for r in &relations {
        *per_subject.entry(r.subject.as_str()).or_default() += 1;
    }
    let counts: HashMap<String, usize> = per_subject.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    relations
        .into_iter()
        .map(|mut r| {
            let subject = key_entities.iter().find(|e| e.name == r.subject);
            r.joint_score = match subject {
                Some(e) if e.is_key => joint_validity_score(e.score_e, r.score_r, counts[&r.subject], params),
                _ => 0.0,
            };
            r.is_key = subject.is_some_and(|e| e.is_key) && r.joint_score > params.theta_re.value();
            r
        })
        .collect()
}

/// Key relations only, grouped by subject in first-seen order and sorted by
/// joint score (descending) within each subject.
pub fn select_key_relations(
    relations: Vec<ScoredRelation>,
    key_entities: &[ScoredEntity],
    params: &ScoringParams,
) -> Vec<ScoredRelation> {
    let scored = score_relations(relations, key_entities, params);
    let mut subjects: Vec<String> = Vec::new();
    for r in &scored {
        if !subjects.contains(&r.subject) {
            subjects.push(r.subject.clone());
        }
    }
    let mut out = Vec::new();
    for s in subjects {
        let mut group: Vec<ScoredRelation> = scored.iter().filter(|r| r.subject == s && r.is_key).cloned().collect();
        group.sort_by(|a, b| b.joint_score.total_cmp(&a.joint_score));
        out.extend(group);
    }
    out
}

/// Deterministic preliminary description: key entities by descending entity
/// score, each followed by its key relations by descending joint score.
pub fn compose_description(
    key_entities: &[ScoredEntity],
    key_relations: &[ScoredRelation],
) -> Result<String, VrdError> {
    if key_entities.is_empty() {
        return Err(VrdError::EmptyKeyEntities);
    }
    let mut entities: Vec<&ScoredEntity> = key_entities.iter().collect();
    entities.sort_by(|a, b| b.score_e.value().total_cmp(&a.score_e.value()));
    let mut sentences = Vec::new();
    for e in entities {
        let mut rels: Vec<&ScoredRelation> = key_relations.iter().filter(|r| r.subject == e.name).collect();
        if rels.is_empty() {
            sentences.push(format!("The image contains {}.", e.name));
            continue;
        }
        rels.sort_by(|a, b| b.joint_score.total_cmp(&a.joint_score));
        sentences.extend(rels.iter().map(|r| r.sentence()));
    }
    Ok(sentences.join(" "))
}

fn judge(session: &mut Session<'_>, image: &ImageInput, prompt: String, step: &'static str) -> Result<ValidityScore, VrdError> {
    let asked = session.ask_parsed(
        Role::VrdModel,
        vec![ChatMessage::user_with_image(prompt, image)],
        "Reply with a single number between 0 and 1.",
        |t| parse_score(t).map_err(|e| e.to_string()),
    )?;
    expect_parsed(asked, step)
}

fn expect_parsed<T>(asked: Asked<T>, step: &'static str) -> Result<T, VrdError> {
    match asked {
        Asked::Parsed(v) => Ok(v),
        Asked::Unparsed { reason, .. } => Err(VrdError::Unparseable { step, reason }),
    }
}

pub(crate) fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    t
}
