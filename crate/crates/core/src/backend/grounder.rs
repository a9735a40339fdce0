//! Region proposals for named entities.

use std::collections::BTreeMap;
use std::path::Path;

use super::{BackendError, ChatMessage, Role, Session};
use crate::image::ImageInput;
use crate::prompts::PromptKind;
use crate::template::Vars;
use crate::types::BoundingBox;

pub trait Grounder: Send + Sync {
    /// Raw proposals; [`propose_regions`] validates them.
    fn locate(
        &self,
        session: &mut Session<'_>,
        image: &ImageInput,
        entity_names: &[String],
    ) -> Result<Vec<BoundingBox>, BackendError>;

    fn is_deterministic(&self) -> bool {
        false
    }

    /// True if this grounder calls the `grounder` chat role.
    fn uses_model(&self) -> bool {
        false
    }
}

/// Boxes for the requested entities. Boxes with zero area, boxes outside the
/// image and boxes for entities that were not requested are dropped with a
/// warning.
pub fn propose_regions(
    session: &mut Session<'_>,
    image: &ImageInput,
    entity_names: &[String],
) -> Result<Vec<BoundingBox>, BackendError> {
    if entity_names.is_empty() {
        return Err(BackendError::Precondition("no entity names to ground".into()));
    }
    let grounder = session.backends().grounder();
    let raw = grounder.locate(session, image, entity_names)?;
    let mut out = Vec::with_capacity(raw.len());
    for mut b in raw {
        let Some(name) = entity_names.iter().find(|n| n.eq_ignore_ascii_case(b.label.trim())) else {
            session.warn(format!("{}: dropped box for unrequested entity '{}'", image.reference, b.label));
            continue;
        };
        if !b.has_area() {
            session.warn(format!("{}: dropped zero-area box for '{}'", image.reference, b.label));
            continue;
        }
        if !b.fits_within(image.width, image.height) {
            session.warn(format!(
                "{}: dropped box for '{}' outside {}x{} image",
                image.reference, b.label, image.width, image.height
            ));
            continue;
        }
        b.label = name.clone();
        out.push(b);
    }
    Ok(out)
}

/// Asks the `grounder` role for boxes, one `entity: x, y, w, h` line each.
#[derive(Debug, Default, Clone, Copy)]
pub struct ModelGrounder;

impl Grounder for ModelGrounder {
    fn locate(
        &self,
        session: &mut Session<'_>,
        image: &ImageInput,
        entity_names: &[String],
    ) -> Result<Vec<BoundingBox>, BackendError> {
        let prompt = session.render(
            PromptKind::Grounding,
            &Vars::new().set("entity_list", entity_names.join(", ")),
        )?;
        let reply = session.complete(Role::Grounder, vec![ChatMessage::user_with_image(prompt, image)])?;
        Ok(reply.lines().filter_map(parse_box_line).collect())
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn uses_model(&self) -> bool {
        true
    }
}

fn parse_box_line(line: &str) -> Option<BoundingBox> {
    let (label, coords) = line.trim().trim_start_matches(['-', '*', ' ']).rsplit_once(':')?;
    let nums: Vec<u32> = coords
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    let [x, y, w, h] = nums[..] else { return None };
    Some(BoundingBox { label: label.trim().to_string(), x, y, w, h })
}

/// Fixed boxes per image reference, loaded from a JSON object mapping image
/// names to box lists.
#[derive(Debug, Clone, Default)]
pub struct FixtureGrounder {
    boxes: BTreeMap<String, Vec<BoundingBox>>,
}

impl FixtureGrounder {
    pub fn new(boxes: BTreeMap<String, Vec<BoundingBox>>) -> Self {
        Self { boxes }
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let boxes = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self { boxes })
    }
}

impl Grounder for FixtureGrounder {
    fn locate(
        &self,
        _session: &mut Session<'_>,
        image: &ImageInput,
        entity_names: &[String],
    ) -> Result<Vec<BoundingBox>, BackendError> {
        Ok(self
            .boxes
            .get(&image.reference)
            .map(|v| {
                v.iter()
                    .filter(|b| entity_names.iter().any(|n| n.eq_ignore_ascii_case(&b.label)))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default())
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{Backends, Exhaustion, ScriptedBackend, ScriptedScenario};
    use crate::image::test_support::blank_image;
    use crate::prompts::PromptSet;

    fn bx(label: &str, x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox { label: label.into(), x, y, w, h }
    }

    fn fixture() -> FixtureGrounder {
        let mut m = BTreeMap::new();
        m.insert("train.png".to_string(), vec![bx("man", 40, 4, 16, 30), bx("train door", 30, 0, 30, 44)]);
        FixtureGrounder::new(m)
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fixture_boxes_for_requested_names() {
        let backends = Backends::new().with_grounder(Arc::new(fixture()));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("train.png");
        let boxes = propose_regions(&mut s, &img, &names(&["man", "train door"])).unwrap();
        assert_eq!(boxes.len(), 2);
        let boxes = propose_regions(&mut s, &img, &names(&["bag"])).unwrap();
        assert!(boxes.is_empty());
        assert!(propose_regions(&mut s, &img, &[]).is_err());
    }

    #[test]
    fn model_grounder_drops_invalid_boxes() {
        let reply = "man: 1, 2, 10, 10\ntrain door: 0, 0, 0, 12\nbag: 60, 40, 10, 10\ndog: 1, 1, 2, 2\nnonsense";
        let backend = Arc::new(ScriptedBackend::new(ScriptedScenario::ordinal([reply], Exhaustion::Error)).unwrap());
        let backends = Backends::new().bind(Role::Grounder, backend);
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("x.png");
        let boxes = propose_regions(&mut s, &img, &names(&["Man", "train door", "bag"])).unwrap();
        assert_eq!(boxes, vec![bx("Man", 1, 2, 10, 10)]);
        assert_eq!(s.warnings().len(), 3);
    }

    #[test]
    fn box_line_parsing() {
        assert_eq!(parse_box_line("- man: 1, 2, 3, 4"), Some(bx("man", 1, 2, 3, 4)));
        assert_eq!(parse_box_line("a: b: 1 2 3 4"), Some(bx("a: b", 1, 2, 3, 4)));
        assert_eq!(parse_box_line("man: 1, 2, 3"), None);
    }
}
