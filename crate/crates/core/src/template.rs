//! Minimal prompt templates.
//!
//! `{{name}}` substitutes a value. `{{#name}} ... {{/name}}` keeps its body
//! only when `name` is bound to a non-blank value. Every placeholder in the
//! template must be bound at render time.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template '{template}': unterminated placeholder at byte {offset}")]
    Unterminated { template: String, offset: usize },
    #[error("template '{template}': section '{name}' is not closed")]
    UnclosedSection { template: String, name: String },
    #[error("template '{template}': unexpected section end '{name}'")]
    UnexpectedSectionEnd { template: String, name: String },
    #[error("template '{template}': invalid placeholder name '{name}'")]
    InvalidName { template: String, name: String },
    #[error("template '{template}': placeholder '{{{{{name}}}}}' has no value")]
    Unbound { template: String, name: String },
    #[error("template '{template}': required placeholder '{{{{{name}}}}}' is missing")]
    MissingRequired { template: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Text(String),
    Var(String),
    Section { name: String, body: Vec<Part> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    parts: Vec<Part>,
}

/// Placeholder bindings for one render.
#[derive(Debug, Clone, Default)]
pub struct Vars(BTreeMap<String, String>);

impl Vars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<String>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let mut stack: Vec<(String, Vec<Part>)> = Vec::new();
        let mut current: Vec<Part> = Vec::new();
        let mut rest = source;
        let mut offset = 0;
        while let Some(start) = rest.find("{{") {
            if start > 0 {
                current.push(Part::Text(rest[..start].to_string()));
            }
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| TemplateError::Unterminated {
                template: name.to_string(),
                offset: offset + start,
            })?;
            let tag = after[..end].trim();
            if let Some(section) = tag.strip_prefix('#') {
                let section = check_name(name, section)?;
                stack.push((section, std::mem::take(&mut current)));
            } else if let Some(section) = tag.strip_prefix('/') {
                let section = check_name(name, section)?;
                match stack.pop() {
                    Some((open, parent)) if open == section => {
                        let body = std::mem::replace(&mut current, parent);
                        current.push(Part::Section { name: open, body });
                    }
                    _ => {
                        return Err(TemplateError::UnexpectedSectionEnd {
                            template: name.to_string(),
                            name: section,
                        })
                    }
                }
            } else {
                current.push(Part::Var(check_name(name, tag)?));
            }
            let consumed = start + 2 + end + 2;
            offset += consumed;
            rest = &rest[consumed..];
        }
        if !rest.is_empty() {
            current.push(Part::Text(rest.to_string()));
        }
        if let Some((open, _)) = stack.pop() {
            return Err(TemplateError::UnclosedSection { template: name.to_string(), name: open });
        }
        Ok(Self { name: name.to_string(), parts: current })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Every placeholder or section name used, deduplicated and sorted.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_names(&self.parts, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn require(&self, names: &[&str]) -> Result<(), TemplateError> {
        let present = self.placeholders();
        for name in names {
            if !present.iter().any(|p| p == name) {
                return Err(TemplateError::MissingRequired {
                    template: self.name.clone(),
                    name: name.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn render(&self, vars: &Vars) -> Result<String, TemplateError> {
        let mut out = String::new();
        self.render_parts(&self.parts, vars, &mut out)?;
        Ok(out)
    }

    fn render_parts(&self, parts: &[Part], vars: &Vars, out: &mut String) -> Result<(), TemplateError> {
        for part in parts {
            match part {
                Part::Text(t) => out.push_str(t),
                Part::Var(name) => out.push_str(self.lookup(vars, name)?),
                Part::Section { name, body } => {
                    if !self.lookup(vars, name)?.trim().is_empty() {
                        self.render_parts(body, vars, out)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup<'v>(&self, vars: &'v Vars, name: &str) -> Result<&'v str, TemplateError> {
        vars.get(name).ok_or_else(|| TemplateError::Unbound {
            template: self.name.clone(),
            name: name.to_string(),
        })
    }
}

fn check_name(template: &str, raw: &str) -> Result<String, TemplateError> {
    let name = raw.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(TemplateError::InvalidName { template: template.to_string(), name: name.to_string() });
    }
    Ok(name.to_string())
}

fn collect_names(parts: &[Part], out: &mut Vec<String>) {
    for part in parts {
        match part {
            Part::Text(_) => {}
            Part::Var(name) => out.push(name.clone()),
            Part::Section { name, body } => {
                out.push(name.clone());
                collect_names(body, out);
            }
        }
    }
}

/// True if `text` still contains something shaped like a placeholder.
pub fn has_placeholder(text: &str) -> bool {
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        if let Some(end) = after.find("}}") {
            let tag = after[..end].trim().trim_start_matches(['#', '/']);
            if !tag.is_empty() && tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return true;
            }
            rest = &after[end..];
        } else {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_vars_and_sections() {
        let t = Template::parse("t", "Q: {{question}}\n{{#caption}}Caption: {{caption}}\n{{/caption}}End").unwrap();
        let with = t.render(&Vars::new().set("question", "why?").set("caption", "a dog")).unwrap();
        assert_eq!(with, "Q: why?\nCaption: a dog\nEnd");
        let without = t.render(&Vars::new().set("question", "why?").set("caption", "  ")).unwrap();
        assert_eq!(without, "Q: why?\nEnd");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let t = Template::parse("coe", "{{question}} {{caption}}").unwrap();
        let err = t.render(&Vars::new().set("question", "q")).unwrap_err();
        assert!(matches!(err, TemplateError::Unbound { ref name, .. } if name == "caption"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Template::parse("t", "{{a"), Err(TemplateError::Unterminated { .. })));
        assert!(matches!(Template::parse("t", "{{#a}}x"), Err(TemplateError::UnclosedSection { .. })));
        assert!(matches!(Template::parse("t", "x{{/a}}"), Err(TemplateError::UnexpectedSectionEnd { .. })));
        assert!(matches!(Template::parse("t", "{{a b}}"), Err(TemplateError::InvalidName { .. })));
    }

    #[test]
    fn required_placeholders() {
        let t = Template::parse("rel", "{{subject}} {{#region_list}}{{region_list}}{{/region_list}}").unwrap();
        assert!(t.require(&["subject", "region_list"]).is_ok());
        assert!(matches!(t.require(&["entity_list"]), Err(TemplateError::MissingRequired { .. })));
    }

    #[test]
    fn placeholder_detection() {
        assert!(has_placeholder("x {{description}} y"));
        assert!(!has_placeholder("set {a} and {{ }} only"));
        assert!(!has_placeholder("plain"));
    }
}
