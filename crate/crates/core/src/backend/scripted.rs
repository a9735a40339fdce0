//! Deterministic canned responses for tests and offline runs.
//!
//! A scenario file is TOML:
//!
//! ```toml
//! exhaustion = "error"          # or "repeat_last"
//!
//! [[entry]]
//! role = "vrd_model"            # optional role filter
//! contains = ["[image:s01.png]", "Task: entity extraction"]
//! response = "man: 0.9"
//! ```
//!
//! Matcher entries (`contains`) are checked in file order against the request
//! transcript and the first whose substrings all occur wins; they are
//! reusable and order-independent. Ordinal entries (`ordinal = 0, 1, ...`)
//! are served in sequence, one per call. A scenario uses one kind only.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendError, ChatBackend, ChatRequest, Role};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("entry {0}: needs exactly one of `contains` or `ordinal`")]
    AmbiguousEntry(usize),
    #[error("scenario mixes matcher and ordinal entries")]
    MixedKinds,
    #[error("ordinal entries must be 0..{0} without gaps or repeats")]
    BadOrdinals(usize),
    #[error("unknown role '{0}'")]
    UnknownRole(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    #[default]
    Error,
    /// Serve the scenario's final entry once nothing else applies.
    RepeatLast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Contains {
    One(String),
    All(Vec<String>),
}

impl Contains {
    fn matches(&self, haystack: &str) -> bool {
        match self {
            Contains::One(s) => haystack.contains(s.as_str()),
            Contains::All(v) => v.iter().all(|s| haystack.contains(s.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<Contains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    pub response: String,
}

impl ScriptEntry {
    pub fn matching(substrings: &[&str], response: impl Into<String>) -> Self {
        Self {
            role: None,
            contains: Some(Contains::All(substrings.iter().map(|s| s.to_string()).collect())),
            ordinal: None,
            response: response.into(),
        }
    }

    pub fn for_role(mut self, role: Role) -> Self {
        self.role = Some(role.as_str().to_string());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedScenario {
    #[serde(default)]
    pub exhaustion: Exhaustion,
    #[serde(default, rename = "entry")]
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedScenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: ScriptedScenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Responses served one per call, in order.
    pub fn ordinal<I, S>(responses: I, exhaustion: Exhaustion) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = responses
            .into_iter()
            .enumerate()
            .map(|(i, r)| ScriptEntry { role: None, contains: None, ordinal: Some(i), response: r.into() })
            .collect();
        Self { exhaustion, entries }
    }

    pub fn matchers(entries: Vec<ScriptEntry>, exhaustion: Exhaustion) -> Self {
        Self { exhaustion, entries }
    }

    pub fn is_ordinal(&self) -> bool {
        self.entries.first().is_some_and(|e| e.ordinal.is_some())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.contains.is_some() == e.ordinal.is_some() {
                return Err(ScenarioError::AmbiguousEntry(i));
            }
            if let Some(role) = &e.role {
                Role::parse(role).ok_or_else(|| ScenarioError::UnknownRole(role.clone()))?;
            }
        }
        let ordinal = self.is_ordinal();
        if self.entries.iter().any(|e| e.ordinal.is_some() != ordinal) {
            return Err(ScenarioError::MixedKinds);
        }
        if ordinal {
            let mut seen: Vec<usize> = self.entries.iter().filter_map(|e| e.ordinal).collect();
            seen.sort_unstable();
            if seen.iter().enumerate().any(|(i, o)| i != *o) {
                return Err(ScenarioError::BadOrdinals(self.entries.len()));
            }
        }
        Ok(())
    }
}

pub struct ScriptedBackend {
    ordinal: bool,
    exhaustion: Exhaustion,
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
    served: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(mut scenario: ScriptedScenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let ordinal = scenario.is_ordinal();
        if ordinal {
            scenario.entries.sort_by_key(|e| e.ordinal);
        }
        Ok(Self {
            ordinal,
            exhaustion: scenario.exhaustion,
            entries: scenario.entries,
            cursor: Mutex::new(0),
            served: AtomicUsize::new(0),
        })
    }

    /// Number of requests answered or rejected so far.
    pub fn calls(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    fn fallback(&self, role: Role) -> Result<String, BackendError> {
        match (self.exhaustion, self.entries.last()) {
            (Exhaustion::RepeatLast, Some(last)) => Ok(last.response.clone()),
            _ => Err(BackendError::ScriptExhausted { role }),
        }
    }

    fn next_ordinal(&self, role: Role) -> Result<String, BackendError> {
        let mut cursor = self.cursor.try_lock().map_err(|_| BackendError::ConcurrentAccess)?;
        match self.entries.get(*cursor) {
            Some(entry) => {
                *cursor += 1;
                Ok(entry.response.clone())
            }
            None => self.fallback(role),
        }
    }

    fn matched(&self, role: Role, request: &ChatRequest) -> Result<String, BackendError> {
        let transcript = request.transcript();
        self.entries
            .iter()
            .filter(|e| e.role.as_deref().is_none_or(|r| r == role.as_str()))
            .find(|e| e.contains.as_ref().is_some_and(|c| c.matches(&transcript)))
            .map(|e| e.response.clone())
            .map_or_else(|| self.fallback(role), Ok)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<String, BackendError> {
        self.served.fetch_add(1, Ordering::SeqCst);
        if self.ordinal {
            self.next_ordinal(role)
        } else {
            self.matched(role, request)
        }
    }

    fn allows_concurrency(&self) -> bool {
        !self.ordinal
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChatMessage, DecodeParams};

    fn req(text: &str) -> ChatRequest {
        ChatRequest { messages: vec![ChatMessage::user(text)], decode: DecodeParams::for_role(Role::Judge) }
    }

    #[test]
    fn single_entry_is_deterministic() {
        let b = ScriptedBackend::new(ScriptedScenario::ordinal(["man: 0.9"], Exhaustion::RepeatLast)).unwrap();
        for _ in 0..3 {
            assert_eq!(b.complete(Role::VrdModel, &req("anything")).unwrap(), "man: 0.9");
        }
    }

    #[test]
    fn ordinal_exhaustion_errors() {
        let b = ScriptedBackend::new(ScriptedScenario::ordinal(["a", "b"], Exhaustion::Error)).unwrap();
        assert_eq!(b.complete(Role::Judge, &req("x")).unwrap(), "a");
        assert_eq!(b.complete(Role::Judge, &req("x")).unwrap(), "b");
        assert!(matches!(b.complete(Role::Judge, &req("x")), Err(BackendError::ScriptExhausted { .. })));
        assert_eq!(b.calls(), 3);
        assert!(!b.allows_concurrency());
    }

    #[test]
    fn matcher_order_and_role_filter() {
        let text = r#"
            [[entry]]
            role = "reasoner"
            contains = ["Cause:", "question"]
            response = "Answer: yes"

            [[entry]]
            contains = "question"
            response = "Answer: no"
        "#;
        let b = ScriptedBackend::new(ScriptedScenario::from_toml_str(text).unwrap()).unwrap();
        assert_eq!(b.complete(Role::Reasoner, &req("question")).unwrap(), "Answer: no");
        assert_eq!(b.complete(Role::Reasoner, &req("question Cause: x")).unwrap(), "Answer: yes");
        assert_eq!(b.complete(Role::Judge, &req("question Cause: x")).unwrap(), "Answer: no");
        assert!(b.complete(Role::Judge, &req("other")).is_err());
        assert!(b.allows_concurrency());
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            ScriptedScenario::from_toml_str("[[entry]]\nresponse = \"x\""),
            Err(ScenarioError::AmbiguousEntry(0))
        ));
        let mixed = "[[entry]]\nordinal = 0\nresponse = \"x\"\n[[entry]]\ncontains = \"a\"\nresponse = \"y\"";
        assert!(matches!(ScriptedScenario::from_toml_str(mixed), Err(ScenarioError::MixedKinds)));
        let gap = "[[entry]]\nordinal = 1\nresponse = \"x\"";
        assert!(matches!(ScriptedScenario::from_toml_str(gap), Err(ScenarioError::BadOrdinals(1))));
        let role = "[[entry]]\nrole = \"nobody\"\ncontains = \"a\"\nresponse = \"x\"";
        assert!(matches!(ScriptedScenario::from_toml_str(role), Err(ScenarioError::UnknownRole(_))));
    }

    #[test]
    fn concurrent_ordinal_use_is_rejected() {
        let b = ScriptedBackend::new(ScriptedScenario::ordinal(["a"], Exhaustion::RepeatLast)).unwrap();
        let _held = b.cursor.lock().unwrap();
        assert!(matches!(b.complete(Role::Judge, &req("x")), Err(BackendError::ConcurrentAccess)));
    }
}
