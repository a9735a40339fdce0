use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, Backends, ChatMessage, ChatRequest, MessageRole, Role};
use crate::prompts::{PromptKind, PromptSet};
use crate::template::Vars;

/// Re-asks allowed after a response that fails to parse.
pub const MAX_REASKS: u32 = 2;

/// One backend call as recorded in a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u32,
    pub role: Role,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of a call that may be re-asked when its response does not parse.
#[derive(Debug, Clone, PartialEq)]
pub enum Asked<T> {
    Parsed(T),
    Unparsed { reason: String, attempts: u32 },
}

/// Per-sample access to backends and prompts, with an append-only call log.
pub struct Session<'a> {
    backends: &'a Backends,
    prompts: &'a PromptSet,
    calls: Vec<CallRecord>,
    warnings: Vec<String>,
}

impl<'a> Session<'a> {
    pub fn new(backends: &'a Backends, prompts: &'a PromptSet) -> Self {
        Self { backends, prompts, calls: Vec::new(), warnings: Vec::new() }
    }

    pub fn backends(&self) -> &'a Backends {
        self.backends
    }

    pub fn prompts(&self) -> &'a PromptSet {
        self.prompts
    }

    pub fn render(&self, kind: PromptKind, vars: &Vars) -> Result<String, BackendError> {
        Ok(self.prompts.render(kind, vars)?)
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn into_parts(self) -> (Vec<CallRecord>, Vec<String>) {
        (self.calls, self.warnings)
    }

    /// Number of calls issued so far; stage timing uses differences of this.
    pub fn call_count(&self) -> usize {
        self.calls.len()
    }

    /// Sends one request for `role`. The request hash is logged before the
    /// call and the response hash right after it.
    pub fn complete(&mut self, role: Role, messages: Vec<ChatMessage>) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::EmptyMessages);
        }
        if let Some(m) = messages.iter().find(|m| m.image.is_some() && m.role != MessageRole::User) {
            return Err(BackendError::ImageOnNonUser(m.role.as_str()));
        }
        let binding = self.backends.binding(role).ok_or(BackendError::NotConfigured(role))?;
        let request = ChatRequest { messages, decode: binding.decode };
        let seq = self.calls.len() as u32;
        self.calls.push(CallRecord {
            seq,
            role,
            prompt_hash: hash_request(&request),
            response_hash: None,
            error: None,
        });
        let result = binding.backend.complete(role, &request);
        let record = self.calls.last_mut().expect("record pushed above");
        match &result {
            Ok(text) => record.response_hash = Some(sha256_hex(text.as_bytes())),
            Err(e) => record.error = Some(e.to_string()),
        }
        result
    }

    /// Like [`Session::complete`] but treats a blank reply as an error after
    /// re-asking.
    pub fn complete_text(&mut self, role: Role, messages: Vec<ChatMessage>) -> Result<String, BackendError> {
        match self.ask_parsed(role, messages, "Reply with non-empty text.", |text| {
            let t = text.trim();
            if t.is_empty() {
                Err("empty reply".to_string())
            } else {
                Ok(t.to_string())
            }
        })? {
            Asked::Parsed(text) => Ok(text),
            Asked::Unparsed { .. } => Err(BackendError::EmptyResponse(role)),
        }
    }

    /// Calls `role` and parses the reply; on a parse failure, shows the model
    /// its reply with the reason and asks again, up to [`MAX_REASKS`] times.
    pub fn ask_parsed<T, F>(
        &mut self,
        role: Role,
        mut messages: Vec<ChatMessage>,
        format_hint: &str,
        parse: F,
    ) -> Result<Asked<T>, BackendError>
    where
        F: Fn(&str) -> Result<T, String>,
    {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let reply = self.complete(role, messages.clone())?;
            match parse(&reply) {
                Ok(value) => return Ok(Asked::Parsed(value)),
                Err(reason) if attempts > MAX_REASKS => return Ok(Asked::Unparsed { reason, attempts }),
                Err(reason) => {
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your previous reply could not be used ({reason}). {format_hint}"
                    )));
                }
            }
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_request(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    for m in &request.messages {
        hasher.update(m.role.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(m.text.as_bytes());
        hasher.update([0]);
        if let Some(img) = &m.image {
            hasher.update(Sha256::digest(img.bytes.as_slice()));
        }
        hasher.update([1]);
    }
    hasher.update(request.decode.temperature.to_le_bytes());
    hasher.update(request.decode.max_tokens.to_le_bytes());
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{Exhaustion, ScriptedBackend, ScriptedScenario};
    use crate::image::test_support::blank_image;

    fn scripted(responses: &[&str]) -> Arc<ScriptedBackend> {
        Arc::new(ScriptedBackend::new(ScriptedScenario::ordinal(responses.iter().copied(), Exhaustion::Error)).unwrap())
    }

    #[test]
    fn empty_messages_rejected() {
        let backends = Backends::new().bind_all(scripted(&["x"]));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        assert!(matches!(s.complete(Role::Judge, vec![]), Err(BackendError::EmptyMessages)));
        assert!(s.calls().is_empty());
    }

    #[test]
    fn image_only_on_user_messages() {
        let backends = Backends::new().bind_all(scripted(&["x"]));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let img = blank_image("a.png");
        let mut m = ChatMessage::assistant("hi");
        m.image = Some(img);
        assert!(matches!(s.complete(Role::Judge, vec![m]), Err(BackendError::ImageOnNonUser("assistant"))));
    }

    #[test]
    fn unconfigured_role() {
        let backends = Backends::new().bind(Role::Judge, scripted(&["x"]));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        assert!(matches!(
            s.complete(Role::Reasoner, vec![ChatMessage::user("q")]),
            Err(BackendError::NotConfigured(Role::Reasoner))
        ));
    }

    #[test]
    fn reask_bound_and_log() {
        let backend = scripted(&["bad", "bad", "bad", "never"]);
        let backends = Backends::new().bind_all(backend.clone());
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let out = s
            .ask_parsed(Role::Judge, vec![ChatMessage::user("score")], "Use a number.", |t| {
                t.parse::<f64>().map_err(|e| e.to_string())
            })
            .unwrap();
        assert!(matches!(out, Asked::Unparsed { attempts: 3, .. }));
        assert_eq!(backend.calls(), 3);
        assert_eq!(s.calls().len(), 3);
        assert!(s.calls().iter().all(|c| c.response_hash.is_some()));
        assert_ne!(s.calls()[0].prompt_hash, s.calls()[1].prompt_hash);
    }

    #[test]
    fn reask_recovers() {
        let backends = Backends::new().bind_all(scripted(&["bad", "0.5"]));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        let out = s
            .ask_parsed(Role::Judge, vec![ChatMessage::user("score")], "Use a number.", |t| {
                t.parse::<f64>().map_err(|e| e.to_string())
            })
            .unwrap();
        assert_eq!(out, Asked::Parsed(0.5));
    }

    #[test]
    fn failed_call_logged() {
        let backends = Backends::new().bind_all(scripted(&[]));
        let prompts = PromptSet::builtin();
        let mut s = Session::new(&backends, &prompts);
        assert!(s.complete(Role::Judge, vec![ChatMessage::user("q")]).is_err());
        assert!(s.calls()[0].error.is_some());
    }
}
