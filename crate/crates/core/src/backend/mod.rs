//! Model access for every pipeline role.
//!
//! A [`ChatBackend`] turns a list of chat messages into text. [`Backends`]
//! binds each [`Role`] to a backend plus decode parameters, and a
//! [`Session`] wraps those bindings with the per-sample call log.

mod grounder;
mod http;
mod score;
mod scripted;
mod session;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageInput;

pub use grounder::{propose_regions, FixtureGrounder, Grounder, ModelGrounder};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, Sleeper, ThreadSleeper};
pub use score::{parse_score, ScoreParseError};
pub use scripted::{Exhaustion, ScriptEntry, ScriptedBackend, ScriptedScenario, ScenarioError};
pub use session::{Asked, CallRecord, Session, MAX_REASKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "vrd_model")]
    VrdModel,
    #[serde(rename = "analyzer_ga")]
    Analyzer,
    #[serde(rename = "captioner_gc")]
    Captioner,
    #[serde(rename = "paraphraser")]
    Paraphraser,
    #[serde(rename = "reasoner")]
    Reasoner,
    #[serde(rename = "teacher_llm")]
    Teacher,
    #[serde(rename = "judge_f")]
    Judge,
    #[serde(rename = "grounder")]
    Grounder,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::VrdModel,
        Role::Analyzer,
        Role::Captioner,
        Role::Paraphraser,
        Role::Reasoner,
        Role::Teacher,
        Role::Judge,
        Role::Grounder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::VrdModel => "vrd_model",
            Role::Analyzer => "analyzer_ga",
            Role::Captioner => "captioner_gc",
            Role::Paraphraser => "paraphraser",
            Role::Reasoner => "reasoner",
            Role::Teacher => "teacher_llm",
            Role::Judge => "judge_f",
            Role::Grounder => "grounder",
        }
    }

    pub fn parse(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == name)
    }

    /// Sampling temperature used when the configuration does not set one.
    /// Only the teacher samples; everything else decodes greedily.
    pub fn default_temperature(self) -> f64 {
        match self {
            Role::Teacher => 0.7,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub text: String,
    pub image: Option<ImageInput>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: MessageRole::System, text: text.into(), image: None }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: MessageRole::User, text: text.into(), image: None }
    }

    pub fn user_with_image(text: impl Into<String>, image: &ImageInput) -> Self {
        Self { role: MessageRole::User, text: text.into(), image: Some(image.clone()) }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, text: text.into(), image: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl DecodeParams {
    pub const DEFAULT_MAX_TOKENS: u32 = 1024;

    pub fn for_role(role: Role) -> Self {
        Self { temperature: role.default_temperature(), max_tokens: Self::DEFAULT_MAX_TOKENS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub decode: DecodeParams,
}

impl ChatRequest {
    /// Flattened text used for scripted matching and request hashing.
    /// Images appear as `[image:<reference>]`.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(m.role.as_str());
            out.push_str(": ");
            out.push_str(&m.text);
            out.push('\n');
            if let Some(img) = &m.image {
                out.push_str(&format!("[image:{}]\n", img.reference));
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no messages in request")]
    EmptyMessages,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("image attached to a {0} message; only user messages may carry images")]
    ImageOnNonUser(&'static str),
    #[error("role {0} has no configured backend")]
    NotConfigured(Role),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP status {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("scripted scenario exhausted for {role} request")]
    ScriptExhausted { role: Role },
    #[error("ordinal scripted scenario used concurrently")]
    ConcurrentAccess,
    #[error("empty response from {0}")]
    EmptyResponse(Role),
    #[error("rendering prompt: {0}")]
    Prompt(#[from] crate::template::TemplateError),
}

/// Anything that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<String, BackendError>;

    /// False when concurrent calls would make responses order-dependent.
    fn allows_concurrency(&self) -> bool {
        true
    }

    /// True for backends whose output is fully determined by their inputs.
    fn is_deterministic(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub struct RoleBinding {
    pub backend: Arc<dyn ChatBackend>,
    pub decode: DecodeParams,
}

impl fmt::Debug for RoleBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoleBinding").field("decode", &self.decode).finish_non_exhaustive()
    }
}

/// Role-to-backend bindings shared by every sample in a run.
#[derive(Clone)]
pub struct Backends {
    bindings: BTreeMap<Role, RoleBinding>,
    grounder: Arc<dyn Grounder>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends").field("bindings", &self.bindings).finish_non_exhaustive()
    }
}

impl Default for Backends {
    fn default() -> Self {
        Self::new()
    }
}

impl Backends {
    /// Empty bindings with a grounder that asks the `grounder` role for boxes.
    pub fn new() -> Self {
        Self { bindings: BTreeMap::new(), grounder: Arc::new(ModelGrounder) }
    }

    pub fn bind(mut self, role: Role, backend: Arc<dyn ChatBackend>) -> Self {
        self.bindings.insert(role, RoleBinding { backend, decode: DecodeParams::for_role(role) });
        self
    }

    pub fn bind_with(mut self, role: Role, backend: Arc<dyn ChatBackend>, decode: DecodeParams) -> Self {
        self.bindings.insert(role, RoleBinding { backend, decode });
        self
    }

    /// Binds every role to the same backend.
    pub fn bind_all(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        for role in Role::ALL {
            self = self.bind(role, backend.clone());
        }
        self
    }

    pub fn with_grounder(mut self, grounder: Arc<dyn Grounder>) -> Self {
        self.grounder = grounder;
        self
    }

    pub fn binding(&self, role: Role) -> Option<&RoleBinding> {
        self.bindings.get(&role)
    }

    pub fn grounder(&self) -> Arc<dyn Grounder> {
        self.grounder.clone()
    }

    pub fn is_configured(&self, role: Role) -> bool {
        self.bindings.contains_key(&role)
    }

    pub fn missing(&self, roles: &[Role]) -> Vec<Role> {
        roles.iter().copied().filter(|r| !self.is_configured(*r)).collect()
    }

    pub fn allows_concurrency(&self) -> bool {
        self.bindings.values().all(|b| b.backend.allows_concurrency())
    }

    pub fn is_deterministic(&self) -> bool {
        self.bindings.values().all(|b| b.backend.is_deterministic()) && self.grounder.is_deterministic()
    }
}
