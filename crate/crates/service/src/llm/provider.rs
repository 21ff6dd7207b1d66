use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::TemplateId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// An image forwarded to the provider untouched.
#[derive(Clone, PartialEq, Eq)]
pub struct Attachment {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl Attachment {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

impl fmt::Debug for Attachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Attachment({}, {} bytes)", self.media_type, self.bytes.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image(Attachment),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self { role, parts: vec![Part::Text(text.into())] }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::text(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::text(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::text(Role::Assistant, text)
    }

    pub fn joined_text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn has_images(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, Part::Image(_)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template: TemplateId,
    pub messages: Vec<Message>,
    pub temperature: f32,
}

impl ChatRequest {
    pub fn new(template: TemplateId, messages: Vec<Message>) -> Self {
        Self { template, messages, temperature: template.default_temperature() }
    }

    /// Stable text form of the conversation; images contribute their digest.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str("## ");
            out.push_str(m.role.as_str());
            out.push('\n');
            for p in &m.parts {
                match p {
                    Part::Text(t) => out.push_str(t),
                    Part::Image(a) => {
                        out.push_str("[image ");
                        out.push_str(&a.media_type);
                        out.push(' ');
                        out.push_str(&a.sha256());
                        out.push(']');
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Hex SHA-256 of the transcript; the stub's lookup key.
    pub fn prompt_hash(&self) -> String {
        hex::encode(Sha256::digest(self.transcript().as_bytes()))
    }

    pub fn has_images(&self) -> bool {
        self.messages.iter().any(Message::has_images)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned HTTP {status}")]
    Status { status: u16, body: String },
    #[error("provider does not accept images")]
    NoVision,
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("no canned reply for {template} prompt {key}")]
    NoCannedReply { template: TemplateId, key: String },
}

impl ProviderError {
    /// Transport failures, throttling and server errors are worth retrying.
    pub fn is_retriable(&self) -> bool {
        match self {
            ProviderError::Unreachable(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One chat-completion endpoint: messages in, text out.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    fn supports_vision(&self) -> bool;

    fn name(&self) -> &str;
}
