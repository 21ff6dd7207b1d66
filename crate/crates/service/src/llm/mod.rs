//! Chat-model access: prompt templates, providers, reply parsing and the
//! planning and tutoring operations built on them.

pub mod extract;
pub mod gateway;
pub mod http;
pub mod provider;
pub mod stub;
pub mod templates;

pub use extract::{ExtractError, Extracted, Strategy, extract_json};
pub use gateway::{
    CallTrace, Decomposition, Drafted, Gateway, GatewayError, GatewaySettings, Turn, TutoringExchange, TutoringRequest,
};
pub use http::{HttpProvider, ProviderConfig};
pub use provider::{Attachment, ChatProvider, ChatRequest, Message, Part, ProviderError, Role};
pub use stub::{Fallback, StubProvider};
pub use templates::{PromptTemplate, RenderError, TemplateId};
