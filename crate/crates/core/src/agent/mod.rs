//! Design-proposal agents: a chat-completion client driven by textual prompts
//! and a deterministic compass-search baseline.

mod baseline;
mod llm;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::IterationRecord;
use crate::params::{DesignParams, ParamSpace, SpecTargets};

pub use baseline::{score, BaselineAgent, CoordinateSearch};
pub use llm::{
    ChatMessage, ChatRequest, ChatTransport, HttpTransport, LlmAgent, LlmConfig, RecordingTransport,
    ReplayTransport, TranscriptEntry, TransportError, FORMAT_REMINDER,
};
pub use parse::{parse_proposal, ParseError};
pub use prompt::{
    build_prompt, build_recovery_prompt, recovery_prompt_for, target_numerals, PromptOptions, DIAGNOSTIC_TAIL_LINES,
    HISTORY_WINDOW,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    Qualitative,
    #[default]
    Quantitative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Normal,
    Recovery,
}

/// Everything an agent may look at when proposing the next design.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRequest<'a> {
    pub kind: PromptKind,
    pub prompt: &'a str,
    pub history: &'a [IterationRecord],
    pub seed_design: &'a DesignParams,
    pub space: &'a ParamSpace,
    pub targets: &'a SpecTargets,
    pub mode: GuidanceMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub params: DesignParams,
    pub rationale: String,
    pub raw_response: String,
    /// Format-reminder retries spent on this proposal.
    pub retries: u32,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("transport error: {0}")]
    Transport(#[from] TransportError),
    #[error("no usable proposal after {attempts} attempts: {last}")]
    Proposal { attempts: u32, last: ParseError },
    #[error("step schedule exhausted around the best design")]
    ExhaustedSpace,
    /// The agent declines to continue; the loop stops without error.
    #[error("agent stopped: {0}")]
    Stopped(String),
}

pub trait Agent {
    fn name(&self) -> &str;
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Proposal, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Proposal, AgentError> {
        (**self).propose(req)
    }
}
