//! Agents that answer trial prompts.
//!
//! Every backend answers with raw text, exactly as a chat endpoint would; decisions are
//! recovered by the parser. Synthetic agents draw their randomness from the per-trial
//! seed only, so results do not depend on scheduling.

pub mod mock;
pub mod remote;
pub mod replay;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::{Condition, GameConfig};

pub use remote::{RemoteAgent, RemoteConfig, RetryPolicy, TokenBucket};
pub use replay::ReplayAgent;
pub use synthetic::{cpt_decide, fs_decide, SyntheticCpt, SyntheticFs};

/// Default completion budget; answers are a single token or word.
pub const DEFAULT_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(AgentError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        if self.max_tokens < 1 {
            return Err(AgentError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Structured identity of the trial a request belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialContext {
    pub config: GameConfig,
    pub condition: Condition,
    pub config_index: usize,
    pub repetition: u32,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("transport failure (status {status:?}): {body}")]
    Transport { status: Option<u16>, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no stored transcript for {0}")]
    ReplayMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend cannot play this game: {0}")]
    Unsupported(String),
}

impl AgentError {
    /// Transport-level failures count toward a run's abort budget.
    pub fn is_transport(&self) -> bool {
        matches!(self, AgentError::Transport { .. } | AgentError::Timeout)
    }
}

pub trait Agent: Send + Sync {
    /// Raw textual answer to one trial prompt.
    fn complete(&self, request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError>;

    /// Short description recorded in run metadata.
    fn describe(&self) -> String;
}

/// The agent backends the toolkit ships.
pub enum AgentBackend {
    Remote(RemoteAgent),
    SyntheticFs(SyntheticFs),
    SyntheticCpt(SyntheticCpt),
    Replay(ReplayAgent),
}

impl Agent for AgentBackend {
    fn complete(&self, request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError> {
        match self {
            AgentBackend::Remote(a) => a.complete(request, trial),
            AgentBackend::SyntheticFs(a) => a.complete(request, trial),
            AgentBackend::SyntheticCpt(a) => a.complete(request, trial),
            AgentBackend::Replay(a) => a.complete(request, trial),
        }
    }

    fn describe(&self) -> String {
        match self {
            AgentBackend::Remote(a) => a.describe(),
            AgentBackend::SyntheticFs(a) => a.describe(),
            AgentBackend::SyntheticCpt(a) => a.describe(),
            AgentBackend::Replay(a) => a.describe(),
        }
    }
}

/// Query `backend` once for `request`.
pub fn complete(
    backend: &AgentBackend,
    request: &CompletionRequest,
    trial: &TrialContext,
) -> Result<String, AgentError> {
    request.validate()?;
    backend.complete(request, trial)
}
