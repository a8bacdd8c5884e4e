//! Replays stored transcripts instead of querying an agent.

use std::collections::HashMap;

use super::{Agent, AgentError, CompletionRequest, TrialContext};
use crate::games::Condition;
use crate::runner::TrialRecord;

type ReplayKey = (String, Condition, u32);

pub struct ReplayAgent {
    source: String,
    answers: HashMap<ReplayKey, String>,
}

impl ReplayAgent {
    /// Index records by (config, condition, repetition); later records win.
    pub fn from_records(source: impl Into<String>, records: &[TrialRecord]) -> Self {
        let answers = records
            .iter()
            .map(|r| ((r.config.canonical(), r.condition, r.repetition), r.raw_response.clone()))
            .collect();
        Self { source: source.into(), answers }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Agent for ReplayAgent {
    fn complete(&self, _request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError> {
        let key = (trial.config.canonical(), trial.condition, trial.repetition);
        self.answers
            .get(&key)
            .cloned()
            .ok_or_else(|| AgentError::ReplayMiss(format!("{} condition={} repetition={}", key.0, key.1, key.2)))
    }

    fn describe(&self) -> String {
        format!("replay({})", self.source)
    }
}
