use serde::{Deserialize, Serialize};

use crate::amr::TokenSpan;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerAnnotation {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentAnnotation {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub trigger: TriggerAnnotation,
    #[serde(default)]
    pub args: Vec<ArgumentAnnotation>,
}

impl EventMention {
    pub fn trigger_span(&self) -> TokenSpan {
        TokenSpan::new(self.trigger.start, self.trigger.end)
    }
}

impl ArgumentAnnotation {
    pub fn span(&self) -> TokenSpan {
        TokenSpan::new(self.start, self.end)
    }
}

/// One JSON Lines record of labeled event data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sent_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub events: Vec<EventMention>,
}

impl LabeledSentence {
    /// Checks span bounds and that trigger spans do not overlap.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if n == 0 {
            return Err("empty token list".into());
        }
        let check = |what: &str, s: usize, e: usize| {
            if s >= e || e > n {
                Err(format!("{what} span [{s}, {e}) invalid for {n} tokens"))
            } else {
                Ok(())
            }
        };
        let mut triggers: Vec<TokenSpan> = Vec::new();
        for ev in &self.events {
            check("trigger", ev.trigger.start, ev.trigger.end)?;
            let span = ev.trigger_span();
            if triggers.iter().any(|t| t.overlap(&span) > 0) {
                return Err(format!(
                    "trigger span [{}, {}) overlaps another trigger",
                    span.start, span.end
                ));
            }
            triggers.push(span);
            for a in &ev.args {
                check("argument", a.start, a.end)?;
            }
        }
        Ok(())
    }

    pub fn n_arguments(&self) -> usize {
        self.events.iter().map(|e| e.args.len()).sum()
    }
}

pub(crate) fn schema_error(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}
