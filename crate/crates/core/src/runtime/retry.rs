use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Parse,
    Schema,
    Transport,
    /// Reply was present but unusable (empty text, undecodable image, wrong
    /// output type).
    Output,
    /// The backend cannot serve the request at all; never retried.
    Unsupported,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Parse => "parse error",
            FailureKind::Schema => "schema error",
            FailureKind::Transport => "transport error",
            FailureKind::Output => "output error",
            FailureKind::Unsupported => "unsupported request",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} after {attempts} attempt(s): {message}")]
pub struct CallError {
    pub kind: FailureKind,
    pub message: String,
    pub attempts: u32,
    pub status: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub retry_on_parse: bool,
    pub retry_on_schema: bool,
    pub retry_on_transport: bool,
    /// First transport backoff; doubles per attempt up to `backoff_cap`.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    #[serde(with = "millis")]
    pub backoff_cap: Duration,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            retry_on_parse: true,
            retry_on_schema: true,
            retry_on_transport: true,
            backoff_base: Duration::from_millis(200),
            backoff_cap: Duration::from_secs(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("max_attempts must be at least 1")]
pub struct InvalidPolicy;

impl RetryPolicy {
    pub fn with_max_attempts(max_attempts: u32) -> Result<Self, InvalidPolicy> {
        if max_attempts == 0 {
            return Err(InvalidPolicy);
        }
        Ok(Self {
            max_attempts,
            ..Self::default()
        })
    }

    pub fn without_backoff(mut self) -> Self {
        self.backoff_base = Duration::ZERO;
        self.backoff_cap = Duration::ZERO;
        self
    }

    pub fn retries(&self, kind: FailureKind) -> bool {
        match kind {
            FailureKind::Parse => self.retry_on_parse,
            FailureKind::Schema | FailureKind::Output => self.retry_on_schema,
            FailureKind::Transport => self.retry_on_transport,
            FailureKind::Unsupported => false,
        }
    }

    /// Delay before attempt `next_attempt` (2-based) after a transport error.
    pub fn backoff(&self, next_attempt: u32) -> Duration {
        let exp = next_attempt.saturating_sub(2).min(16);
        self.backoff_base.saturating_mul(1 << exp).min(self.backoff_cap)
    }
}
