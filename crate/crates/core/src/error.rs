use thiserror::Error;

use crate::config::FieldViolation;
use crate::event::{SessionId, UtteranceId};
use crate::state::UtteranceStatus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config field(s): {}", .0.join(", "))]
    UnknownField(Vec<String>),
    #[error("config field(s) out of range: {}", join(.0))]
    OutOfRange(Vec<FieldViolation>),
    #[error("config must be a JSON object, got {0}")]
    NotAnObject(&'static str),
}

fn join(v: &[FieldViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed event: {0}")]
    MalformedEvent(&'static str),
    #[error("event for session {got} delivered to session {expected}")]
    SessionMismatch { expected: SessionId, got: SessionId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetractError {
    #[error("no utterance {0}")]
    NotFound(UtteranceId),
    #[error("utterance {id} is {status:?}, only final utterances can be retracted")]
    InvalidState { id: UtteranceId, status: UtteranceStatus },
    #[error("no final utterance to retract")]
    NothingToRetract,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame is already the hearing face")]
    InvalidFace,
}
