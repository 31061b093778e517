//! JSON messages exchanged over the display socket.
//!
//! Every socket frame carries one [`WireMessage`]. Messages the server
//! originates (`hello`, `frame`, `config`, `bye`) are numbered by a
//! per-connection counter; `ack` and `error` replies echo the `msg_id` of the
//! client message they answer.

use std::fmt;

use duplexcap_core::{CaptionConfig, CaptionFrame, Face, FieldViolation, Millis, UtteranceId};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageType {
    Hello,
    Frame,
    Control,
    Config,
    Ack,
    Error,
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default)]
    pub payload: Value,
    #[serde(default)]
    pub msg_id: u64,
}

impl WireMessage {
    pub fn new(kind: MessageType, payload: impl Serialize, msg_id: u64) -> Self {
        let payload = serde_json::to_value(payload).expect("payload serializes");
        Self { kind, payload, msg_id }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    FaceDhh,
    FaceHearing,
    Control,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        serde_json::from_value(Value::String(s.to_owned())).ok()
    }

    pub fn face(self) -> Option<Face> {
        match self {
            Role::FaceDhh => Some(Face::Dhh),
            Role::FaceHearing => Some(Face::Hearing),
            Role::Control => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub role: String,
    pub session_id: String,
}

/// Server reply to a successful hello.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelcomePayload {
    pub client_id: u64,
    pub role: Role,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePayload {
    pub utterance_id: UtteranceId,
    pub retracted: bool,
    pub graphemes: Vec<String>,
    /// Reveal deadlines relative to `frame_ts`; negative means already shown.
    pub reveal_offsets_ms: Vec<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub face: Face,
    pub mirrored: bool,
    pub scale: f64,
    pub frame_ts: Millis,
    pub config_rev: u64,
    pub lines: Vec<LinePayload>,
}

impl From<&CaptionFrame> for FramePayload {
    fn from(frame: &CaptionFrame) -> Self {
        Self {
            face: frame.face,
            mirrored: frame.mirrored,
            scale: frame.scale,
            frame_ts: frame.frame_ts,
            config_rev: frame.config_rev,
            lines: frame
                .lines
                .iter()
                .map(|l| LinePayload {
                    utterance_id: l.utterance_id.clone(),
                    retracted: l.retracted,
                    graphemes: l.graphemes.clone(),
                    reveal_offsets_ms: l.reveal_times.iter().map(|t| t - frame.frame_ts).collect(),
                })
                .collect(),
        }
    }
}

impl FramePayload {
    /// Sorted-key JSON text; stable across runs and used for digests and
    /// golden files.
    pub fn canonical_json(&self) -> String {
        canonical(self)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Serializes through `serde_json::Value`, whose object maps keep keys
/// sorted.
pub fn canonical(value: &impl Serialize) -> String {
    serde_json::to_value(value).expect("serializes").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPayload {
    pub config_rev: u64,
    pub config: CaptionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByePayload {
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadHello,
    BadMessage,
    Forbidden,
    NothingToRetract,
    NotFound,
    InvalidState,
    OutOfRange,
    UnknownField,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldViolation>,
}

impl ErrorPayload {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), fields: Vec::new() }
    }
}
