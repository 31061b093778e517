//! Caption state machine for a two-faced transcript display.
//!
//! A totally ordered stream of [`TranscriptEvent`]s is folded into a
//! [`Session`], which can be laid out at any instant into a [`CaptionFrame`]
//! for either face of the display. The DHH face reads the captions full size;
//! the hearing face gets the same lines tagged as mirrored and scaled down.
//!
//! Everything in this crate is synchronous and deterministic: the same inputs
//! at the same timestamps always produce the same frames.

mod config;
mod error;
mod event;
mod frame;
mod schedule;
mod state;
mod text;
mod wrap;

pub use config::{validate_config, CaptionConfig, ConfigPatch, FieldViolation};
pub use error::{ConfigError, FrameError, IngestError, RetractError};
pub use event::{EventKind, SessionId, TranscriptEvent, UtteranceId};
pub use frame::{layout_frame, mirror_frame, CaptionFrame, CaptionLine, Face};
pub use schedule::compute_reveal_schedule;
pub use state::{
    DeltaReason, Session, SessionState, StateDelta, Utterance, UtteranceStatus,
};
pub use text::{graphemes, normalize_text};
pub use wrap::{wrap_spans, wrap_text};

/// Server monotonic milliseconds.
pub type Millis = i64;
