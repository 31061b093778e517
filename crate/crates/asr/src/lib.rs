//! Transcript sources feeding a caption session.
//!
//! - [`ReplaySource`] plays a JSON Lines script, either paced in real time or
//!   instantly on a virtual clock.
//! - [`AsrMapper`] turns interim/final results from a streaming recognizer
//!   into [`TranscriptEvent`](duplexcap_core::TranscriptEvent)s.
//! - [`inject_errors`] scrambles words of final results with a seeded PRNG to
//!   stage misrecognitions on demand.

mod external;
mod inject;
mod script;

pub use external::{AsrMapper, ExternalAsrMessage};
pub use inject::{inject_errors, scramble_word, ErrorInjector};
pub use script::{
    open_replay_source, parse_script, read_script, ReplayMode, ReplaySource, ReplayStream,
    ScriptEntry, ScriptError,
};
