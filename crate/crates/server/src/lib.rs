//! Network face of a duplexcap session.
//!
//! A single [`Runtime`] per process folds transcript events and control
//! commands into caption state; the [`server`] module fans the resulting
//! frames out to the two display faces over WebSocket, persists a session
//! log, and serves the config over HTTP.

pub mod control;
pub mod log;
pub mod registry;
pub mod replay;
pub mod runtime;
pub mod server;
pub mod wire;

pub use control::{CommandError, ControlCommand};
pub use log::{replay_log, replay_log_str, LogKind, LogRecord, LogWriter, ReplayError, ReplayedLog};
pub use registry::{ClientId, ClientRegistration, Registry};
pub use replay::{merge_inputs, read_commands, run_virtual, Input, ScriptCommand, TimedInput};
pub use runtime::{Broadcast, CommandAck, Runtime, TICK_MS};
pub use wire::{FramePayload, MessageType, Role, WireMessage};
pub use server::{serve, ServerOptions, SessionHandle};
