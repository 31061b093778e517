//! The session's single-writer core, free of I/O.
//!
//! [`Runtime`] owns the caption [`Session`], decides when frames must be
//! broadcast, and records every input and broadcast as [`LogRecord`]s for the
//! caller to persist. The live server, fast replay and log replay all drive
//! the same type, so they agree on frame timing.

use duplexcap_core::{
    CaptionConfig, CaptionFrame, Face, IngestError, Millis, Session, SessionId, StateDelta,
    TranscriptEvent, UtteranceId,
};
use serde_json::{json, Value};

use crate::control::{CommandError, ControlCommand};
use crate::log::{LogKind, LogRecord};
use crate::wire::FramePayload;

/// Broadcast cadence (~30 Hz) while graphemes are still being revealed.
pub const TICK_MS: Millis = 33;

/// Both faces' frames for one broadcast instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub dhh: CaptionFrame,
    pub hearing: CaptionFrame,
}

impl Broadcast {
    pub fn frame_ts(&self) -> Millis {
        self.dhh.frame_ts
    }

    pub fn payloads(&self) -> (FramePayload, FramePayload) {
        (FramePayload::from(&self.dhh), FramePayload::from(&self.hearing))
    }

    pub fn digests(&self) -> (String, String) {
        let (d, h) = self.payloads();
        (d.digest(), h.digest())
    }

    /// Canonical one-line record `{"dhh": .., "hearing": ..}` with sorted
    /// keys, as written by `replay` and stored in golden files.
    pub fn record_line(&self) -> String {
        let (d, h) = self.payloads();
        json!({ "dhh": d, "hearing": h }).to_string()
    }
}

/// Result of an accepted control command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandAck {
    pub delta: StateDelta,
    pub utterance_id: Option<UtteranceId>,
    pub config_rev: u64,
}

#[derive(Debug, Clone)]
pub struct Runtime {
    session: Session,
    last_frame_ts: Option<Millis>,
    pending: bool,
    wake: Option<Millis>,
    outbox: Vec<LogRecord>,
    logging: bool,
}

impl Runtime {
    /// A session on default config at revision 0 that records nothing.
    pub fn blank(session_id: SessionId) -> Self {
        Self {
            session: Session::new(session_id, CaptionConfig::default()),
            last_frame_ts: None,
            pending: false,
            wake: None,
            outbox: Vec::new(),
            logging: false,
        }
    }

    /// A logged session whose first record installs `config` (revision 1).
    pub fn new(session_id: SessionId, config: &CaptionConfig, now: Millis) -> Self {
        let mut rt = Self::blank(session_id);
        rt.logging = true;
        rt.command(&ControlCommand::ConfigPatch(config.to_patch()), now)
            .expect("a validated config applies over defaults");
        // nothing is on screen yet
        rt.pending = false;
        rt
    }

    pub fn set_logging(&mut self, on: bool) {
        self.logging = on;
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn last_frame_ts(&self) -> Option<Millis> {
        self.last_frame_ts
    }

    fn log(&mut self, ts: Millis, kind: LogKind, body: Value) {
        if self.logging {
            self.outbox.push(LogRecord { ts, kind, body });
        }
    }

    /// Drains log records produced since the last call, in order.
    pub fn take_log(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.outbox)
    }

    pub fn ingest(&mut self, event: &TranscriptEvent, now: Millis) -> Result<StateDelta, IngestError> {
        self.log(now, LogKind::Event, serde_json::to_value(event).expect("event serializes"));
        self.session.prune_expired(now);
        let delta = self.session.ingest(event, now);
        match &delta {
            Ok(d) => self.pending |= d.changed,
            Err(e) => tracing::warn!(utterance = %event.utterance_id, "dropping event: {e}"),
        }
        delta
    }

    pub fn command(&mut self, cmd: &ControlCommand, now: Millis) -> Result<CommandAck, CommandError> {
        match cmd {
            ControlCommand::ConfigPatch(patch) => {
                let body = json!({ "session_id": self.session.session_id(), "patch": patch });
                self.log(now, LogKind::Config, body);
            }
            other => self.log(now, LogKind::Command, other.to_payload()),
        }
        self.session.prune_expired(now);
        let (delta, utterance_id) = match cmd {
            ControlCommand::RetractLast => {
                let (id, d) = self.session.retract_last(now)?;
                (d, Some(id))
            }
            ControlCommand::RetractId(id) => (self.session.retract(id, now)?, Some(id.clone())),
            ControlCommand::ConfigPatch(patch) => (self.session.apply_config(patch)?, None),
            ControlCommand::Clear => (self.session.clear(), None),
        };
        self.pending |= delta.changed;
        Ok(CommandAck { delta, utterance_id, config_rev: self.session.config_rev() })
    }

    /// Whether a broadcast is owed at `now`: state changed since the last
    /// one, or a reveal tick or expiry deadline has come due.
    pub fn due(&self, now: Millis) -> bool {
        self.last_frame_ts.map_or(true, |last| now > last)
            && (self.pending || self.wake.is_some_and(|w| w <= now))
    }

    /// Earliest instant at which [`Runtime::due`] can become true without
    /// further input. `None` means quiescent.
    pub fn deadline(&self) -> Option<Millis> {
        if self.pending {
            Some(self.last_frame_ts.map_or(Millis::MIN, |l| l + 1))
        } else {
            self.wake
        }
    }

    /// Prunes expired captions and lays out both faces at `now`.
    ///
    /// # Panics
    ///
    /// If `now` is not after the previous frame, which would break per-client
    /// frame ordering.
    pub fn broadcast(&mut self, now: Millis) -> Broadcast {
        assert!(
            self.last_frame_ts.map_or(true, |last| now > last),
            "broadcast at {now} not after previous frame {:?}",
            self.last_frame_ts
        );
        self.session.prune_expired(now);
        let b = Broadcast {
            dhh: self.session.frame(Face::Dhh, now),
            hearing: self.session.frame(Face::Hearing, now),
        };
        let (dhh, hearing) = b.digests();
        self.log(now, LogKind::FrameDigest, json!({ "dhh": dhh, "hearing": hearing }));
        self.last_frame_ts = Some(now);
        self.pending = false;
        let tick = self.session.is_revealing(now).then_some(now + TICK_MS);
        self.wake = match (tick, self.session.next_expiry(now)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        b
    }

    /// Current frame for a newly registered face client. Later broadcasts
    /// are kept strictly after it.
    pub fn snapshot(&mut self, face: Face, now: Millis) -> CaptionFrame {
        let now = self.last_frame_ts.map_or(now, |l| now.max(l + 1));
        self.last_frame_ts = Some(now);
        self.session.frame(face, now)
    }
}
