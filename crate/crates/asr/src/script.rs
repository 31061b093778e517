use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::time::Duration;

use duplexcap_core::{EventKind, Millis, SessionId, TranscriptEvent, UtteranceId};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

/// One line of a replay script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    /// Offset from script start.
    pub at_ms: Millis,
    pub utterance_id: UtteranceId,
    pub seq: i64,
    pub kind: EventKind,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("malformed script at line {line}: {reason}")]
    MalformedScript { line: usize, reason: String },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, reason: impl Into<String>) -> ScriptError {
    ScriptError::MalformedScript { line, reason: reason.into() }
}

/// Parses JSON Lines, one [`ScriptEntry`] per non-blank line, and checks the
/// ordering invariants.
pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, ScriptError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry =
            serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        entries.push(entry);
    }
    validate(&entries)?;
    Ok(entries)
}

pub fn read_script(path: impl AsRef<Path>) -> Result<Vec<ScriptEntry>, ScriptError> {
    parse_script(&std::fs::read_to_string(path)?)
}

/// Entries must be sorted by `at_ms`, start at a non-negative offset, and
/// carry strictly increasing seq per utterance. Line numbers are 1-based
/// entry indices.
fn validate(entries: &[ScriptEntry]) -> Result<(), ScriptError> {
    let mut last_seq: HashMap<&UtteranceId, i64> = HashMap::new();
    let mut prev_at = 0;
    for (i, e) in entries.iter().enumerate() {
        let line = i + 1;
        if e.at_ms < prev_at {
            return Err(malformed(line, format!("at_ms {} before previous {}", e.at_ms, prev_at)));
        }
        prev_at = e.at_ms;
        if let Some(&prev) = last_seq.get(&e.utterance_id) {
            if e.seq <= prev {
                return Err(malformed(
                    line,
                    format!("seq {} for {} does not follow {}", e.seq, e.utterance_id, prev),
                ));
            }
        }
        last_seq.insert(&e.utterance_id, e.seq);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Sleep so that events leave at their scripted offsets.
    Realtime,
    /// Emit immediately, stamping `recv_ts` with the scripted offset.
    Fast,
}

/// A validated script bound to a session.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    session_id: SessionId,
    entries: Vec<ScriptEntry>,
}

impl ReplaySource {
    pub fn new(session_id: SessionId, entries: Vec<ScriptEntry>) -> Result<Self, ScriptError> {
        validate(&entries)?;
        Ok(Self { session_id, entries })
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    fn event(&self, e: &ScriptEntry, recv_ts: Millis) -> TranscriptEvent {
        TranscriptEvent {
            session_id: self.session_id.clone(),
            utterance_id: e.utterance_id.clone(),
            seq: e.seq,
            kind: e.kind,
            text: e.text.clone(),
            confidence: None,
            source_ts: e.at_ms,
            recv_ts,
        }
    }

    /// Events on the virtual clock: `recv_ts == at_ms`.
    pub fn fast_events(&self) -> impl Iterator<Item = TranscriptEvent> + '_ {
        self.entries.iter().map(|e| self.event(e, e.at_ms))
    }

    pub fn stream(self, mode: ReplayMode) -> ReplayStream {
        ReplayStream { source: self.entries.clone().into(), replay: self, mode, started: None }
    }
}

/// Async event stream over a replay script.
#[derive(Debug)]
pub struct ReplayStream {
    replay: ReplaySource,
    source: VecDeque<ScriptEntry>,
    mode: ReplayMode,
    started: Option<Instant>,
}

impl ReplayStream {
    pub async fn next(&mut self) -> Option<TranscriptEvent> {
        let entry = self.source.pop_front()?;
        let recv_ts = match self.mode {
            ReplayMode::Fast => entry.at_ms,
            ReplayMode::Realtime => {
                let start = *self.started.get_or_insert_with(Instant::now);
                let due = start + Duration::from_millis(entry.at_ms.max(0) as u64);
                tokio::time::sleep_until(due).await;
                start.elapsed().as_millis() as Millis
            }
        };
        Some(self.replay.event(&entry, recv_ts))
    }
}

/// Validates `script` and opens it as an event stream.
pub fn open_replay_source(
    session_id: SessionId,
    script: Vec<ScriptEntry>,
    mode: ReplayMode,
) -> Result<ReplayStream, ScriptError> {
    Ok(ReplaySource::new(session_id, script)?.stream(mode))
}
