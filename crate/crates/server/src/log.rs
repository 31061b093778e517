//! Append-only JSON Lines session log and its replay.
//!
//! Every input (event, command, config change) and every broadcast's frame
//! digests are written in intake order. Replaying the records through a
//! fresh [`Runtime`] reproduces the session and re-checks each digest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use duplexcap_core::{ConfigPatch, Millis, SessionId, TranscriptEvent};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::control::ControlCommand;
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Event,
    Command,
    Config,
    FrameDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts: Millis,
    pub kind: LogKind,
    pub body: Value,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log record at {ts} precedes previous record at {last}")]
    NonMonotonic { ts: Millis, last: Millis },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Buffered writer enforcing non-decreasing `ts`.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    last_ts: Option<Millis>,
}

impl LogWriter {
    /// Creates (or truncates) the log file.
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_owned();
        let out = BufWriter::new(File::create(&path)?);
        Ok(Self { path, out, last_ts: None })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), LogError> {
        if let Some(last) = self.last_ts {
            if record.ts < last {
                return Err(LogError::NonMonotonic { ts: record.ts, last });
            }
        }
        serde_json::to_writer(&mut self.out, record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_ts = Some(record.ts);
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// A session rebuilt from its log.
#[derive(Debug, Clone)]
pub struct ReplayedLog {
    pub runtime: Runtime,
    /// Records applied, including digests.
    pub records: usize,
    pub digests_verified: usize,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    /// Replay stopped before `line`; `partial` holds the state from every
    /// earlier line.
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String, partial: Box<ReplayedLog> },
    #[error("frame digest mismatch at line {line}")]
    DigestMismatch { line: usize, partial: Box<ReplayedLog> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct ConfigBody {
    session_id: SessionId,
    patch: ConfigPatch,
}

#[derive(Deserialize)]
struct DigestBody {
    dhh: String,
    hearing: String,
}

enum Step {
    Ok,
    Corrupt(String),
    Mismatch,
}

struct Replayer {
    runtime: Option<Runtime>,
    records: usize,
    digests_verified: usize,
    last_ts: Option<Millis>,
}

impl Replayer {
    fn runtime_for(&mut self, session_id: &SessionId) -> &mut Runtime {
        self.runtime.get_or_insert_with(|| Runtime::blank(session_id.clone()))
    }

    fn apply(&mut self, line: &str) -> Step {
        let record: LogRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return Step::Corrupt(e.to_string()),
        };
        if self.last_ts.is_some_and(|last| record.ts < last) {
            return Step::Corrupt(format!("ts {} goes backwards", record.ts));
        }
        let ts = record.ts;
        match record.kind {
            LogKind::Event => match serde_json::from_value::<TranscriptEvent>(record.body) {
                Ok(event) => {
                    // rejected events replay to the same rejection
                    let _ = self.runtime_for(&event.session_id).ingest(&event, ts);
                }
                Err(e) => return Step::Corrupt(format!("event body: {e}")),
            },
            LogKind::Config => match serde_json::from_value::<ConfigBody>(record.body) {
                Ok(body) => {
                    let cmd = ControlCommand::ConfigPatch(body.patch);
                    let _ = self.runtime_for(&body.session_id).command(&cmd, ts);
                }
                Err(e) => return Step::Corrupt(format!("config body: {e}")),
            },
            LogKind::Command => match ControlCommand::from_payload(&record.body) {
                Ok(cmd) => match self.runtime.as_mut() {
                    Some(rt) => {
                        let _ = rt.command(&cmd, ts);
                    }
                    None => return Step::Corrupt("command before session start".into()),
                },
                Err(e) => return Step::Corrupt(e),
            },
            LogKind::FrameDigest => {
                let body: DigestBody = match serde_json::from_value(record.body) {
                    Ok(b) => b,
                    Err(e) => return Step::Corrupt(format!("digest body: {e}")),
                };
                let Some(rt) = self.runtime.as_mut() else {
                    return Step::Corrupt("frame digest before session start".into());
                };
                if rt.last_frame_ts().is_some_and(|last| ts <= last) {
                    return Step::Corrupt(format!("frame at {ts} not after previous frame"));
                }
                let (dhh, hearing) = rt.broadcast(ts).digests();
                if dhh != body.dhh || hearing != body.hearing {
                    return Step::Mismatch;
                }
                self.digests_verified += 1;
            }
        }
        self.last_ts = Some(ts);
        self.records += 1;
        Step::Ok
    }

    fn finish(self) -> ReplayedLog {
        let mut runtime = self.runtime.unwrap_or_else(|| Runtime::blank(SessionId::from("default")));
        runtime.set_logging(false);
        ReplayedLog { runtime, records: self.records, digests_verified: self.digests_verified }
    }
}

/// Replays log text. Blank lines are skipped; line numbers are 1-based.
pub fn replay_log_str(text: &str) -> Result<ReplayedLog, ReplayError> {
    let mut replayer = Replayer { runtime: None, records: 0, digests_verified: 0, last_ts: None };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match replayer.apply(line) {
            Step::Ok => {}
            Step::Corrupt(reason) => {
                return Err(ReplayError::CorruptLog {
                    line: i + 1,
                    reason,
                    partial: Box::new(replayer.finish()),
                })
            }
            Step::Mismatch => {
                return Err(ReplayError::DigestMismatch { line: i + 1, partial: Box::new(replayer.finish()) })
            }
        }
    }
    Ok(replayer.finish())
}

pub fn replay_log(path: impl AsRef<Path>) -> Result<ReplayedLog, ReplayError> {
    replay_log_str(&std::fs::read_to_string(path)?)
}
