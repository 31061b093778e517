//! Deterministic replay of scripted sessions on a virtual clock.

use std::path::Path;

use duplexcap_core::{Millis, TranscriptEvent};
use serde::Deserialize;
use serde_json::Value;

use crate::control::ControlCommand;
use crate::runtime::{Broadcast, Runtime};

/// A control command scheduled alongside a transcript script, one JSON
/// object per line: `{"at_ms": 1200, "action": "retract_last"}`, with
/// `args` for `retract_id` and `config_patch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptCommand {
    pub at_ms: Millis,
    pub command: ControlCommand,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommand {
    at_ms: Millis,
    action: String,
    #[serde(default)]
    args: Value,
}

pub fn parse_commands(text: &str) -> anyhow::Result<Vec<ScriptCommand>> {
    let mut out: Vec<ScriptCommand> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCommand = serde_json::from_str(line)
            .map_err(|e| anyhow::anyhow!("command line {}: {e}", i + 1))?;
        if out.last().is_some_and(|prev| prev.at_ms > raw.at_ms) {
            anyhow::bail!("command line {}: at_ms {} out of order", i + 1, raw.at_ms);
        }
        let command = ControlCommand::from_parts(&raw.action, raw.args)
            .map_err(|e| anyhow::anyhow!("command line {}: {e}", i + 1))?;
        out.push(ScriptCommand { at_ms: raw.at_ms, command });
    }
    Ok(out)
}

pub fn read_commands(path: impl AsRef<Path>) -> anyhow::Result<Vec<ScriptCommand>> {
    parse_commands(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Event(TranscriptEvent),
    Command(ControlCommand),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedInput {
    pub at: Millis,
    pub input: Input,
}

/// Orders events (by `recv_ts`) and commands into one timeline. At equal
/// times events come first, each group keeping its own order.
pub fn merge_inputs(
    events: impl IntoIterator<Item = TranscriptEvent>,
    commands: impl IntoIterator<Item = ScriptCommand>,
) -> Vec<TimedInput> {
    let mut inputs: Vec<TimedInput> = events
        .into_iter()
        .map(|e| TimedInput { at: e.recv_ts, input: Input::Event(e) })
        .chain(commands.into_iter().map(|c| TimedInput { at: c.at_ms, input: Input::Command(c.command) }))
        .collect();
    inputs.sort_by_key(|i| i.at);
    inputs
}

/// Steps a [`Runtime`] through a timeline on a virtual clock.
///
/// Inputs sharing a timestamp are applied together and followed by at most
/// one broadcast; between inputs the runtime's own deadlines (reveal ticks
/// and expiries) produce broadcasts until it goes quiescent.
pub struct VirtualDriver<'a> {
    runtime: &'a mut Runtime,
    inputs: &'a [TimedInput],
    next: usize,
}

impl<'a> VirtualDriver<'a> {
    pub fn new(runtime: &'a mut Runtime, inputs: &'a [TimedInput]) -> Self {
        Self { runtime, inputs, next: 0 }
    }

    fn apply_inputs_at(&mut self, t: Millis) {
        while let Some(TimedInput { at, input }) = self.inputs.get(self.next) {
            if *at != t {
                break;
            }
            match input {
                Input::Event(e) => {
                    let _ = self.runtime.ingest(e, t);
                }
                Input::Command(c) => {
                    if let Err(e) = self.runtime.command(c, t) {
                        tracing::debug!("scripted {} rejected: {e}", c.action());
                    }
                }
            }
            self.next += 1;
        }
    }
}

impl Iterator for VirtualDriver<'_> {
    type Item = Broadcast;

    fn next(&mut self) -> Option<Broadcast> {
        loop {
            let next_input = self.inputs.get(self.next).map(|i| i.at);
            match (self.runtime.deadline(), next_input) {
                (Some(w), Some(t)) if w < t => return Some(self.runtime.broadcast(w)),
                (Some(w), None) => return Some(self.runtime.broadcast(w)),
                (_, Some(t)) => {
                    self.apply_inputs_at(t);
                    if self.runtime.due(t) {
                        return Some(self.runtime.broadcast(t));
                    }
                }
                (None, None) => return None,
            }
        }
    }
}

/// Every broadcast of a virtual-clock run, in order.
pub fn run_virtual(runtime: &mut Runtime, inputs: &[TimedInput]) -> Vec<Broadcast> {
    VirtualDriver::new(runtime, inputs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use duplexcap_core::{CaptionConfig, EventKind};

    fn ev(utt: &str, seq: i64, kind: EventKind, text: &str, at: Millis) -> TranscriptEvent {
        TranscriptEvent {
            session_id: "s".into(),
            utterance_id: utt.into(),
            seq,
            kind,
            text: text.into(),
            confidence: None,
            source_ts: at,
            recv_ts: at,
        }
    }

    #[test]
    fn commands_file() {
        let cmds = parse_commands(
            "{\"at_ms\":5,\"action\":\"retract_last\"}\n\n{\"at_ms\":9,\"action\":\"config_patch\",\"args\":{\"opacity\":0.5}}\n",
        )
        .unwrap();
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[0].command, ControlCommand::RetractLast);
        assert!(parse_commands("{\"at_ms\":9,\"action\":\"clear\"}\n{\"at_ms\":1,\"action\":\"clear\"}").is_err());
        assert!(parse_commands("{\"at_ms\":1,\"action\":\"nope\"}").is_err());
    }

    #[test]
    fn merge_puts_events_first_on_ties() {
        let merged = merge_inputs(
            vec![ev("u", 1, EventKind::Final, "a", 10)],
            vec![ScriptCommand { at_ms: 10, command: ControlCommand::RetractLast }, ScriptCommand {
                at_ms: 0,
                command: ControlCommand::Clear,
            }],
        );
        let kinds: Vec<_> = merged
            .iter()
            .map(|i| (i.at, matches!(i.input, Input::Event(_))))
            .collect();
        assert_eq!(kinds, [(0, false), (10, true), (10, false)]);
    }

    #[test]
    fn same_time_inputs_coalesce() {
        let mut rt = Runtime::new("s".into(), &CaptionConfig::default(), 0);
        let inputs = merge_inputs(
            (1..=5).map(|i| ev("u", i, EventKind::Partial, &"x".repeat(i as usize), 100)),
            vec![],
        );
        let frames = run_virtual(&mut rt, &inputs);
        assert_eq!(frames[0].frame_ts(), 100);
        assert_eq!(frames[0].dhh.lines[0].graphemes.len(), 5);
        for pair in frames.windows(2) {
            assert!(pair[0].frame_ts() < pair[1].frame_ts());
        }
    }

    #[test]
    fn empty_timeline_is_silent() {
        let mut rt = Runtime::new("s".into(), &CaptionConfig::default(), 0);
        assert!(run_virtual(&mut rt, &[]).is_empty());
    }
}
