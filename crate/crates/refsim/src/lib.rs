//! Straight-line reference simulator for the caption pipeline.
//!
//! Used only as a test oracle. It keeps the list of applied inputs and
//! rebuilds the whole session from scratch whenever state is needed, with its
//! own whitespace handling, reveal arithmetic, wrapping and broadcast
//! scheduling. Only the data types and config validation are shared with the
//! production crates.

use std::collections::HashSet;

use duplexcap_core::{validate_config, CaptionConfig, ConfigPatch, EventKind, TranscriptEvent};
use serde_json::{json, Value};
use unicode_segmentation::UnicodeSegmentation;

/// Broadcast cadence while graphemes are still being revealed.
pub const TICK_MS: i64 = 33;

#[derive(Debug, Clone)]
pub enum RefInput {
    Event(TranscriptEvent),
    RetractLast,
    RetractId(String),
    Clear,
    Config(ConfigPatch),
}

/// What applying one input did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Changed,
    Stale,
    Cleared { changed: bool },
    Malformed,
    NotFound,
    InvalidState,
    NothingToRetract,
    ConfigRejected,
}

impl Outcome {
    pub fn changed(self) -> bool {
        matches!(self, Outcome::Changed | Outcome::Cleared { changed: true })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefStatus {
    Partial,
    Final,
    Retracted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefUtterance {
    pub id: String,
    pub status: RefStatus,
    pub graphemes: Vec<String>,
    pub times: Vec<i64>,
    pub finalized_at: Option<i64>,
    pub retracted_at: Option<i64>,
    pub last_seq: i64,
    removed: bool,
}

/// Session state. It starts at `config_rev` 1 with the config it was built from.
#[derive(Debug, Clone)]
pub struct RefState {
    pub session_id: String,
    pub utterances: Vec<RefUtterance>,
    pub config: CaptionConfig,
    pub config_rev: u64,
    closed: HashSet<String>,
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn step_ms(k: i64, rate: f64) -> i64 {
    if rate.fract() == 0.0 {
        // exact round-half-up on integers
        let r = rate as i64;
        (2 * k * 1000 + r) / (2 * r)
    } else {
        (k as f64 * 1000.0 / rate).round() as i64
    }
}

fn reschedule(old: Option<&RefUtterance>, new: &[String], now: i64, rate: f64) -> Vec<i64> {
    let mut times = Vec::new();
    let mut kept = 0;
    if let Some(old) = old {
        while kept < new.len() && kept < old.graphemes.len() && old.graphemes[kept] == new[kept] {
            times.push(old.times[kept]);
            kept += 1;
        }
    }
    let mut k = if kept == 0 { 0 } else { 1 };
    let base = if kept == 0 { now } else { now.max(times[kept - 1]) };
    for _ in kept..new.len() {
        times.push(base + step_ms(k, rate));
        k += 1;
    }
    times
}

impl RefUtterance {
    fn expiry(&self, cfg: &CaptionConfig) -> Option<i64> {
        match self.status {
            RefStatus::Partial => None,
            RefStatus::Final => Some(*self.times.last().unwrap() + cfg.linger_ms),
            RefStatus::Retracted => Some(self.retracted_at.unwrap() + cfg.retract_linger_ms),
        }
    }
}

impl RefState {
    fn new(session_id: &str, config: CaptionConfig) -> Self {
        Self {
            session_id: session_id.to_owned(),
            utterances: Vec::new(),
            config,
            config_rev: 1,
            closed: HashSet::new(),
        }
    }

    fn is_visible(&self, u: &RefUtterance, now: i64) -> bool {
        !u.removed && u.expiry(&self.config).map_or(true, |e| now < e)
    }

    /// Utterances on screen at `now`, oldest first.
    pub fn visible(&self, now: i64) -> Vec<&RefUtterance> {
        self.utterances.iter().filter(|u| self.is_visible(u, now)).collect()
    }

    fn apply(&mut self, now: i64, input: &RefInput) -> Outcome {
        match input {
            RefInput::Event(e) => self.apply_event(now, e),
            RefInput::RetractLast => {
                let mut best: Option<usize> = None;
                for (i, u) in self.utterances.iter().enumerate() {
                    if u.status != RefStatus::Final || !self.is_visible(u, now) {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(b) => u.finalized_at >= self.utterances[b].finalized_at,
                    };
                    if better {
                        best = Some(i);
                    }
                }
                match best {
                    None => Outcome::NothingToRetract,
                    Some(i) => {
                        self.utterances[i].status = RefStatus::Retracted;
                        self.utterances[i].retracted_at = Some(now);
                        Outcome::Changed
                    }
                }
            }
            RefInput::RetractId(id) => {
                let Some(i) = self
                    .utterances
                    .iter()
                    .position(|u| &u.id == id && self.is_visible(u, now))
                else {
                    return Outcome::NotFound;
                };
                if self.utterances[i].status != RefStatus::Final {
                    return Outcome::InvalidState;
                }
                self.utterances[i].status = RefStatus::Retracted;
                self.utterances[i].retracted_at = Some(now);
                Outcome::Changed
            }
            RefInput::Clear => {
                let changed = !self.visible(now).is_empty();
                for u in &mut self.utterances {
                    u.removed = true;
                    self.closed.insert(u.id.clone());
                }
                Outcome::Cleared { changed }
            }
            RefInput::Config(patch) => match validate_config(patch, &self.config) {
                Ok(c) => {
                    self.config = c;
                    self.config_rev += 1;
                    Outcome::Changed
                }
                Err(_) => Outcome::ConfigRejected,
            },
        }
    }

    fn apply_event(&mut self, now: i64, e: &TranscriptEvent) -> Outcome {
        let text = collapse_whitespace(&e.text);
        if e.session_id.as_str() != self.session_id
            || e.utterance_id.as_str().is_empty()
            || e.seq < 0
            || (e.kind == EventKind::Final && text.is_empty())
        {
            return Outcome::Malformed;
        }
        let id = e.utterance_id.as_str();
        if self.closed.contains(id) {
            return Outcome::Stale;
        }
        let g: Vec<String> = text.graphemes(true).map(String::from).collect();
        let rate = self.config.reveal_rate;
        match self.utterances.iter().position(|u| u.id == id) {
            Some(i) => {
                let u = &self.utterances[i];
                if u.status != RefStatus::Partial || e.seq <= u.last_seq {
                    return Outcome::Stale;
                }
                let times = reschedule(Some(u), &g, now, rate);
                let u = &mut self.utterances[i];
                u.graphemes = g;
                u.times = times;
                u.last_seq = e.seq;
                if e.kind == EventKind::Final {
                    u.status = RefStatus::Final;
                    u.finalized_at = Some(now);
                }
            }
            None => {
                let times = reschedule(None, &g, now, rate);
                let fin = e.kind == EventKind::Final;
                self.utterances.push(RefUtterance {
                    id: id.to_owned(),
                    status: if fin { RefStatus::Final } else { RefStatus::Partial },
                    graphemes: g,
                    times,
                    finalized_at: fin.then_some(now),
                    retracted_at: None,
                    last_seq: e.seq,
                    removed: false,
                });
            }
        }
        Outcome::Changed
    }

    /// Line index ranges for one utterance, built word by word as strings.
    fn wrap(&self, g: &[String]) -> Vec<(usize, usize)> {
        let width = self.config.line_width;
        let mut lines = Vec::new();
        let mut line = String::new();
        let mut line_start = 0;
        let mut open = false;
        let mut pos = 0;
        for word in g.split(|x| x == " ") {
            let word_text: String = word.concat();
            let word_len = word_text.graphemes(true).count();
            let line_len = line.graphemes(true).count();
            if open && line_len + 1 + word_len <= width {
                line.push(' ');
                line.push_str(&word_text);
            } else {
                if open {
                    lines.push((line_start, line_start + line_len));
                }
                let mut rest = word;
                let mut start = pos;
                while rest.len() > width {
                    lines.push((start, start + width));
                    start += width;
                    rest = &rest[width..];
                }
                line = rest.concat();
                line_start = start;
                open = true;
            }
            pos += word.len() + 1;
        }
        if open && !g.is_empty() {
            lines.push((line_start, line_start + line.graphemes(true).count()));
        }
        lines
    }

    fn frame(&self, now: i64, hearing: bool) -> Value {
        let mut lines = Vec::new();
        for u in self.visible(now) {
            for (a, b) in self.wrap(&u.graphemes) {
                lines.push(json!({
                    "utterance_id": u.id,
                    "retracted": u.status == RefStatus::Retracted,
                    "graphemes": u.graphemes[a..b],
                    "reveal_offsets_ms": u.times[a..b].iter().map(|t| t - now).collect::<Vec<_>>(),
                }));
            }
        }
        let keep_from = lines.len().saturating_sub(self.config.max_lines);
        let lines: Vec<Value> = lines.split_off(keep_from);
        json!({
            "face": if hearing { "hearing" } else { "dhh" },
            "mirrored": hearing,
            "scale": if hearing { self.config.mirror_scale } else { 1.0 },
            "frame_ts": now,
            "config_rev": self.config_rev,
            "lines": lines,
        })
    }

    /// Canonical broadcast record: both faces at `now`.
    pub fn broadcast_record(&self, now: i64) -> Value {
        json!({ "dhh": self.frame(now, false), "hearing": self.frame(now, true) })
    }

    /// Next instant a broadcast is needed after one at `at`, absent input.
    fn wake_after(&self, at: i64) -> Option<i64> {
        let visible = self.visible(at);
        let tick = visible
            .iter()
            .any(|u| u.times.last().is_some_and(|&t| t > at))
            .then_some(at + TICK_MS);
        let expiry = visible.iter().filter_map(|u| u.expiry(&self.config)).min();
        match (tick, expiry) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Rebuilds the session from scratch by folding `inputs` in order, returning
/// the state and the outcome of each input.
pub fn fold(
    session_id: &str,
    config: &CaptionConfig,
    inputs: &[(i64, RefInput)],
) -> (RefState, Vec<Outcome>) {
    let mut state = RefState::new(session_id, config.clone());
    let outcomes = inputs.iter().map(|(at, input)| state.apply(*at, input)).collect();
    (state, outcomes)
}

/// Runs `inputs` (sorted by time) on a virtual clock and returns every
/// broadcast record in order.
///
/// Inputs sharing a timestamp are applied together before at most one
/// broadcast. A broadcast happens at an input time if any input changed
/// state or a scheduled wake falls due then, and otherwise at each wake:
/// every [`TICK_MS`] while graphemes remain unrevealed, and exactly at each
/// expiry deadline. Scheduling recomputes the full state from scratch.
pub fn simulate(session_id: &str, config: &CaptionConfig, inputs: &[(i64, RefInput)]) -> Vec<Value> {
    let mut out = Vec::new();
    let mut applied: Vec<(i64, RefInput)> = Vec::new();
    let mut wake: Option<i64> = None;
    let mut i = 0;

    loop {
        let next_input = inputs.get(i).map(|(t, _)| *t);
        let at = match (wake, next_input) {
            (Some(w), Some(t)) if w < t => w,
            (Some(w), None) => w,
            (_, Some(t)) => {
                let mut changed = false;
                while i < inputs.len() && inputs[i].0 == t {
                    applied.push(inputs[i].clone());
                    let (_, outcomes) = fold(session_id, config, &applied);
                    changed |= outcomes.last().unwrap().changed();
                    i += 1;
                }
                if !changed && wake != Some(t) {
                    continue;
                }
                t
            }
            (None, None) => break,
        };
        let (state, _) = fold(session_id, config, &applied);
        out.push(state.broadcast_record(at));
        wake = state.wake_after(at);
    }
    out
}
