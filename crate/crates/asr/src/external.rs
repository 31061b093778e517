use std::collections::{HashMap, HashSet};

use duplexcap_core::{normalize_text, EventKind, Millis, SessionId, TranscriptEvent, UtteranceId};
use serde::{Deserialize, Serialize};

/// Interim or final result from a streaming recognizer. `transcript` is the
/// whole current hypothesis for `result_id`, not a diff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAsrMessage {
    pub result_id: String,
    pub is_final: bool,
    pub transcript: String,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub stability: Option<f64>,
}

/// Assigns per-result sequence numbers and stops a result once it is final.
#[derive(Debug, Clone)]
pub struct AsrMapper {
    session_id: SessionId,
    last_seq: HashMap<String, i64>,
    finalized: HashSet<String>,
}

fn fraction_ok(x: Option<f64>) -> bool {
    x.map_or(true, |x| (0.0..=1.0).contains(&x))
}

impl AsrMapper {
    pub fn new(session_id: SessionId) -> Self {
        Self { session_id, last_seq: HashMap::new(), finalized: HashSet::new() }
    }

    /// Maps one upstream message, stamping `now` as both source and receive
    /// time. Returns `None`, with a warning, for messages that cannot become
    /// a valid event.
    pub fn map(&mut self, msg: &ExternalAsrMessage, now: Millis) -> Option<TranscriptEvent> {
        if msg.result_id.is_empty() {
            tracing::warn!("dropping ASR message without result_id");
            return None;
        }
        if self.finalized.contains(&msg.result_id) {
            tracing::warn!(result_id = %msg.result_id, "dropping ASR message after final result");
            return None;
        }
        if !fraction_ok(msg.confidence) || !fraction_ok(msg.stability) {
            tracing::warn!(result_id = %msg.result_id, "dropping ASR message with out-of-range score");
            return None;
        }
        let text = normalize_text(&msg.transcript);
        if msg.is_final && text.is_empty() {
            tracing::warn!(result_id = %msg.result_id, "dropping empty final ASR result");
            return None;
        }

        let seq = self.last_seq.entry(msg.result_id.clone()).or_insert(0);
        *seq += 1;
        let kind = if msg.is_final {
            self.finalized.insert(msg.result_id.clone());
            EventKind::Final
        } else {
            EventKind::Partial
        };
        Some(TranscriptEvent {
            session_id: self.session_id.clone(),
            utterance_id: UtteranceId(msg.result_id.clone()),
            seq: *seq,
            kind,
            text,
            confidence: msg.confidence,
            source_ts: now,
            recv_ts: now,
        })
    }
}
