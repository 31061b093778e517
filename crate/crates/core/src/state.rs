use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, CaptionConfig, ConfigPatch};
use crate::error::{ConfigError, IngestError, RetractError};
use crate::event::{EventKind, SessionId, TranscriptEvent, UtteranceId};
use crate::frame::{layout_frame, CaptionFrame, Face};
use crate::schedule::compute_reveal_schedule;
use crate::text::{graphemes, normalize_text};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtteranceStatus {
    Partial,
    Final,
    Retracted,
}

/// Accumulated state of one spoken unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: UtteranceId,
    pub status: UtteranceStatus,
    pub graphemes: Vec<String>,
    /// Reveal deadline per grapheme; same length as `graphemes`.
    pub reveal_times: Vec<Millis>,
    pub finalized_at: Option<Millis>,
    pub retracted_at: Option<Millis>,
    pub last_seq: i64,
}

impl Utterance {
    /// Instant at which the utterance stops being visible. Partials never
    /// expire on their own.
    pub fn expires_at(&self, config: &CaptionConfig) -> Option<Millis> {
        match self.status {
            UtteranceStatus::Partial => None,
            UtteranceStatus::Final => self.reveal_times.last().map(|t| t + config.linger_ms),
            UtteranceStatus::Retracted => self.retracted_at.map(|t| t + config.retract_linger_ms),
        }
    }

    pub fn is_expired(&self, config: &CaptionConfig, now: Millis) -> bool {
        self.expires_at(config).is_some_and(|t| now >= t)
    }

    pub fn text(&self) -> String {
        self.graphemes.concat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaReason {
    PartialUpdate,
    Finalized,
    Retracted,
    Expired,
    ConfigChanged,
    RejectedStale,
    Cleared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub changed: bool,
    pub reason: DeltaReason,
}

impl StateDelta {
    fn changed(reason: DeltaReason) -> Self {
        Self { changed: true, reason }
    }

    fn unchanged(reason: DeltaReason) -> Self {
        Self { changed: false, reason }
    }
}

/// Utterances of one session, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: SessionId,
    pub utterances: Vec<Utterance>,
    /// Ids that expired or were cleared; any later event for them is stale.
    pub closed: BTreeSet<UtteranceId>,
}

impl SessionState {
    pub fn new(session_id: SessionId) -> Self {
        Self { session_id, utterances: Vec::new(), closed: BTreeSet::new() }
    }

    pub fn utterance(&self, id: &UtteranceId) -> Option<&Utterance> {
        self.utterances.iter().find(|u| &u.utterance_id == id)
    }

    /// Folds one transcript event into the state.
    ///
    /// Events at or below the utterance's last accepted seq, and any event
    /// for an utterance that is no longer partial, are dropped with
    /// [`DeltaReason::RejectedStale`].
    pub fn ingest_event(
        &mut self,
        event: &TranscriptEvent,
        now: Millis,
        config: &CaptionConfig,
    ) -> Result<StateDelta, IngestError> {
        if event.session_id != self.session_id {
            return Err(IngestError::SessionMismatch {
                expected: self.session_id.clone(),
                got: event.session_id.clone(),
            });
        }
        if event.utterance_id.as_str().is_empty() {
            return Err(IngestError::MalformedEvent("empty utterance_id"));
        }
        if event.seq < 0 {
            return Err(IngestError::MalformedEvent("negative seq"));
        }
        let text = normalize_text(&event.text);
        if event.kind == EventKind::Final && text.is_empty() {
            return Err(IngestError::MalformedEvent("final event with empty text"));
        }

        if self.closed.contains(&event.utterance_id) {
            return Ok(StateDelta::unchanged(DeltaReason::RejectedStale));
        }
        let next = graphemes(&text);
        let utterance = match self.utterances.iter_mut().find(|u| u.utterance_id == event.utterance_id) {
            Some(u) if u.status != UtteranceStatus::Partial || event.seq <= u.last_seq => {
                return Ok(StateDelta::unchanged(DeltaReason::RejectedStale));
            }
            Some(u) => {
                u.reveal_times = compute_reveal_schedule(
                    Some((&u.graphemes, &u.reveal_times)),
                    &next,
                    now,
                    config.reveal_rate,
                );
                u.graphemes = next;
                u
            }
            None => {
                self.utterances.push(Utterance {
                    utterance_id: event.utterance_id.clone(),
                    status: UtteranceStatus::Partial,
                    reveal_times: compute_reveal_schedule(None, &next, now, config.reveal_rate),
                    graphemes: next,
                    finalized_at: None,
                    retracted_at: None,
                    last_seq: event.seq,
                });
                self.utterances.last_mut().unwrap()
            }
        };
        utterance.last_seq = event.seq;
        Ok(match event.kind {
            EventKind::Partial => StateDelta::changed(DeltaReason::PartialUpdate),
            EventKind::Final => {
                utterance.status = UtteranceStatus::Final;
                utterance.finalized_at = Some(now);
                StateDelta::changed(DeltaReason::Finalized)
            }
        })
    }

    /// Flags a visible final utterance as misrecognized.
    pub fn retract_utterance(
        &mut self,
        id: &UtteranceId,
        now: Millis,
        config: &CaptionConfig,
    ) -> Result<StateDelta, RetractError> {
        let u = self
            .utterances
            .iter_mut()
            .find(|u| &u.utterance_id == id && !u.is_expired(config, now))
            .ok_or_else(|| RetractError::NotFound(id.clone()))?;
        if u.status != UtteranceStatus::Final {
            return Err(RetractError::InvalidState { id: id.clone(), status: u.status });
        }
        u.status = UtteranceStatus::Retracted;
        u.retracted_at = Some(now);
        Ok(StateDelta::changed(DeltaReason::Retracted))
    }

    /// The most recently finalized utterance that is still visible and not
    /// retracted.
    pub fn last_retractable(&self, config: &CaptionConfig, now: Millis) -> Option<&UtteranceId> {
        self.utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.status == UtteranceStatus::Final && !u.is_expired(config, now))
            .max_by_key(|(i, u)| (u.finalized_at, *i))
            .map(|(_, u)| &u.utterance_id)
    }

    pub fn prune_expired(&mut self, config: &CaptionConfig, now: Millis) -> StateDelta {
        let closed = &mut self.closed;
        let before = self.utterances.len();
        self.utterances.retain(|u| {
            let keep = !u.is_expired(config, now);
            if !keep {
                closed.insert(u.utterance_id.clone());
            }
            keep
        });
        StateDelta { changed: self.utterances.len() != before, reason: DeltaReason::Expired }
    }

    /// Expires every utterance, partials included.
    pub fn clear(&mut self) -> StateDelta {
        let changed = !self.utterances.is_empty();
        for u in self.utterances.drain(..) {
            self.closed.insert(u.utterance_id);
        }
        StateDelta { changed, reason: DeltaReason::Cleared }
    }

    /// Earliest expiry deadline strictly after `now` among visible utterances.
    pub fn next_expiry(&self, config: &CaptionConfig, now: Millis) -> Option<Millis> {
        self.utterances
            .iter()
            .filter_map(|u| u.expires_at(config))
            .filter(|&t| t > now)
            .min()
    }

    /// Whether any visible grapheme is still waiting for its reveal deadline.
    pub fn is_revealing(&self, config: &CaptionConfig, now: Millis) -> bool {
        self.utterances
            .iter()
            .filter(|u| !u.is_expired(config, now))
            .any(|u| u.reveal_times.last().is_some_and(|&t| t > now))
    }
}

/// A session's state together with its active config and config revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    state: SessionState,
    config: CaptionConfig,
    config_rev: u64,
}

impl Session {
    pub fn new(session_id: SessionId, config: CaptionConfig) -> Self {
        Self { state: SessionState::new(session_id), config, config_rev: 0 }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.state.session_id
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &CaptionConfig {
        &self.config
    }

    pub fn config_rev(&self) -> u64 {
        self.config_rev
    }

    pub fn ingest(&mut self, event: &TranscriptEvent, now: Millis) -> Result<StateDelta, IngestError> {
        self.state.ingest_event(event, now, &self.config)
    }

    pub fn retract(&mut self, id: &UtteranceId, now: Millis) -> Result<StateDelta, RetractError> {
        self.state.retract_utterance(id, now, &self.config)
    }

    /// Retracts the most recently finalized visible caption.
    pub fn retract_last(&mut self, now: Millis) -> Result<(UtteranceId, StateDelta), RetractError> {
        let id = self
            .state
            .last_retractable(&self.config, now)
            .cloned()
            .ok_or(RetractError::NothingToRetract)?;
        let delta = self.retract(&id, now)?;
        Ok((id, delta))
    }

    pub fn clear(&mut self) -> StateDelta {
        self.state.clear()
    }

    pub fn prune_expired(&mut self, now: Millis) -> StateDelta {
        self.state.prune_expired(&self.config, now)
    }

    /// Applies a config patch atomically, bumping the revision on success.
    pub fn apply_config(&mut self, patch: &ConfigPatch) -> Result<StateDelta, ConfigError> {
        self.config = validate_config(patch, &self.config)?;
        self.config_rev += 1;
        Ok(StateDelta::changed(DeltaReason::ConfigChanged))
    }

    pub fn frame(&self, face: Face, now: Millis) -> CaptionFrame {
        layout_frame(&self.state, &self.config, self.config_rev, face, now)
    }

    pub fn next_expiry(&self, now: Millis) -> Option<Millis> {
        self.state.next_expiry(&self.config, now)
    }

    pub fn is_revealing(&self, now: Millis) -> bool {
        self.state.is_revealing(&self.config, now)
    }
}
