use serde::{Deserialize, Serialize};

use crate::config::CaptionConfig;
use crate::error::FrameError;
use crate::event::UtteranceId;
use crate::state::{SessionState, UtteranceStatus};
use crate::wrap::wrap_spans;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Dhh,
    Hearing,
}

/// One wrapped line; never spans two utterances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub utterance_id: UtteranceId,
    pub retracted: bool,
    pub graphemes: Vec<String>,
    /// Absolute reveal deadlines, parallel to `graphemes`.
    pub reveal_times: Vec<Millis>,
}

/// Immutable render state for one face at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionFrame {
    pub face: Face,
    pub mirrored: bool,
    pub scale: f64,
    pub lines: Vec<CaptionLine>,
    pub frame_ts: Millis,
    pub config_rev: u64,
}

impl CaptionFrame {
    /// Whether both frames carry the same lines, ignoring face metadata.
    pub fn same_content(&self, other: &CaptionFrame) -> bool {
        self.lines == other.lines
    }
}

/// Lays out every visible utterance oldest-first, scrolling off the oldest
/// whole lines once `max_lines` is exceeded.
pub fn layout_frame(
    state: &SessionState,
    config: &CaptionConfig,
    config_rev: u64,
    face: Face,
    now: Millis,
) -> CaptionFrame {
    let mut lines = Vec::new();
    for u in state.utterances.iter().filter(|u| !u.is_expired(config, now)) {
        let retracted = u.status == UtteranceStatus::Retracted;
        lines.extend(wrap_spans(&u.graphemes, config.line_width).into_iter().map(|span| {
            CaptionLine {
                utterance_id: u.utterance_id.clone(),
                retracted,
                graphemes: u.graphemes[span.clone()].to_vec(),
                reveal_times: u.reveal_times[span].to_vec(),
            }
        }));
    }
    let overflow = lines.len().saturating_sub(config.max_lines);
    lines.drain(..overflow);

    let frame = CaptionFrame {
        face: Face::Dhh,
        mirrored: false,
        scale: 1.0,
        lines,
        frame_ts: now,
        config_rev,
    };
    match face {
        Face::Dhh => frame,
        Face::Hearing => mirror_frame(frame, config).expect("dhh frame mirrors"),
    }
}

/// Turns a DHH frame into the hearing-face frame. Only face metadata changes;
/// the text itself is never reversed.
pub fn mirror_frame(frame: CaptionFrame, config: &CaptionConfig) -> Result<CaptionFrame, FrameError> {
    if frame.face != Face::Dhh {
        return Err(FrameError::InvalidFace);
    }
    Ok(CaptionFrame { face: Face::Hearing, mirrored: true, scale: config.mirror_scale, ..frame })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EventKind, TranscriptEvent};

    fn fin(utt: &str, text: &str) -> TranscriptEvent {
        TranscriptEvent {
            session_id: "s".into(),
            utterance_id: utt.into(),
            seq: 1,
            kind: EventKind::Final,
            text: text.into(),
            confidence: None,
            source_ts: 0,
            recv_ts: 0,
        }
    }

    fn texts(frame: &CaptionFrame) -> Vec<String> {
        frame.lines.iter().map(|l| l.graphemes.concat()).collect()
    }

    #[test]
    fn empty_state_has_no_lines() {
        let st = SessionState::new("s".into());
        let f = layout_frame(&st, &CaptionConfig::default(), 0, Face::Dhh, 0);
        assert!(f.lines.is_empty());
        assert_eq!((f.face, f.mirrored, f.scale), (Face::Dhh, false, 1.0));
    }

    #[test]
    fn single_utterance_wraps() {
        let cfg = CaptionConfig { line_width: 5, max_lines: 2, ..CaptionConfig::default() };
        let mut st = SessionState::new("s".into());
        st.ingest_event(&fin("u", "hello world"), 0, &cfg).unwrap();
        let f = layout_frame(&st, &cfg, 0, Face::Dhh, 0);
        assert_eq!(texts(&f), ["hello", "world"]);
        // the dropped space keeps its slot in the schedule
        assert_eq!(f.lines[1].reveal_times, st.utterances[0].reveal_times[6..]);
    }

    #[test]
    fn scroll_keeps_newest_lines() {
        let cfg = CaptionConfig { line_width: 8, max_lines: 3, ..CaptionConfig::default() };
        let mut st = SessionState::new("s".into());
        st.ingest_event(&fin("a", "aaaa bbbb"), 0, &cfg).unwrap();
        st.ingest_event(&fin("b", "cccc"), 0, &cfg).unwrap();
        st.ingest_event(&fin("c", "dddd eeee"), 0, &cfg).unwrap();

        // reference: the full line list, truncated from the front
        let full = ["aaaa", "bbbb", "cccc", "dddd", "eeee"];
        let f = layout_frame(&st, &cfg, 0, Face::Dhh, 0);
        assert_eq!(texts(&f), full[full.len() - 3..]);
        let ids: Vec<_> = f.lines.iter().map(|l| l.utterance_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "c"]);
    }

    #[test]
    fn expired_utterances_hidden_before_prune() {
        let cfg = CaptionConfig::default();
        let mut st = SessionState::new("s".into());
        st.ingest_event(&fin("u", "x"), 0, &cfg).unwrap();
        assert_eq!(layout_frame(&st, &cfg, 0, Face::Dhh, cfg.linger_ms - 1).lines.len(), 1);
        assert!(layout_frame(&st, &cfg, 0, Face::Dhh, cfg.linger_ms).lines.is_empty());
    }

    #[test]
    fn mirror_changes_metadata_only() {
        let cfg = CaptionConfig { mirror_scale: 0.3, ..CaptionConfig::default() };
        let mut st = SessionState::new("s".into());
        st.ingest_event(&fin("u", "hi"), 0, &cfg).unwrap();
        let dhh = layout_frame(&st, &cfg, 7, Face::Dhh, 0);
        let hearing = mirror_frame(dhh.clone(), &cfg).unwrap();
        assert_eq!(texts(&hearing), ["hi"]);
        assert!(hearing.same_content(&dhh));
        assert_eq!((hearing.face, hearing.mirrored, hearing.scale), (Face::Hearing, true, 0.3));
        assert_eq!((hearing.frame_ts, hearing.config_rev), (dhh.frame_ts, dhh.config_rev));
        assert_eq!(hearing, layout_frame(&st, &cfg, 7, Face::Hearing, 0));
    }

    #[test]
    fn mirror_empty_and_twice() {
        let cfg = CaptionConfig::default();
        let st = SessionState::new("s".into());
        let once = mirror_frame(layout_frame(&st, &cfg, 0, Face::Dhh, 0), &cfg).unwrap();
        assert!(once.lines.is_empty() && once.mirrored);
        assert_eq!(mirror_frame(once, &cfg), Err(FrameError::InvalidFace));
    }

    #[test]
    fn retracted_flag_carries_to_lines() {
        let cfg = CaptionConfig::default();
        let mut st = SessionState::new("s".into());
        st.ingest_event(&fin("u", "wrong words"), 0, &cfg).unwrap();
        st.retract_utterance(&"u".into(), 10, &cfg).unwrap();
        let f = layout_frame(&st, &cfg, 0, Face::Dhh, 10);
        assert!(f.lines.iter().all(|l| l.retracted));
    }
}
