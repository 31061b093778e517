#![allow(dead_code)]

use std::path::PathBuf;

use duplexcap_asr::{read_script, ReplaySource};
use duplexcap_core::{CaptionConfig, Millis, TranscriptEvent};
use duplexcap_refsim::RefInput;
use duplexcap_server::{merge_inputs, read_commands, run_virtual, ControlCommand, Input, Runtime, TimedInput};

pub const CASES: [&str; 3] = ["directions", "cafe", "meeting"];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn case_events(name: &str) -> Vec<TranscriptEvent> {
    let entries = read_script(data_dir().join(format!("{name}.jsonl"))).unwrap();
    ReplaySource::new("default".into(), entries).unwrap().fast_events().collect()
}

pub fn case_inputs(name: &str) -> Vec<TimedInput> {
    let commands = read_commands(data_dir().join(format!("{name}.commands.jsonl"))).unwrap();
    merge_inputs(case_events(name), commands)
}

pub fn golden_path(name: &str) -> PathBuf {
    data_dir().join(format!("{name}.golden.jsonl"))
}

pub fn to_ref(inputs: &[TimedInput]) -> Vec<(Millis, RefInput)> {
    inputs
        .iter()
        .map(|i| {
            let r = match &i.input {
                Input::Event(e) => RefInput::Event(e.clone()),
                Input::Command(ControlCommand::RetractLast) => RefInput::RetractLast,
                Input::Command(ControlCommand::RetractId(id)) => RefInput::RetractId(id.to_string()),
                Input::Command(ControlCommand::Clear) => RefInput::Clear,
                Input::Command(ControlCommand::ConfigPatch(p)) => RefInput::Config(p.clone()),
            };
            (i.at, r)
        })
        .collect()
}

/// Production broadcast records for a timeline.
pub fn production_lines(config: &CaptionConfig, inputs: &[TimedInput]) -> Vec<String> {
    let mut rt = Runtime::new("default".into(), config, 0);
    rt.set_logging(false);
    run_virtual(&mut rt, inputs).iter().map(|b| b.record_line()).collect()
}

pub fn reference_lines(config: &CaptionConfig, inputs: &[TimedInput]) -> Vec<String> {
    duplexcap_refsim::simulate("default", config, &to_ref(inputs))
        .iter()
        .map(|v| v.to_string())
        .collect()
}

pub fn event(utt: &str, seq: i64, kind: duplexcap_core::EventKind, text: &str, at: Millis) -> TranscriptEvent {
    TranscriptEvent {
        session_id: "default".into(),
        utterance_id: utt.into(),
        seq,
        kind,
        text: text.into(),
        confidence: None,
        source_ts: at,
        recv_ts: at,
    }
}

pub mod random {
    use duplexcap_core::{CaptionConfig, ConfigPatch, EventKind, Millis};
    use duplexcap_server::{ControlCommand, Input, TimedInput};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    const WORDS: &[&str] = &[
        "the", "train", "station", "is", "north", "ok", "supercalifragilistic", "こんにちは", "駅",
        "👋", "👩‍👩‍👧", "🇯🇵", "café", "e\u{301}te\u{301}", "한국어", "x",
    ];

    pub fn text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
        let n = rng.gen_range(1..=max_words);
        let mut s = String::new();
        for i in 0..n {
            if i > 0 {
                s.push_str([" ", "  ", "\t", " "][rng.gen_range(0..4)]);
            }
            s.push_str(WORDS.choose(rng).unwrap());
        }
        s
    }

    pub fn config(rng: &mut ChaCha8Rng) -> CaptionConfig {
        CaptionConfig {
            line_width: rng.gen_range(8..=30),
            max_lines: rng.gen_range(1..=5),
            reveal_rate: rng.gen_range(5.0..60.0),
            linger_ms: rng.gen_range(500..3000),
            retract_linger_ms: rng.gen_range(0..2000),
            mirror_scale: rng.gen_range(0.1..=1.0),
            ..CaptionConfig::default()
        }
    }

    fn patch(rng: &mut ChaCha8Rng) -> ConfigPatch {
        let mut fields = Vec::new();
        if rng.gen_bool(0.5) {
            fields.push(("mirror_scale".to_string(), json!(rng.gen_range(0.0..1.2))));
        }
        if rng.gen_bool(0.4) {
            fields.push(("line_width".to_string(), json!(rng.gen_range(0..40))));
        }
        if rng.gen_bool(0.3) {
            fields.push(("max_lines".to_string(), json!(rng.gen_range(1..6))));
        }
        if rng.gen_bool(0.3) {
            fields.push(("reveal_rate".to_string(), json!(rng.gen_range(1.0..80.0))));
        }
        if rng.gen_bool(0.05) {
            fields.push(("bogus".to_string(), json!(1)));
        }
        fields.into_iter().collect()
    }

    /// A config and a sorted timeline of events and commands over a handful
    /// of utterances, including stale and invalid inputs.
    pub fn session(rng: &mut ChaCha8Rng) -> (CaptionConfig, Vec<TimedInput>) {
        let cfg = config(rng);
        let mut out = Vec::new();
        let mut at: Millis = rng.gen_range(0..50);
        let mut seqs: Vec<i64> = Vec::new();
        for _ in 0..rng.gen_range(5..40) {
            at += [0, 0, 10, 33, 100, 250, 600, 1500][rng.gen_range(0..8)];
            let input = match rng.gen_range(0..100) {
                0..=54 => {
                    let u = if seqs.is_empty() || rng.gen_bool(0.25) {
                        seqs.push(0);
                        seqs.len() - 1
                    } else {
                        rng.gen_range(0..seqs.len())
                    };
                    let seq = if rng.gen_bool(0.1) { seqs[u] } else { seqs[u] + 1 };
                    seqs[u] = seqs[u].max(seq);
                    let kind = if rng.gen_bool(0.3) { EventKind::Final } else { EventKind::Partial };
                    Input::Event(super::event(&format!("u{u}"), seq, kind, &text(rng, 6), at))
                }
                55..=69 => Input::Command(ControlCommand::RetractLast),
                70..=77 => Input::Command(ControlCommand::RetractId(
                    format!("u{}", rng.gen_range(0..seqs.len().max(1) + 1)).into(),
                )),
                78..=81 => Input::Command(ControlCommand::Clear),
                _ => Input::Command(ControlCommand::ConfigPatch(patch(rng))),
            };
            out.push(TimedInput { at, input });
        }
        (cfg, out)
    }
}
