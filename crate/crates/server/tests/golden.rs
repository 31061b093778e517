//! Golden records are produced by the reference simulator. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

mod common;

use common::*;
use duplexcap_core::CaptionConfig;

#[test]
fn goldens_match_reference_simulator() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for name in CASES {
        let inputs = case_inputs(name);
        let lines = reference_lines(&CaptionConfig::default(), &inputs);
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        if update {
            std::fs::write(golden_path(name), &text).unwrap();
        }
        let golden = std::fs::read_to_string(golden_path(name)).unwrap();
        assert!(golden == text, "{name}: reference simulator drifted from golden");
    }
}

#[test]
fn production_matches_goldens() {
    for name in CASES {
        let got = production_lines(&CaptionConfig::default(), &case_inputs(name));
        let golden = std::fs::read_to_string(golden_path(name)).unwrap();
        let want: Vec<&str> = golden.lines().collect();
        assert_eq!(got.len(), want.len(), "{name}: broadcast count");
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_eq!(g, w, "{name}: record {i}");
        }
    }
}
