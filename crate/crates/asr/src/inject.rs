use duplexcap_core::{graphemes, EventKind, TranscriptEvent};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOWER: &str = "abcdefghijklmnopqrstuvwxyz";
const UPPER: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn substitute_char(original: &str, rng: &mut ChaCha8Rng) -> String {
    let pick_ascii = |set: &str, rng: &mut ChaCha8Rng| loop {
        let c = set.as_bytes()[rng.gen_range(0..set.len())] as char;
        if c.to_string() != original {
            return c.to_string();
        }
    };
    let first = original.chars().next().unwrap_or('a');
    if first.is_ascii_uppercase() {
        pick_ascii(UPPER, rng)
    } else if first.is_ascii() {
        pick_ascii(LOWER, rng)
    } else {
        // hiragana stands in for any non-ASCII script
        loop {
            let c = char::from_u32(rng.gen_range(0x3041..=0x3096)).unwrap();
            if c.to_string() != original {
                return c.to_string();
            }
        }
    }
}

/// Returns a variant of `word` that differs from it: interior graphemes are
/// shuffled, falling back to replacing one grapheme when the word is too
/// short or the shuffle is a no-op.
pub fn scramble_word(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut g = graphemes(word);
    if g.is_empty() {
        return String::new();
    }
    if g.len() >= 4 {
        let original = g.clone();
        let last = g.len() - 1;
        g[1..last].shuffle(rng);
        if g != original {
            return g.concat();
        }
    }
    let i = rng.gen_range(0..g.len());
    g[i] = substitute_char(&g[i], rng);
    g.concat()
}

/// Iterator adapter perturbing `final` events; see [`inject_errors`].
#[derive(Debug, Clone)]
pub struct ErrorInjector<I> {
    inner: I,
    rate: f64,
    rng: ChaCha8Rng,
}

impl<I: Iterator<Item = TranscriptEvent>> Iterator for ErrorInjector<I> {
    type Item = TranscriptEvent;

    fn next(&mut self) -> Option<TranscriptEvent> {
        let mut event = self.inner.next()?;
        if event.kind == EventKind::Final {
            let words: Vec<String> = event
                .text
                .split(' ')
                .map(|w| {
                    if !w.is_empty() && self.rng.gen_bool(self.rate) {
                        scramble_word(w, &mut self.rng)
                    } else {
                        w.to_owned()
                    }
                })
                .collect();
            event.text = words.join(" ");
        }
        Some(event)
    }
}

/// Replaces each word of every `final` event with a scrambled variant with
/// probability `substitution_rate`. Partials pass through untouched. The
/// output is a pure function of the input, the rate and the seed.
///
/// # Panics
///
/// If `substitution_rate` is outside `[0, 1]`.
pub fn inject_errors<I>(stream: I, substitution_rate: f64, seed: u64) -> ErrorInjector<I::IntoIter>
where
    I: IntoIterator<Item = TranscriptEvent>,
{
    assert!(
        (0.0..=1.0).contains(&substitution_rate),
        "substitution rate {substitution_rate} outside [0, 1]"
    );
    ErrorInjector {
        inner: stream.into_iter(),
        rate: substitution_rate,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}
