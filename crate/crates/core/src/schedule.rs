use crate::Millis;

/// Reveal deadlines for `next` given the previous hypothesis of the same
/// utterance.
///
/// Graphemes in the longest common prefix with `prev` keep their old
/// deadlines. The rest are spaced `1000 / reveal_rate` ms apart, the first one
/// a full step after `max(now, last kept deadline)`. With no kept prefix the
/// schedule restarts at `now`, first grapheme immediately.
///
/// Offsets are computed as `round(k * 1000 / rate)` from the base, so spacing
/// never accumulates rounding drift and the result is non-decreasing.
pub fn compute_reveal_schedule(
    prev: Option<(&[String], &[Millis])>,
    next: &[String],
    now: Millis,
    reveal_rate: f64,
) -> Vec<Millis> {
    let step = |k: usize| (k as f64 * 1000.0 / reveal_rate).round() as Millis;

    let (kept, base, first_k) = match prev {
        Some((prev_graphemes, prev_times)) => {
            let common = prev_graphemes
                .iter()
                .zip(next)
                .take_while(|(a, b)| a == b)
                .count()
                .min(prev_times.len());
            match common.checked_sub(1).map(|i| prev_times[i]) {
                Some(last_kept) => (&prev_times[..common], now.max(last_kept), 1),
                None => (&prev_times[..0], now, 0),
            }
        }
        None => (&[][..], now, 0),
    };

    let mut times = Vec::with_capacity(next.len());
    times.extend_from_slice(kept);
    times.extend((0..next.len() - kept.len()).map(|i| base + step(i + first_k)));
    times
}
