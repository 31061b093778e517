use std::ops::Range;

fn is_space(g: &str) -> bool {
    g == " "
}

/// Greedy word wrap over grapheme clusters, returning each line as an index
/// range into `graphemes`.
///
/// Words are runs between single `" "` graphemes. A word that does not fit on
/// the current line starts a new one and the separating space is dropped, so
/// consecutive ranges are either adjacent (a hard break inside a word longer
/// than `line_width`) or separated by exactly one space index.
///
/// For normalized text (no leading, trailing or repeated spaces) no empty
/// line is produced.
pub fn wrap_spans<S: AsRef<str>>(graphemes: &[S], line_width: usize) -> Vec<Range<usize>> {
    assert!(line_width >= 1, "line_width must be at least 1");
    let mut lines = Vec::new();
    if graphemes.is_empty() {
        return lines;
    }

    // current line as [start, end)
    let mut current: Option<Range<usize>> = None;
    let mut word_start = 0;
    let n = graphemes.len();
    for i in 0..=n {
        if i < n && !is_space(graphemes[i].as_ref()) {
            continue;
        }
        let word = word_start..i;
        word_start = i + 1;

        if let Some(line) = current.as_mut() {
            if line.len() + 1 + word.len() <= line_width {
                line.end = word.end;
                continue;
            }
            lines.push(current.take().unwrap());
        }

        // word begins a fresh line, hard-broken if it is too long
        let mut start = word.start;
        while word.end - start > line_width {
            lines.push(start..start + line_width);
            start += line_width;
        }
        current = Some(start..word.end);
    }
    lines.extend(current);
    lines
}

/// [`wrap_spans`] materialized as grapheme sequences.
pub fn wrap_text<S: AsRef<str>>(graphemes: &[S], line_width: usize) -> Vec<Vec<String>> {
    wrap_spans(graphemes, line_width)
        .into_iter()
        .map(|r| graphemes[r].iter().map(|g| g.as_ref().to_owned()).collect())
        .collect()
}
