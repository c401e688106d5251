use std::sync::LazyLock;

use regex::Regex;

/// Appended to descriptions that were cut short.
pub const TRUNCATION_MARKER: char = '…';

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());

/// Strips markup tags, collapses whitespace and cuts the result to at most
/// `max_chars` characters at a word boundary, appending [`TRUNCATION_MARKER`]
/// when anything was removed.
///
/// Lengths are counted in Unicode scalar values. The output never exceeds
/// `max_chars + 1` characters, and the function is idempotent for a fixed
/// limit: text that already ends in the marker and fits within the limit
/// plus the marker is left alone.
pub fn filter_and_truncate(text: &str, max_chars: usize) -> String {
    let stripped = TAG.replace_all(text, " ");
    let stripped = stripped.replace("&nbsp;", " ");
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");

    let len = collapsed.chars().count();
    if len <= max_chars {
        return collapsed;
    }
    if len == max_chars + 1 && collapsed.ends_with(TRUNCATION_MARKER) {
        return collapsed;
    }

    // Byte offset of the first character past the limit.
    let cut = collapsed
        .char_indices()
        .nth(max_chars)
        .map(|(i, _)| i)
        .unwrap_or(collapsed.len());
    let head = &collapsed[..cut];
    let body = if collapsed[cut..].starts_with(' ') {
        head
    } else {
        match head.rfind(' ') {
            Some(space) => &head[..space],
            // A single word longer than the limit: hard cut.
            None => head,
        }
    };
    let mut out = body.trim_end().to_string();
    out.push(TRUNCATION_MARKER);
    out
}

/// Rough token count: `ceil(chars / 4)`. A budgeting heuristic, not a tokenizer.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}
