//! Small lexical helpers shared by the mock backends and the parsers.

/// Lower-cased word tokens. Hyphens and apostrophes inside a word are kept.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .map(|t| t.trim_matches(|c| c == '-' || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token runs that a multi-word phrase may not cross: clauses separated by
/// punctuation or line breaks.
pub fn phrase_segments(text: &str) -> Vec<Vec<String>> {
    text.split(|c: char| {
        c == '\n' || c == '\r' || !(c.is_alphanumeric() || c.is_whitespace() || c == '-' || c == '\'')
    })
    .map(word_tokens)
    .filter(|seg| !seg.is_empty())
    .collect()
}

/// Strips quotes, brackets, list markers, and trailing punctuation around a word or phrase.
pub fn strip_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || "\"'`*.,;:!?()[]{}<>".contains(c))
}
