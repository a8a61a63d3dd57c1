//! Small string normalization helpers shared by metrics, filtering and
//! manifest preparation.

/// Trims and replaces every run of whitespace with a single space.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, trim, collapse whitespace, and drop one terminal period.
pub fn normalize_answer(s: &str) -> String {
    let mut out = collapse_whitespace(&s.to_lowercase());
    while out.ends_with('.') {
        out.pop();
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
    }
    out
}

/// Lowercased alphanumeric words, used for n-gram and keyword matching.
pub fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Whether `needle` occurs in `haystack` as a whole word (case-insensitive).
pub fn contains_word(haystack: &str, needle: &str) -> bool {
    words(haystack).iter().any(|w| w == needle)
}

/// 64-bit FNV-1a; stable across platforms and releases, used to derive
/// per-sample seeds.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
