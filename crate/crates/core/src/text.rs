//! Text normalization shared by the lexical index and candidate generation.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalize, case-fold, trim, and collapse internal whitespace runs.
pub fn fold(text: &str) -> String {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased alphanumeric tokens in original order.
///
/// Anything that is not a Unicode letter or digit separates tokens, so
/// `"Three_Gorges-District"` yields `three`, `gorges`, `district`.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text.nfc().collect::<String>().to_lowercase();
    folded
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
