use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{domain, Error, Result};
use crate::losses::CharVocab;

/// Lowercase, fold accents (NFD then drop combining marks), keep only
/// `a`-`z` and spaces, collapse runs of spaces and trim.
pub fn normalize_text(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfd().filter(|c| !is_combining_mark(*c)).flat_map(char::to_lowercase) {
        if c.is_ascii_lowercase() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else if c.is_whitespace() {
            pending_space = true;
        }
    }
    if out.is_empty() {
        return Err(Error::Normalization(format!("{raw:?} has no letters left after normalization")));
    }
    Ok(out)
}

pub fn tokenize(text: &str) -> Result<Vec<usize>> {
    text.chars()
        .map(|c| CharVocab::index(c).ok_or_else(|| domain!("character {c:?} is not in the vocabulary")))
        .collect()
}

/// Inverse of [`tokenize`]; pad, sos and eos are dropped.
pub fn detokenize(tokens: &[usize]) -> String {
    tokens.iter().filter_map(|&t| CharVocab::symbol(t)).collect()
}
