//! Review text normalization and tokenization.
//!
//! [`preprocess`] runs, in order: hyperlink removal, contraction expansion,
//! punctuation padding, whitespace normalization, lowercasing and splitting.

use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

/// Punctuation characters that always become standalone tokens.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '(', ')', '"'];

const CONTRACTIONS_TSV: &str = include_str!("../data/contractions.tsv");

/// Ordered list of normalized tokens for one review.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(v: Vec<String>) -> Self {
        Self(v)
    }
}

impl<'a> From<&[&'a str]> for TokenSequence {
    fn from(v: &[&'a str]) -> Self {
        Self(v.iter().map(|s| s.to_string()).collect())
    }
}

static URL_RUN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s*(?:(?:\bhttps?://|\bwww\.)\S*\s*)+").expect("static regex")
});

static APOSTROPHE_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\p{L}+['’]\p{L}+").expect("static regex"));

struct ContractionTable {
    words: Vec<(String, String)>,
    suffixes: Vec<(String, String)>,
}

static CONTRACTIONS: LazyLock<ContractionTable> = LazyLock::new(|| {
    let mut words = Vec::new();
    let mut suffixes = Vec::new();
    for line in CONTRACTIONS_TSV.lines() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (from, to) = line.split_once('\t').expect("contraction table rows are tab separated");
        match from.strip_prefix('-') {
            Some(suffix) => suffixes.push((suffix.to_string(), to.to_string())),
            None => words.push((from.to_string(), to.to_string())),
        }
    }
    ContractionTable { words, suffixes }
});

/// Removes `http://`, `https://` and `www.` links up to the next whitespace.
/// The whitespace around a removed link collapses to a single space.
pub fn strip_hyperlinks(text: &str) -> String {
    URL_RUN
        .replace_all(text, |caps: &Captures<'_>| {
            let m = caps.get(0).expect("whole match");
            if m.start() == 0 || m.end() == text.len() {
                ""
            } else {
                " "
            }
        })
        .into_owned()
}

/// Collapses whitespace runs to one space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn match_case(template: &str, expansion: &str) -> String {
    let letters: Vec<char> = template.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return expansion.to_uppercase();
    }
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = expansion.chars();
        if let Some(first) = chars.next() {
            return first.to_uppercase().chain(chars).collect();
        }
    }
    expansion.to_string()
}

fn expand_word(word: &str) -> Option<String> {
    let table = &*CONTRACTIONS;
    let normalized = word.replace('’', "'").to_lowercase();
    if let Some((_, to)) = table.words.iter().find(|(from, _)| *from == normalized) {
        return Some(match_case(word, to));
    }
    for (suffix, to) in &table.suffixes {
        if normalized.len() > suffix.len() && normalized.ends_with(suffix.as_str()) {
            // The suffix is ASCII apart from a possible curly apostrophe, so
            // count it back in chars on the original word.
            let suffix_chars = suffix.chars().count();
            let split = word
                .char_indices()
                .rev()
                .nth(suffix_chars - 1)
                .map(|(i, _)| i)?;
            let (stem, tail) = word.split_at(split);
            if stem.is_empty() {
                return None;
            }
            let tail_letters: Vec<char> = tail.chars().filter(|c| c.is_alphabetic()).collect();
            let expansion = if tail_letters.iter().all(|c| c.is_uppercase()) {
                to.to_uppercase()
            } else {
                to.clone()
            };
            return Some(format!("{stem} {expansion}"));
        }
    }
    None
}

/// Rewrites informal contractions (`I'll`, `don't`, ...) to their formal form.
/// Possessive `'s` is left untouched.
pub fn expand_contractions(text: &str) -> String {
    APOSTROPHE_WORD
        .replace_all(text, |caps: &Captures<'_>| {
            let word = &caps[0];
            expand_word(word).unwrap_or_else(|| word.to_string())
        })
        .into_owned()
}

/// Turns every character of [`PUNCTUATION`] into a standalone token separated
/// by single spaces.
pub fn pad_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut after_punct = false;
    for c in text.chars() {
        if PUNCTUATION.contains(&c) {
            while out.ends_with(' ') {
                out.pop();
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push(c);
            after_punct = true;
        } else if after_punct && c == ' ' {
            // swallowed; a single separator is added before the next token
        } else {
            if after_punct {
                out.push(' ');
                after_punct = false;
            }
            out.push(c);
        }
    }
    out
}

/// Full normalization pipeline producing the token sequence.
pub fn preprocess(text: &str) -> TokenSequence {
    let text = strip_hyperlinks(text);
    let text = expand_contractions(&text);
    let text = pad_punctuation(&text);
    let text = normalize_whitespace(&text);
    let text = text.to_lowercase();
    TokenSequence(text.split_whitespace().map(str::to_string).collect())
}
