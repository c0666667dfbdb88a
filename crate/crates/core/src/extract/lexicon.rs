//! Keyword lexicons and whole-word phrase matching.

use std::fmt;
use std::path::Path;

use regex::Regex;
use sha2::{Digest, Sha256};

use super::ExtractError;

/// Phrases describing metastatic spread, in their canonical lowercase form.
pub const DEFAULT_PHRASES: &[&str] = &[
    "metastasis",
    "metastatic",
    "metastasize",
    "metastases",
    "metastasized",
    "dissemination",
    "distant spread",
    "metachronous",
    "hematogenous spread",
    "lymphatic spread",
    "micrometastases",
    "infiltration",
    "tumor spread",
    "extra-nodal extension",
];

/// A phrase compiled for case-insensitive whole-word search.
///
/// Words inside the phrase match across any run of whitespace. A match only
/// counts when the characters on either side are not alphanumeric.
#[derive(Clone)]
pub struct Phrase {
    text: String,
    pattern: Regex,
}

impl Phrase {
    pub fn new(text: &str) -> Result<Self, ExtractError> {
        let normalized = normalize_phrase(text);
        if normalized.is_empty() {
            return Err(ExtractError::EmptyPhrase);
        }
        let body = normalized
            .split(' ')
            .map(regex::escape)
            .collect::<Vec<_>>()
            .join(r"\s+");
        let pattern = Regex::new(&format!("(?i){body}"))
            .map_err(|e| ExtractError::Pattern(normalized.clone(), e.to_string()))?;
        Ok(Self {
            text: normalized,
            pattern,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Byte ranges of every whole-word, non-overlapping occurrence in `text`.
    pub fn find_all(&self, text: &str) -> Vec<(usize, usize)> {
        let mut hits = Vec::new();
        let mut pos = 0;
        while pos <= text.len() {
            let Some(m) = self.pattern.find_at(text, pos) else {
                break;
            };
            if at_word_boundary(text, m.start(), m.end()) {
                hits.push((m.start(), m.end()));
                pos = m.end().max(m.start() + 1);
            } else {
                pos = next_char_boundary(text, m.start());
            }
        }
        hits
    }

    pub fn first_match(&self, text: &str) -> Option<(usize, usize)> {
        let mut pos = 0;
        while pos <= text.len() {
            let m = self.pattern.find_at(text, pos)?;
            if at_word_boundary(text, m.start(), m.end()) {
                return Some((m.start(), m.end()));
            }
            pos = next_char_boundary(text, m.start());
        }
        None
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.first_match(text).is_some()
    }
}

impl fmt::Debug for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Phrase").field(&self.text).finish()
    }
}

impl PartialEq for Phrase {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn next_char_boundary(text: &str, at: usize) -> usize {
    text[at..]
        .chars()
        .next()
        .map_or(text.len() + 1, |c| at + c.len_utf8())
}

fn at_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// Ordered, duplicate-free set of lowercase keyword phrases.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    phrases: Vec<Phrase>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::new(DEFAULT_PHRASES.iter().copied()).expect("built-in lexicon is valid")
    }
}

impl Lexicon {
    /// Builds a lexicon, lowercasing phrases and dropping repeats while
    /// keeping first-seen order.
    pub fn new<'a, I>(phrases: I) -> Result<Self, ExtractError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut compiled: Vec<Phrase> = Vec::new();
        for raw in phrases {
            let phrase = Phrase::new(raw)?;
            if !compiled.contains(&phrase) {
                compiled.push(phrase);
            }
        }
        if compiled.is_empty() {
            return Err(ExtractError::EmptyLexicon);
        }
        Ok(Self { phrases: compiled })
    }

    /// Parses the plain-text lexicon format: one phrase per line, blank
    /// lines ignored, `#` starts a comment.
    pub fn parse(source: &str) -> Result<Self, ExtractError> {
        let lines = source
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty());
        Self::new(lines)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExtractError> {
        let source = std::fs::read_to_string(path).map_err(|source| ExtractError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&source)
    }

    /// Loads `path` when given, otherwise the built-in metastasis lexicon.
    pub fn from_optional_file(path: Option<&Path>) -> Result<Self, ExtractError> {
        match path {
            Some(path) => Self::from_file(path),
            None => Ok(Self::default()),
        }
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(Phrase::as_str)
    }

    pub fn compiled(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// True when any phrase occurs in `text` as a whole word.
    pub fn contains_keyword(&self, text: &str) -> bool {
        self.phrases.iter().any(|p| p.is_match(text))
    }

    /// Phrases occurring in `text`, in lexicon order.
    pub fn matched_phrases(&self, text: &str) -> Vec<String> {
        self.phrases
            .iter()
            .filter(|p| p.is_match(text))
            .map(|p| p.as_str().to_string())
            .collect()
    }

    /// Total occurrences of all phrases in `text`.
    pub fn count_matches(&self, text: &str) -> usize {
        self.phrases.iter().map(|p| p.find_all(text).len()).sum()
    }

    /// Lexicon matches per character; zero for empty text.
    pub fn keyword_density(&self, text: &str) -> f64 {
        let chars = text.chars().count();
        if chars == 0 {
            return 0.0;
        }
        self.count_matches(text) as f64 / chars as f64
    }

    /// Hex SHA-256 over the phrases joined by newlines.
    pub fn fingerprint(&self) -> String {
        let joined = self.phrases().collect::<Vec<_>>().join("\n");
        hex::encode(Sha256::digest(joined.as_bytes()))
    }
}

/// Free-function form of [`Lexicon::contains_keyword`].
pub fn contains_keyword(text: &str, lexicon: &Lexicon) -> bool {
    lexicon.contains_keyword(text)
}
