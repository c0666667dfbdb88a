//! Rule-based sentence segmentation for clinical free text.
//!
//! A sentence ends after a run of `.`, `!` or `?` (plus any closing quotes or
//! brackets) that is followed by whitespace or the end of the text. A lone
//! period after a listed abbreviation or a single-letter initial does not end
//! a sentence. A whitespace run holding two or more line breaks always does.

use serde::{Deserialize, Serialize};

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "vs", "e.g", "i.e", "etc", "fig", "no",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];

/// One sentence as a byte range over the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Sentences in document order. Spans never overlap and only whitespace
/// lies between consecutive spans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceList {
    pub sentences: Vec<Sentence>,
}

impl SentenceList {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    CLOSERS.contains(&c)
}

/// Whether the word directly before a lone period suppresses the break.
fn suppresses_break(word: &str) -> bool {
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let mut chars = word.chars();
    if let (Some(first), None) = (chars.next(), chars.next()) {
        return first.is_alphabetic();
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

pub fn split_sentences(text: &str) -> SentenceList {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let offset_at = |idx: usize| chars.get(idx).map_or(text.len(), |&(off, _)| off);

    let mut sentences = Vec::new();
    let mut push = |start: usize, end: usize| {
        sentences.push(Sentence {
            start,
            end,
            text: text[start..end].to_string(),
        });
    };

    let mut start: Option<usize> = None;
    let mut content_end = 0;
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        if c.is_whitespace() {
            let mut j = i;
            let mut newlines = 0;
            while j < chars.len() && chars[j].1.is_whitespace() {
                if chars[j].1 == '\n' {
                    newlines += 1;
                }
                j += 1;
            }
            if newlines >= 2 {
                if let Some(s) = start.take() {
                    push(s, content_end);
                }
            }
            i = j;
            continue;
        }

        let sentence_start = *start.get_or_insert(off);
        if is_terminator(c) {
            let mut j = i;
            while j < chars.len() && is_terminator(chars[j].1) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && is_closer(chars[k].1) {
                k += 1;
            }
            content_end = offset_at(k);
            let at_break = k == chars.len() || chars[k].1.is_whitespace();
            let lone_period = c == '.' && j == i + 1;
            let word = text[sentence_start..off]
                .rsplit(char::is_whitespace)
                .next()
                .unwrap_or("");
            if at_break && !(lone_period && suppresses_break(word)) {
                start = None;
                push(sentence_start, content_end);
            }
            i = k;
            continue;
        }

        content_end = off + c.len_utf8();
        i += 1;
    }
    if let Some(s) = start {
        push(s, content_end);
    }
    SentenceList { sentences }
}
