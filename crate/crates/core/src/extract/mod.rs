//! Keyword-anchored context extraction.
//!
//! A note is split into sentences, every sentence holding a lexicon phrase is
//! flagged, and each flagged sentence is kept together with `radius`
//! neighbours on either side. Overlapping neighbourhoods merge, so every
//! kept sentence appears exactly once.

mod lexicon;
mod sentences;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{contains_keyword, Lexicon, Phrase, DEFAULT_PHRASES};
pub use sentences::{split_sentences, Sentence, SentenceList};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("lexicon contains no phrases")]
    EmptyLexicon,
    #[error("lexicon phrase is empty")]
    EmptyPhrase,
    #[error("cannot compile phrase {0:?}: {1}")]
    Pattern(String, String),
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Number of neighbouring sentences kept on each side of a keyword sentence.
pub const DEFAULT_RADIUS: usize = 1;

/// Keyword-anchored excerpt of one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessedNote {
    pub note_id: String,
    /// Maximal runs of contiguous selected sentences, joined by one space.
    pub blocks: Vec<String>,
    /// Lexicon phrases found anywhere in the source text, in lexicon order.
    pub matched_keywords: Vec<String>,
    /// Characters in the source text.
    pub source_length: usize,
    /// Characters in [`PreprocessedNote::prompt_text`].
    pub extracted_length: usize,
}

impl PreprocessedNote {
    /// Blocks joined by newlines, the form sent to the model.
    pub fn prompt_text(&self) -> String {
        self.blocks.join("\n")
    }

    pub fn has_context(&self) -> bool {
        !self.blocks.is_empty()
    }
}

/// Indices of sentences containing at least one lexicon phrase.
pub fn find_keyword_sentences(sentences: &SentenceList, lexicon: &Lexicon) -> Vec<usize> {
    sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| lexicon.contains_keyword(&s.text))
        .map(|(i, _)| i)
        .collect()
}

/// Union of `[h - radius, h + radius]` over all hits, clipped to `0..len`.
pub fn select_indices(hits: &[usize], radius: usize, len: usize) -> BTreeSet<usize> {
    let mut selected = BTreeSet::new();
    for &h in hits {
        let lo = h.saturating_sub(radius);
        let hi = h.saturating_add(radius).min(len.saturating_sub(1));
        selected.extend(lo..=hi);
    }
    selected
}

/// Groups sorted indices into maximal runs of consecutive values.
fn runs(indices: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(run) if run.last().is_some_and(|&prev| prev + 1 == i) => run.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

pub fn extract_contexts(
    note_id: &str,
    text: &str,
    lexicon: &Lexicon,
    radius: usize,
) -> PreprocessedNote {
    let sentences = split_sentences(text);
    let hits = find_keyword_sentences(&sentences, lexicon);
    let selected = select_indices(&hits, radius, sentences.len());
    let blocks: Vec<String> = runs(&selected)
        .into_iter()
        .map(|run| {
            run.iter()
                .map(|&i| sentences.sentences[i].text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let mut note = PreprocessedNote {
        note_id: note_id.to_string(),
        blocks,
        matched_keywords: lexicon.matched_phrases(text),
        source_length: text.chars().count(),
        extracted_length: 0,
    };
    note.extracted_length = note.prompt_text().chars().count();
    note
}
