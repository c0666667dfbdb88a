//! Deterministic keyword/negation classifier.
//!
//! Serves as a test backend, a baseline, and the labeler for fine-tuning
//! samples. A sentence is negated when a negation cue ends before a lexicon
//! phrase starts within that sentence.

use std::sync::LazyLock;

use crate::extract::{split_sentences, Lexicon, Phrase};

use super::Label;

pub const NEGATION_CUES: &[&str] = &[
    "no evidence of",
    "absence of",
    "absent",
    "negative for",
    "free of",
    "without",
    "no",
];

static CUES: LazyLock<Vec<Phrase>> = LazyLock::new(|| {
    NEGATION_CUES
        .iter()
        .map(|c| Phrase::new(c).expect("negation cues are valid phrases"))
        .collect()
});

fn negated(sentence: &str, lexicon: &Lexicon) -> bool {
    let last_keyword_start = lexicon
        .compiled()
        .iter()
        .flat_map(|p| p.find_all(sentence))
        .map(|(start, _)| start)
        .max();
    let Some(last_keyword_start) = last_keyword_start else {
        return false;
    };
    CUES.iter()
        .filter_map(|c| c.first_match(sentence))
        .any(|(_, cue_end)| cue_end <= last_keyword_start)
}

/// 2 if any sentence negates a keyword, else 1 if any keyword occurs,
/// else 3.
pub fn oracle_classify(text: &str, lexicon: &Lexicon) -> Label {
    let sentences = split_sentences(text);
    let mut any_keyword = false;
    for sentence in sentences.texts() {
        if !lexicon.contains_keyword(sentence) {
            continue;
        }
        if negated(sentence, lexicon) {
            return Label::NoMetastasis;
        }
        any_keyword = true;
    }
    if any_keyword {
        Label::Metastasis
    } else {
        Label::Unknown
    }
}
