//! Zero-shot and few-shot classification prompts.
//!
//! Templates are plain text files with two placeholders: one for the note
//! under review and, in the few-shot template, one for the worked examples.
//! Substitution is a single pass over the template, so placeholder text
//! inside a note or an example is copied through literally.

mod shots;

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shots::{load_example_pool, select_shots, Example, ExampleSet};

pub const NOTES_PLACEHOLDER: &str = "{INSERT CURRENT CLINICAL NOTES HERE}";
pub const EXAMPLES_PLACEHOLDER: &str = "{INSERT THE EXAMPLES HERE}";

pub const ZERO_SHOT_TEMPLATE: &str = include_str!("../../templates/zero_shot.txt");
pub const FEW_SHOT_TEMPLATE: &str = include_str!("../../templates/few_shot.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("note text is empty")]
    EmptyNote,
    #[error("few-shot prompting needs a positive shot count divisible by 3, got {0}")]
    BadShotCount(usize),
    #[error("few-shot prompting needs at least one example per class; use zero-shot instead")]
    NoExamples,
    #[error("example pool has {found} examples labelled {label}, need {needed}")]
    InsufficientPool { label: u8, needed: usize, found: usize },
    #[error("invalid example set: {0}")]
    InvalidExamples(String),
    #[error("template {name} must contain {placeholder} exactly once")]
    Placeholder {
        name: &'static str,
        placeholder: &'static str,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Pool {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

/// Prompting method: zero-shot, or few-shot with `shots_total` examples
/// split evenly over the three classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    #[serde(default)]
    pub shots_total: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            mode: PromptMode::ZeroShot,
            shots_total: 0,
            seed: 0,
        }
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), PromptError> {
        match self.mode {
            PromptMode::ZeroShot => Ok(()),
            PromptMode::FewShot if self.shots_total > 0 && self.shots_total % 3 == 0 => Ok(()),
            PromptMode::FewShot => Err(PromptError::BadShotCount(self.shots_total)),
        }
    }

    /// Report label: `Zero-shot`, `Three-shot`, `Six-shot`, otherwise `k-shot`.
    pub fn method_name(&self) -> String {
        match (self.mode, self.shots_total) {
            (PromptMode::ZeroShot, _) => "Zero-shot".into(),
            (PromptMode::FewShot, 3) => "Three-shot".into(),
            (PromptMode::FewShot, 6) => "Six-shot".into(),
            (PromptMode::FewShot, 9) => "Nine-shot".into(),
            (PromptMode::FewShot, k) => format!("{k}-shot"),
        }
    }
}

/// A rendered prompt that remembers where the note text sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    text: String,
    note: Range<usize>,
}

impl Prompt {
    /// A prompt that is nothing but the given text.
    pub fn raw(text: impl Into<String>) -> Self {
        let text = text.into();
        let note = 0..text.len();
        Self { text, note }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// The substituted note region.
    pub fn note_text(&self) -> &str {
        &self.text[self.note.clone()]
    }

    pub fn note_range(&self) -> Range<usize> {
        self.note.clone()
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn split_once_exact<'a>(
    template: &'a str,
    placeholder: &'static str,
    name: &'static str,
) -> Result<(&'a str, &'a str), PromptError> {
    let err = || PromptError::Placeholder { name, placeholder };
    let (head, tail) = template.split_once(placeholder).ok_or_else(err)?;
    if tail.contains(placeholder) {
        return Err(err());
    }
    Ok((head, tail))
}

/// Zero-shot and few-shot templates, validated for their placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    zero_shot: String,
    few_shot: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::new(ZERO_SHOT_TEMPLATE, FEW_SHOT_TEMPLATE).expect("bundled templates are valid")
    }
}

impl PromptTemplates {
    pub fn new(zero_shot: impl Into<String>, few_shot: impl Into<String>) -> Result<Self, PromptError> {
        let zero_shot = zero_shot.into();
        let few_shot = few_shot.into();
        split_once_exact(&zero_shot, NOTES_PLACEHOLDER, "zero-shot")?;
        let (head, tail) = split_once_exact(&few_shot, EXAMPLES_PLACEHOLDER, "few-shot")?;
        if head.contains(NOTES_PLACEHOLDER) {
            // Examples must precede the note so that the note region is last.
            return Err(PromptError::Placeholder {
                name: "few-shot",
                placeholder: EXAMPLES_PLACEHOLDER,
            });
        }
        split_once_exact(tail, NOTES_PLACEHOLDER, "few-shot")?;
        Ok(Self { zero_shot, few_shot })
    }

    /// Bundled templates, with either one replaced by a file when given.
    pub fn load(zero_shot: Option<&Path>, few_shot: Option<&Path>) -> Result<Self, PromptError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|source| PromptError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        let zero = zero_shot.map(read).transpose()?;
        let few = few_shot.map(read).transpose()?;
        Self::new(
            zero.unwrap_or_else(|| ZERO_SHOT_TEMPLATE.to_string()),
            few.unwrap_or_else(|| FEW_SHOT_TEMPLATE.to_string()),
        )
    }

    pub fn zero_shot_template(&self) -> &str {
        &self.zero_shot
    }

    pub fn few_shot_template(&self) -> &str {
        &self.few_shot
    }

    pub fn zero_shot(&self, note_text: &str) -> Result<Prompt, PromptError> {
        if note_text.is_empty() {
            return Err(PromptError::EmptyNote);
        }
        let (head, tail) = split_once_exact(&self.zero_shot, NOTES_PLACEHOLDER, "zero-shot")?;
        Ok(assemble(&[head], note_text, tail))
    }

    pub fn few_shot(&self, note_text: &str, examples: &ExampleSet) -> Result<Prompt, PromptError> {
        if note_text.is_empty() {
            return Err(PromptError::EmptyNote);
        }
        examples.validate()?;
        if examples.per_class() == 0 {
            return Err(PromptError::NoExamples);
        }
        let (head, rest) = split_once_exact(&self.few_shot, EXAMPLES_PLACEHOLDER, "few-shot")?;
        let (middle, tail) = split_once_exact(rest, NOTES_PLACEHOLDER, "few-shot")?;
        let rendered = examples.render();
        Ok(assemble(&[head, &rendered, middle], note_text, tail))
    }

    /// Renders according to `spec`; `examples` is required for few-shot.
    pub fn render(
        &self,
        spec: &PromptSpec,
        note_text: &str,
        examples: Option<&ExampleSet>,
    ) -> Result<Prompt, PromptError> {
        match spec.mode {
            PromptMode::ZeroShot => self.zero_shot(note_text),
            PromptMode::FewShot => self.few_shot(note_text, examples.ok_or(PromptError::NoExamples)?),
        }
    }
}

fn assemble(before: &[&str], note: &str, after: &str) -> Prompt {
    let mut text: String = before.concat();
    let start = text.len();
    text.push_str(note);
    let end = text.len();
    text.push_str(after);
    Prompt { text, note: start..end }
}

/// Zero-shot prompt from the bundled template.
pub fn build_zero_shot(note_text: &str) -> Result<Prompt, PromptError> {
    PromptTemplates::default().zero_shot(note_text)
}

/// Few-shot prompt from the bundled template.
pub fn build_few_shot(note_text: &str, examples: &ExampleSet) -> Result<Prompt, PromptError> {
    PromptTemplates::default().few_shot(note_text, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Label;

    fn one_each() -> ExampleSet {
        ExampleSet {
            positives: vec![Example::new("Liver lesions consistent with metastasis.", Label::Metastasis)],
            negatives: vec![Example::new("No evidence of metastatic disease.", Label::NoMetastasis)],
            neutrals: vec![Example::new("Patient ambulating well.", Label::Unknown)],
        }
    }

    #[test]
    fn zero_shot_appends_note_at_the_end() {
        let prompt = build_zero_shot("X").unwrap();
        let prefix = ZERO_SHOT_TEMPLATE.strip_suffix(NOTES_PLACEHOLDER).unwrap();
        assert_eq!(prompt.text(), format!("{prefix}X"));
        assert_eq!(prompt.note_text(), "X");
    }

    #[test]
    fn placeholder_inside_note_is_literal() {
        let note = format!("see {NOTES_PLACEHOLDER} here");
        let prompt = build_zero_shot(&note).unwrap();
        assert_eq!(prompt.note_text(), note);
        assert_eq!(prompt.text().matches(NOTES_PLACEHOLDER).count(), 1);
    }

    #[test]
    fn two_notes_differ_only_in_the_note_region() {
        let a = build_zero_shot("alpha note").unwrap();
        let b = build_zero_shot("beta").unwrap();
        assert_eq!(&a.text()[..a.note_range().start], &b.text()[..b.note_range().start]);
        assert_eq!(&a.text()[a.note_range().end..], &b.text()[b.note_range().end..]);
        assert_ne!(a.note_text(), b.note_text());
    }

    #[test]
    fn empty_note_is_rejected() {
        assert!(matches!(build_zero_shot(""), Err(PromptError::EmptyNote)));
        assert!(matches!(build_few_shot("", &one_each()), Err(PromptError::EmptyNote)));
    }

    #[test]
    fn few_shot_lists_examples_in_class_order() {
        let prompt = build_few_shot("Y", &one_each()).unwrap();
        let lines: Vec<&str> = prompt.text().lines().filter(|l| l.starts_with("- Example")).collect();
        assert_eq!(
            lines,
            vec![
                "- Example 1: \"Liver lesions consistent with metastasis.\" - (1)",
                "- Example 2: \"No evidence of metastatic disease.\" - (2)",
                "- Example 3: \"Patient ambulating well.\" - (3)",
            ]
        );
        assert!(prompt.text().ends_with("has metastasis:\n\nY"));
        assert!(!prompt.text().contains(EXAMPLES_PLACEHOLDER));
        assert_eq!(prompt, build_few_shot("Y", &one_each()).unwrap());
    }

    #[test]
    fn few_shot_without_examples_is_an_error() {
        let empty = ExampleSet::default();
        assert!(matches!(build_few_shot("Y", &empty), Err(PromptError::NoExamples)));
    }

    #[test]
    fn templates_must_carry_placeholders() {
        assert!(PromptTemplates::new("no slot", FEW_SHOT_TEMPLATE).is_err());
        assert!(PromptTemplates::new(ZERO_SHOT_TEMPLATE, ZERO_SHOT_TEMPLATE).is_err());
        let twice = format!("{NOTES_PLACEHOLDER}{NOTES_PLACEHOLDER}");
        assert!(PromptTemplates::new(twice, FEW_SHOT_TEMPLATE).is_err());
        let custom = PromptTemplates::new(
            format!("Is there diabetes?\n{NOTES_PLACEHOLDER}"),
            format!("{EXAMPLES_PLACEHOLDER}\n--\n{NOTES_PLACEHOLDER}"),
        )
        .unwrap();
        assert_eq!(custom.zero_shot("n").unwrap().text(), "Is there diabetes?\nn");
    }

    #[test]
    fn spec_validation_and_names() {
        let few = |k| PromptSpec { mode: PromptMode::FewShot, shots_total: k, seed: 0 };
        assert!(few(3).validate().is_ok());
        assert!(few(4).validate().is_err());
        assert!(few(0).validate().is_err());
        assert_eq!(few(6).method_name(), "Six-shot");
        assert_eq!(few(12).method_name(), "12-shot");
        assert_eq!(PromptSpec::default().method_name(), "Zero-shot");
    }
}
