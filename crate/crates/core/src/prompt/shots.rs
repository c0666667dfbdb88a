use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::llm::Label;

/// A labelled worked example for few-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: Label,
}

impl Example {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        Self {
            text: text.into(),
            label,
        }
    }
}

/// Balanced examples: the same number per class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub positives: Vec<Example>,
    pub negatives: Vec<Example>,
    pub neutrals: Vec<Example>,
}

impl ExampleSet {
    pub fn per_class(&self) -> usize {
        self.positives.len()
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let n = self.positives.len();
        if self.negatives.len() != n || self.neutrals.len() != n {
            return Err(PromptError::InvalidExamples(format!(
                "unbalanced classes: {} / {} / {}",
                n,
                self.negatives.len(),
                self.neutrals.len()
            )));
        }
        let lists = [
            (&self.positives, Label::Metastasis),
            (&self.negatives, Label::NoMetastasis),
            (&self.neutrals, Label::Unknown),
        ];
        for (list, label) in lists {
            if let Some(bad) = list.iter().find(|e| e.label != label) {
                return Err(PromptError::InvalidExamples(format!(
                    "example labelled {} in the class-{} list",
                    bad.label, label
                )));
            }
        }
        Ok(())
    }

    /// Positive, negative and neutral taken in turn, so the class order
    /// repeats 1, 2, 3, 1, 2, 3, ...
    pub fn ordered(&self) -> Vec<&Example> {
        (0..self.per_class())
            .flat_map(|i| [&self.positives[i], &self.negatives[i], &self.neutrals[i]])
            .collect()
    }

    /// Numbered lines in the style of the built-in zero-shot examples,
    /// separated by blank lines.
    pub fn render(&self) -> String {
        self.ordered()
            .iter()
            .enumerate()
            .map(|(i, e)| format!("- Example {}: \"{}\" - ({})", i + 1, e.text, e.label))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Reads a JSON Lines pool of `{"text": ..., "label": 1|2|3}` records.
pub fn load_example_pool(path: &Path) -> Result<Vec<Example>, PromptError> {
    let io = |source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut pool = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|e| PromptError::Pool {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        pool.push(example);
    }
    Ok(pool)
}

/// Draws `k / 3` examples per class without replacement.
///
/// Each class is shuffled in turn (positive, negative, neutral) with one
/// ChaCha8 stream seeded by `seed`, so the draw depends only on the pool
/// order, `k` and `seed`.
pub fn select_shots(pool: &[Example], k: usize, seed: u64) -> Result<ExampleSet, PromptError> {
    if k == 0 || k % 3 != 0 {
        return Err(PromptError::BadShotCount(k));
    }
    let per_class = k / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |label: Label| -> Result<Vec<Example>, PromptError> {
        let mut candidates: Vec<&Example> = pool.iter().filter(|e| e.label == label).collect();
        if candidates.len() < per_class {
            return Err(PromptError::InsufficientPool {
                label: label.code(),
                needed: per_class,
                found: candidates.len(),
            });
        }
        candidates.shuffle(&mut rng);
        Ok(candidates.into_iter().take(per_class).cloned().collect())
    };
    Ok(ExampleSet {
        positives: draw(Label::Metastasis)?,
        negatives: draw(Label::NoMetastasis)?,
        neutrals: draw(Label::Unknown)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_class: usize) -> Vec<Example> {
        (0..per_class)
            .flat_map(|i| {
                [
                    Example::new(format!("pos {i}"), Label::Metastasis),
                    Example::new(format!("neg {i}"), Label::NoMetastasis),
                    Example::new(format!("neu {i}"), Label::Unknown),
                ]
            })
            .collect()
    }

    #[test]
    fn three_shots_give_one_per_class() {
        let set = select_shots(&pool(5), 3, 11).unwrap();
        assert_eq!(set.per_class(), 1);
        set.validate().unwrap();
    }

    #[test]
    fn six_shots_give_two_per_class() {
        let set = select_shots(&pool(5), 6, 11).unwrap();
        assert_eq!((set.positives.len(), set.negatives.len(), set.neutrals.len()), (2, 2, 2));
        assert_ne!(set.positives[0], set.positives[1]);
    }

    #[test]
    fn shot_count_must_divide_by_three() {
        assert!(matches!(select_shots(&pool(5), 4, 0), Err(PromptError::BadShotCount(4))));
        assert!(matches!(select_shots(&pool(5), 0, 0), Err(PromptError::BadShotCount(0))));
    }

    #[test]
    fn small_pool_is_reported() {
        let mut p = pool(3);
        p.retain(|e| e.label != Label::Unknown || e.text == "neu 0");
        let err = select_shots(&p, 6, 0).unwrap_err();
        assert!(matches!(err, PromptError::InsufficientPool { label: 3, needed: 2, found: 1 }));
    }

    #[test]
    fn selection_is_reproducible_and_seed_sensitive() {
        let p = pool(40);
        assert_eq!(select_shots(&p, 9, 5).unwrap(), select_shots(&p, 9, 5).unwrap());
        let differs = (0..10).any(|s| select_shots(&p, 9, s).unwrap() != select_shots(&p, 9, 5).unwrap());
        assert!(differs);
    }

    #[test]
    fn render_interleaves_classes() {
        let set = select_shots(&pool(2), 6, 1).unwrap();
        let rendered = set.render();
        let labels: Vec<&str> = rendered
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| &l[l.len() - 3..])
            .collect();
        assert_eq!(labels, vec!["(1)", "(2)", "(3)", "(1)", "(2)", "(3)"]);
        assert!(rendered.starts_with("- Example 1: \"pos"));
    }

    #[test]
    fn mismatched_labels_fail_validation() {
        let mut set = select_shots(&pool(2), 3, 1).unwrap();
        set.negatives[0].label = Label::Unknown;
        assert!(set.validate().is_err());
    }
}
