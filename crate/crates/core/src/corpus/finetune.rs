//! Labelled sample export for adapter fine-tuning.
//!
//! Positives are notes the rule oracle marks as affirming metastasis,
//! negatives are notes it marks as negating it. Each class is shuffled with
//! a seeded ChaCha8 stream, truncated to `n_per_class`, and split into train
//! and validation with `max(1, floor(n * split))` train samples per class.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClinicalNote, CorpusError};
use crate::extract::Lexicon;
use crate::llm::{oracle_classify, Label};

/// One exported sample; `label` is 1 (metastasis) or 2 (no metastasis).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FinetuneExport {
    pub train: Vec<LabeledText>,
    pub validation: Vec<LabeledText>,
}

fn train_count(n: usize, split: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((n as f64 * split).floor() as usize).clamp(1, n)
}

pub fn select_finetune_samples(
    notes: &[ClinicalNote],
    lexicon: &Lexicon,
    n_per_class: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<FinetuneExport, CorpusError> {
    if !(0.0..=1.0).contains(&split_fraction) {
        return Err(CorpusError::BadSplit(split_fraction));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for note in notes {
        match oracle_classify(&note.text, lexicon) {
            Label::Metastasis => positives.push(note),
            Label::NoMetastasis => negatives.push(note),
            Label::Unknown => {}
        }
    }
    for (class, found) in [("positive", positives.len()), ("negative", negatives.len())] {
        if found < n_per_class {
            return Err(CorpusError::InsufficientCandidates {
                class,
                needed: n_per_class,
                found,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut export = FinetuneExport::default();
    let train_n = train_count(n_per_class, split_fraction);
    for (mut pool, label) in [(positives, Label::Metastasis), (negatives, Label::NoMetastasis)] {
        pool.shuffle(&mut rng);
        for (i, note) in pool.into_iter().take(n_per_class).enumerate() {
            let sample = LabeledText {
                text: note.text.clone(),
                label,
            };
            if i < train_n {
                export.train.push(sample);
            } else {
                export.validation.push(sample);
            }
        }
    }
    export.train.shuffle(&mut rng);
    export.validation.shuffle(&mut rng);
    Ok(export)
}

fn write_jsonl(path: &Path, rows: &[LabeledText]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| io(std::io::Error::other(e)))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes `train.jsonl` and `validation.jsonl` into `dir`.
pub fn write_finetune_export(dir: &Path, export: &FinetuneExport) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_jsonl(&dir.join("train.jsonl"), &export.train)?;
    write_jsonl(&dir.join("validation.jsonl"), &export.validation)
}
