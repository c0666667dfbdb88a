//! Per-case voting over note verdicts.
//!
//! Only `1` and `2` verdicts vote; `3` is tallied but never tips a decision.
//! Verdicts flagged `skipped` (note filtered out for lacking keywords) are
//! ignored entirely.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{select_window, ClinicalNote, Granularity};
use crate::llm::{Label, NoteVerdict};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("entity {0:?} appears more than once")]
    DuplicateEntity(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub n_yes: usize,
    pub n_no: usize,
    pub n_unknown: usize,
}

impl LabelCounts {
    pub fn tally<'a, I>(verdicts: I) -> Self
    where
        I: IntoIterator<Item = &'a NoteVerdict>,
    {
        let mut counts = Self::default();
        for v in verdicts.into_iter().filter(|v| !v.skipped) {
            counts.add(v.label);
        }
        counts
    }

    pub fn add(&mut self, label: Label) {
        match label {
            Label::Metastasis => self.n_yes += 1,
            Label::NoMetastasis => self.n_no += 1,
            Label::Unknown => self.n_unknown += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.n_yes + self.n_no + self.n_unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Incorrect,
    Inconclusive,
    NoNotes,
}

impl Outcome {
    pub fn from_counts(counts: &LabelCounts) -> Self {
        if counts.total() == 0 {
            Self::NoNotes
        } else if counts.n_yes > counts.n_no {
            Self::Correct
        } else if counts.n_no > counts.n_yes {
            Self::Incorrect
        } else {
            Self::Inconclusive
        }
    }
}

/// Vote result for one `(patient, diagnosis date, half-width)` case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub patient_id: String,
    pub anchor: NaiveDate,
    pub half_width_days: u32,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub outcome: Outcome,
}

/// Majority vote for a metastasis-coded case: more yes than no is correct,
/// more no than yes incorrect, a tie inconclusive, nothing at all `NoNotes`.
pub fn vote_window<'a, I>(patient_id: &str, anchor: NaiveDate, half_width_days: u32, verdicts: I) -> WindowOutcome
where
    I: IntoIterator<Item = &'a NoteVerdict>,
{
    let counts = LabelCounts::tally(verdicts);
    WindowOutcome {
        patient_id: patient_id.to_string(),
        anchor,
        half_width_days,
        counts,
        outcome: Outcome::from_counts(&counts),
    }
}

/// Window outcomes for every anchor, in anchor order.
pub fn window_outcomes(
    notes: &[ClinicalNote],
    verdicts: &HashMap<&str, &NoteVerdict>,
    anchors: &[(String, NaiveDate)],
    half_width_days: u32,
) -> Vec<WindowOutcome> {
    anchors
        .iter()
        .map(|(patient, anchor)| {
            let in_window = select_window(notes, patient, *anchor, half_width_days)
                .into_iter()
                .filter_map(|n| verdicts.get(n.note_id.as_str()).copied());
            vote_window(patient, *anchor, half_width_days, in_window)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Metastatic,
    NonMetastaticOrInconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityClass {
    pub entity_id: String,
    pub granularity: Granularity,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub assigned: Assignment,
}

/// Metastatic only when yes-votes strictly exceed no-votes.
pub fn classify_entity<'a, I>(entity_id: &str, granularity: Granularity, verdicts: I) -> EntityClass
where
    I: IntoIterator<Item = &'a NoteVerdict>,
{
    let counts = LabelCounts::tally(verdicts);
    let assigned = if counts.n_yes > counts.n_no {
        Assignment::Metastatic
    } else {
        Assignment::NonMetastaticOrInconclusive
    };
    EntityClass {
        entity_id: entity_id.to_string(),
        granularity,
        counts,
        assigned,
    }
}

/// One [`EntityClass`] per entity holding at least one non-skipped verdict,
/// sorted by entity id.
pub fn entity_classes(
    notes: &[ClinicalNote],
    verdicts: &HashMap<&str, &NoteVerdict>,
    granularity: Granularity,
) -> Vec<EntityClass> {
    let mut grouped: BTreeMap<&str, Vec<&NoteVerdict>> = BTreeMap::new();
    for note in notes {
        let Some(key) = granularity.note_key(note) else {
            continue;
        };
        if let Some(v) = verdicts.get(note.note_id.as_str()).filter(|v| !v.skipped) {
            grouped.entry(key).or_default().push(v);
        }
    }
    grouped
        .into_iter()
        .map(|(id, vs)| classify_entity(id, granularity, vs))
        .collect()
}

/// Entities the model called metastatic versus everything else.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmPartition {
    pub metastatic: BTreeSet<String>,
    pub non_metastatic: BTreeSet<String>,
}

impl LlmPartition {
    pub fn all(&self) -> BTreeSet<String> {
        self.metastatic.union(&self.non_metastatic).cloned().collect()
    }
}

pub fn partition_by_llm(classes: &[EntityClass]) -> Result<LlmPartition, AggregateError> {
    let mut partition = LlmPartition::default();
    for class in classes {
        let id = class.entity_id.clone();
        if partition.metastatic.contains(&id) || partition.non_metastatic.contains(&id) {
            return Err(AggregateError::DuplicateEntity(id));
        }
        match class.assigned {
            Assignment::Metastatic => partition.metastatic.insert(id),
            Assignment::NonMetastaticOrInconclusive => partition.non_metastatic.insert(id),
        };
    }
    Ok(partition)
}
