//! Clinical note and diagnosis tables.
//!
//! Both tables load from JSON Lines or CSV. Identifiers may be given as
//! strings or integers; empty strings and nulls count as absent. Dates are
//! calendar dates, so any time-of-day component is dropped on load.

mod finetune;
mod icd;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use finetune::{select_finetune_samples, write_finetune_export, FinetuneExport, LabeledText};
pub use icd::{is_metastasis_code, normalize_code, IcdPrefixes};
pub use io::{load_diagnoses, load_notes, parse_date, write_diagnoses, write_notes};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: field `{field}`: {message}")]
    Schema {
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("duplicate note_id {0:?}")]
    DuplicateNoteId(String),
    #[error("diagnoses table has no code_system column")]
    MissingCodeSystemColumn,
    #[error("unsupported table format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("diagnosis for patient {0:?} has no admission_id, required at admission granularity")]
    MissingAdmission(String),
    #[error("need {needed} {class} candidates, found {found}")]
    InsufficientCandidates {
        class: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("split fraction {0} is outside [0, 1]")]
    BadSplit(f64),
}

/// On-disk table format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Jsonl,
    Csv,
}

impl TableFormat {
    /// Picks the format from a `.csv` / `.jsonl` / `.json` extension.
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl FromStr for TableFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    pub patient_id: String,
    pub admission_id: Option<String>,
    pub chart_date: NaiveDate,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeSystem {
    #[serde(rename = "ICD9")]
    Icd9,
    #[serde(rename = "ICD10")]
    Icd10,
}

impl CodeSystem {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Icd9 => "ICD9",
            Self::Icd10 => "ICD10",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeSystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "ICD9" | "ICD9CM" => Ok(Self::Icd9),
            "ICD10" | "ICD10CM" => Ok(Self::Icd10),
            other => Err(format!("unknown code system {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdDiagnosis {
    pub patient_id: String,
    pub admission_id: Option<String>,
    pub code_system: CodeSystem,
    /// Uppercase with dots removed.
    pub code: String,
    pub diagnosis_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Patient,
    Admission,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Patient => "patient",
            Self::Admission => "admission",
        }
    }

    /// The grouping key of a note at this granularity.
    pub fn note_key(self, note: &ClinicalNote) -> Option<&str> {
        match self {
            Self::Patient => Some(&note.patient_id),
            Self::Admission => note.admission_id.as_deref(),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "patient" => Ok(Self::Patient),
            "admission" | "hospital_admission" => Ok(Self::Admission),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

/// Entities split by whether any diagnosis carries a metastasis code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortPartition {
    pub granularity: Granularity,
    pub positives: BTreeSet<String>,
    pub negatives: BTreeSet<String>,
}

/// Notes of one patient dated within `half_width_days` of `anchor`, both
/// ends inclusive, ordered by `(chart_date, note_id)`.
pub fn select_window<'a>(
    notes: &'a [ClinicalNote],
    patient_id: &str,
    anchor: NaiveDate,
    half_width_days: u32,
) -> Vec<&'a ClinicalNote> {
    let width = Days::new(u64::from(half_width_days));
    let lo = anchor.checked_sub_days(width).unwrap_or(NaiveDate::MIN);
    let hi = anchor.checked_add_days(width).unwrap_or(NaiveDate::MAX);
    let mut selected: Vec<&ClinicalNote> = notes
        .iter()
        .filter(|n| n.patient_id == patient_id && n.chart_date >= lo && n.chart_date <= hi)
        .collect();
    selected.sort_by(|a, b| (a.chart_date, &a.note_id).cmp(&(b.chart_date, &b.note_id)));
    selected
}

/// Splits `entities` into those with at least one metastasis diagnosis and
/// the rest. Diagnoses for entities outside `entities` are ignored.
pub fn partition_cohort(
    diagnoses: &[IcdDiagnosis],
    entities: &BTreeSet<String>,
    granularity: Granularity,
    prefixes: &IcdPrefixes,
) -> Result<CohortPartition, CorpusError> {
    let mut flagged = BTreeSet::new();
    for dx in diagnoses {
        let key = match granularity {
            Granularity::Patient => dx.patient_id.as_str(),
            Granularity::Admission => dx
                .admission_id
                .as_deref()
                .ok_or_else(|| CorpusError::MissingAdmission(dx.patient_id.clone()))?,
        };
        if prefixes.matches(dx.code_system, &dx.code) {
            flagged.insert(key.to_string());
        }
    }
    let (positives, negatives) = entities
        .iter()
        .cloned()
        .partition(|e| flagged.contains(e));
    Ok(CohortPartition {
        granularity,
        positives,
        negatives,
    })
}

/// Distinct `(patient, diagnosis date)` pairs from dated metastasis
/// diagnoses; each pair is evaluated as its own case.
pub fn metastasis_anchors(
    diagnoses: &[IcdDiagnosis],
    prefixes: &IcdPrefixes,
) -> Vec<(String, NaiveDate)> {
    diagnoses
        .iter()
        .filter(|dx| prefixes.matches(dx.code_system, &dx.code))
        .filter_map(|dx| dx.diagnosis_date.map(|d| (dx.patient_id.clone(), d)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Note ids grouped by entity at the given granularity. Notes without an
/// admission id are left out at admission granularity.
pub fn notes_by_entity<'a, I>(notes: I, granularity: Granularity) -> BTreeMap<String, Vec<String>>
where
    I: IntoIterator<Item = &'a ClinicalNote>,
{
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for note in notes {
        if let Some(key) = granularity.note_key(note) {
            out.entry(key.to_string()).or_default().push(note.note_id.clone());
        }
    }
    out
}
