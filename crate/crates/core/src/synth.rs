//! Seeded synthetic corpora with planted ground truth.
//!
//! Patients are split into planted-positive and planted-negative groups.
//! Each patient has one or more admissions spaced 90 days apart, and notes
//! fall within ten days of their admission's anchor date.
//!
//! * A positive admission carries a metastasis ICD row dated on its anchor,
//!   and its first note (plus roughly half of the rest) holds an affirmative
//!   keyword sentence. Other notes of a positive patient are keyword-free.
//! * A negative patient's notes mention a keyword with probability
//!   `negative_mention_rate`; each mention is negated with probability
//!   `negation_rate` and affirmative otherwise.
//!
//! Distractor sentences never contain lexicon phrases.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_code, ClinicalNote, CodeSystem, CorpusError, IcdDiagnosis, TableFormat};
use crate::corpus::write_notes;
use crate::extract::DEFAULT_PHRASES;
use crate::llm::Label;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Write(#[from] CorpusError),
}

const ADMISSION_SPACING_DAYS: u64 = 90;
const NOTE_SPREAD_DAYS: i64 = 10;

const DISTRACTORS: &[&str] = &[
    "Patient reports mild fatigue.",
    "Vital signs stable overnight.",
    "Tolerating oral intake well.",
    "Pain controlled with scheduled acetaminophen.",
    "Wound site clean and dry.",
    "Labs reviewed with the care team.",
    "Hemoglobin stable at baseline.",
    "Continue current medication regimen.",
    "Ambulating independently in the hallway.",
    "Family updated at bedside.",
    "Sleep quality improved since admission.",
    "Blood pressure within normal limits.",
    "Plan to follow up in clinic next month.",
    "Nutrition consult placed for weight loss.",
    "Physical therapy evaluation completed.",
    "Denies chest pain or shortness of breath.",
    "Afebrile for the past day.",
    "Swallow study scheduled for tomorrow.",
    "Oxygen saturation normal on room air.",
    "Creatinine trending down.",
    "Dressing changed this morning.",
    "Seen together with the attending physician.",
    "Discussed the radiation schedule with the patient.",
    "Mucositis managed with oral rinses.",
    "Voice quality unchanged from last visit.",
    "Glucose values acceptable on sliding scale.",
    "Social work consulted regarding home support.",
    "Weight recorded as stable.",
    "Speech therapy exercises reviewed.",
    "Hearing screen unremarkable.",
];

const AFFIRMATIVE: &[&str] = &[
    "Imaging consistent with {kw}.",
    "Restaging imaging consistent with {kw}.",
    "Findings on imaging consistent with {kw}.",
];

const NEGATED: &[&str] = &[
    "No evidence of {kw}.",
    "Restaging shows no evidence of {kw}.",
];

const METASTASIS_ICD10: &[&str] = &["C78.0", "C78.7", "C79.51", "C79.31", "C80.1", "C77.0x"];
const METASTASIS_ICD9: &[&str] = &["197.0", "197.7", "198.5", "198.3", "199.1"];
const PRIMARY_ICD10: &[&str] = &["C32.9", "C01", "C10.9", "C02.1", "C13.9"];
const PRIMARY_ICD9: &[&str] = &["161.9", "141.0", "146.9", "148.9"];

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

impl IntRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Share of patients with planted metastasis.
    pub prevalence: f64,
    pub notes_per_patient: IntRange,
    pub admissions_per_patient: IntRange,
    pub distractor_sentences_per_note: IntRange,
    /// Share of keyword mentions in negative patients that are negated.
    pub negation_rate: f64,
    /// Share of negative patients' notes that mention a keyword at all.
    pub negative_mention_rate: f64,
    pub anchor_start: NaiveDate,
    pub anchor_end: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_patients: 200,
            prevalence: 0.4,
            notes_per_patient: IntRange::new(2, 6),
            admissions_per_patient: IntRange::new(1, 2),
            distractor_sentences_per_note: IntRange::new(2, 8),
            negation_rate: 1.0,
            negative_mention_rate: 0.5,
            anchor_start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            anchor_end: NaiveDate::from_ymd_opt(2019, 12, 31).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fraction = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        fraction("prevalence", self.prevalence)?;
        fraction("negation_rate", self.negation_rate)?;
        fraction("negative_mention_rate", self.negative_mention_rate)?;
        for (name, range, floor) in [
            ("notes_per_patient", self.notes_per_patient, 1),
            ("admissions_per_patient", self.admissions_per_patient, 1),
            ("distractor_sentences_per_note", self.distractor_sentences_per_note, 0),
        ] {
            if range.min > range.max || range.min < floor {
                return Err(SynthError::Config(format!(
                    "{name} must be a non-empty range with min >= {floor}"
                )));
            }
        }
        if self.anchor_start > self.anchor_end {
            return Err(SynthError::Config("anchor date range is empty".into()));
        }
        Ok(())
    }
}

/// Planted label for a patient (`admission_id` absent) or an admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub admission_id: Option<String>,
    pub planted_label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub notes: Vec<ClinicalNote>,
    pub diagnoses: Vec<IcdDiagnosis>,
    pub truth: Vec<TruthRow>,
}

impl SynthCorpus {
    pub fn planted_positive_patients(&self) -> usize {
        self.truth
            .iter()
            .filter(|t| t.admission_id.is_none() && t.planted_label == Label::Metastasis)
            .count()
    }
}

/// Raw (un-normalized) diagnosis row as written to disk.
#[derive(Debug, Clone, Serialize)]
struct DiagnosisRecord<'a> {
    patient_id: &'a str,
    admission_id: Option<&'a str>,
    code_system: CodeSystem,
    code: &'a str,
    diagnosis_date: Option<NaiveDate>,
}

struct Generator {
    rng: ChaCha8Rng,
    note_seq: usize,
}

impl Generator {
    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items.choose(&mut self.rng).expect("non-empty list")
    }

    fn keyword_sentence(&mut self, negated: bool) -> String {
        let template = if negated {
            self.pick(NEGATED)
        } else {
            self.pick(AFFIRMATIVE)
        };
        let keyword = self.pick(DEFAULT_PHRASES);
        template.replace("{kw}", keyword)
    }

    fn note_text(&mut self, distractors: usize, keyword: Option<String>) -> String {
        let mut sentences: Vec<String> = (0..distractors)
            .map(|_| self.pick(DISTRACTORS).to_string())
            .collect();
        if let Some(sentence) = keyword {
            let at = self.rng.gen_range(0..=sentences.len());
            sentences.insert(at, sentence);
        }
        sentences.join(" ")
    }

    fn next_note_id(&mut self) -> String {
        self.note_seq += 1;
        format!("N{:06}", self.note_seq)
    }
}

/// Generates notes, raw diagnosis codes (with dots) and truth rows.
fn generate(config: &SynthConfig) -> Result<(SynthCorpus, Vec<(usize, String)>), SynthError> {
    config.validate()?;
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        note_seq: 0,
    };

    let expected = config.n_patients as f64 * config.prevalence;
    let mut n_positive = expected.floor() as usize;
    let remainder_draw: f64 = g.rng.gen();
    if remainder_draw < expected - expected.floor() {
        n_positive += 1;
    }
    let n_positive = n_positive.min(config.n_patients);
    let mut order: Vec<usize> = (0..config.n_patients).collect();
    order.shuffle(&mut g.rng);
    let mut positive = vec![false; config.n_patients];
    for &i in &order[..n_positive] {
        positive[i] = true;
    }

    let span = (config.anchor_end - config.anchor_start).num_days() as u64;
    let mut notes = Vec::new();
    let mut diagnoses = Vec::new();
    let mut raw_codes = Vec::new();
    let mut truth = Vec::new();

    for (i, &is_positive) in positive.iter().enumerate() {
        let patient_id = format!("P{:05}", i + 1);
        let n_notes = config.notes_per_patient.sample(&mut g.rng);
        let n_adm = config.admissions_per_patient.sample(&mut g.rng).min(n_notes);
        let base = config.anchor_start + Days::new(g.rng.gen_range(0..=span));
        let icd10 = g.rng.gen_bool(0.7);
        let system = if icd10 { CodeSystem::Icd10 } else { CodeSystem::Icd9 };

        let admissions: Vec<(String, NaiveDate, bool)> = (0..n_adm)
            .map(|j| {
                let id = format!("{patient_id}-A{}", j + 1);
                let anchor = base + Days::new(j as u64 * ADMISSION_SPACING_DAYS);
                let planted = is_positive && (j == 0 || g.rng.gen_bool(0.5));
                (id, anchor, planted)
            })
            .collect();

        truth.push(TruthRow {
            patient_id: patient_id.clone(),
            admission_id: None,
            planted_label: if is_positive { Label::Metastasis } else { Label::NoMetastasis },
        });
        for (adm_id, _, planted) in &admissions {
            truth.push(TruthRow {
                patient_id: patient_id.clone(),
                admission_id: Some(adm_id.clone()),
                planted_label: if *planted { Label::Metastasis } else { Label::NoMetastasis },
            });
        }

        let primary = g.pick(if icd10 { PRIMARY_ICD10 } else { PRIMARY_ICD9 });
        raw_codes.push((diagnoses.len(), primary.to_string()));
        diagnoses.push(IcdDiagnosis {
            patient_id: patient_id.clone(),
            admission_id: Some(admissions[0].0.clone()),
            code_system: system,
            code: normalize_code(primary),
            diagnosis_date: Some(admissions[0].1),
        });
        for (adm_id, anchor, planted) in &admissions {
            if !planted {
                continue;
            }
            let code = g.pick(if icd10 { METASTASIS_ICD10 } else { METASTASIS_ICD9 });
            // "C77.0x" is a deliberate near-miss family; swap it for a real one.
            let code = if code.starts_with("C77") { "C78.6" } else { code };
            raw_codes.push((diagnoses.len(), code.to_string()));
            diagnoses.push(IcdDiagnosis {
                patient_id: patient_id.clone(),
                admission_id: Some(adm_id.clone()),
                code_system: system,
                code: normalize_code(code),
                diagnosis_date: Some(*anchor),
            });
        }

        let mut first_seen = vec![false; n_adm];
        for t in 0..n_notes {
            let a = t % n_adm;
            let (adm_id, anchor, planted) = &admissions[a];
            let offset = g.rng.gen_range(-NOTE_SPREAD_DAYS..=NOTE_SPREAD_DAYS);
            let chart_date = if offset < 0 {
                *anchor - Days::new(offset.unsigned_abs())
            } else {
                *anchor + Days::new(offset as u64)
            };
            let keyword = if *planted {
                let flag = !first_seen[a] || g.rng.gen_bool(0.5);
                flag.then(|| g.keyword_sentence(false))
            } else if !is_positive && g.rng.gen_bool(config.negative_mention_rate) {
                let negated = g.rng.gen_bool(config.negation_rate);
                Some(g.keyword_sentence(negated))
            } else {
                None
            };
            first_seen[a] = true;
            let distractors = config.distractor_sentences_per_note.sample(&mut g.rng);
            let text = g.note_text(distractors, keyword);
            notes.push(ClinicalNote {
                note_id: g.next_note_id(),
                patient_id: patient_id.clone(),
                admission_id: Some(adm_id.clone()),
                chart_date,
                text,
            });
        }
    }

    Ok((
        SynthCorpus {
            notes,
            diagnoses,
            truth,
        },
        raw_codes,
    ))
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    generate(config).map(|(corpus, _)| corpus)
}

/// Paths of a written corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub notes: PathBuf,
    pub diagnoses: PathBuf,
    pub truth: PathBuf,
}

/// Writes `notes.jsonl`, `diagnoses.jsonl` (codes in their dotted form) and
/// `truth.jsonl` into `dir`.
pub fn write_corpus(config: &SynthConfig, dir: &Path) -> Result<(SynthCorpus, SynthFiles), SynthError> {
    let (corpus, raw_codes) = generate(config)?;
    let io = |source| {
        SynthError::Write(CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let files = SynthFiles {
        notes: dir.join("notes.jsonl"),
        diagnoses: dir.join("diagnoses.jsonl"),
        truth: dir.join("truth.jsonl"),
    };
    write_notes(&files.notes, TableFormat::Jsonl, &corpus.notes)?;

    let mut raw = corpus.diagnoses.clone();
    for (idx, code) in raw_codes {
        raw[idx].code = code;
    }
    let records: Vec<DiagnosisRecord> = raw
        .iter()
        .map(|d| DiagnosisRecord {
            patient_id: &d.patient_id,
            admission_id: d.admission_id.as_deref(),
            code_system: d.code_system,
            code: &d.code,
            diagnosis_date: d.diagnosis_date,
        })
        .collect();
    let mut out = BufWriter::new(std::fs::File::create(&files.diagnoses).map_err(io)?);
    for r in &records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    drop(out);

    let mut out = BufWriter::new(std::fs::File::create(&files.truth).map_err(io)?);
    for t in &corpus.truth {
        let line = serde_json::to_string(t).expect("truth serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok((corpus, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{is_metastasis_code, load_diagnoses, load_notes};
    use crate::extract::Lexicon;

    fn config(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_patients: 100,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn planted_count_is_floor_when_exact() {
        let corpus = generate_corpus(&config(3)).unwrap();
        assert_eq!(corpus.planted_positive_patients(), 40);
    }

    #[test]
    fn fractional_expectation_rounds_to_a_neighbour() {
        for seed in 0..20 {
            let cfg = SynthConfig {
                seed,
                n_patients: 10,
                prevalence: 0.25,
                ..SynthConfig::default()
            };
            let k = generate_corpus(&cfg).unwrap().planted_positive_patients();
            assert!(k == 2 || k == 3, "seed {seed}: {k}");
        }
    }

    #[test]
    fn zero_prevalence_has_no_metastasis_codes() {
        let cfg = SynthConfig {
            prevalence: 0.0,
            ..config(1)
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(corpus
            .diagnoses
            .iter()
            .all(|d| !is_metastasis_code(d.code_system, &d.code)));
        assert_eq!(corpus.planted_positive_patients(), 0);
    }

    #[test]
    fn positives_have_keyword_notes_and_dated_codes_near_notes() {
        let corpus = generate_corpus(&config(9)).unwrap();
        let lexicon = Lexicon::default();
        for t in corpus.truth.iter().filter(|t| t.admission_id.is_none()) {
            let has_code = corpus
                .diagnoses
                .iter()
                .any(|d| d.patient_id == t.patient_id && is_metastasis_code(d.code_system, &d.code));
            let has_keyword = corpus
                .notes
                .iter()
                .any(|n| n.patient_id == t.patient_id && lexicon.contains_keyword(&n.text));
            if t.planted_label == Label::Metastasis {
                assert!(has_code && has_keyword, "{}", t.patient_id);
            } else {
                assert!(!has_code, "{}", t.patient_id);
            }
        }
        for d in corpus.diagnoses.iter().filter(|d| is_metastasis_code(d.code_system, &d.code)) {
            let date = d.diagnosis_date.unwrap();
            assert!(corpus.notes.iter().any(|n| n.admission_id == d.admission_id
                && (n.chart_date - date).num_days().abs() <= NOTE_SPREAD_DAYS));
        }
    }

    #[test]
    fn distractors_are_keyword_free() {
        let lexicon = Lexicon::default();
        for s in DISTRACTORS {
            assert!(!lexicon.contains_keyword(s), "{s}");
        }
    }

    #[test]
    fn files_are_byte_identical_and_load_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let (_, a) = write_corpus(&config(5), &dir.path().join("a")).unwrap();
        let (corpus, b) = write_corpus(&config(5), &dir.path().join("b")).unwrap();
        for (x, y) in [(&a.notes, &b.notes), (&a.diagnoses, &b.diagnoses), (&a.truth, &b.truth)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let notes = load_notes(&a.notes, TableFormat::Jsonl).unwrap();
        let diagnoses = load_diagnoses(&a.diagnoses, TableFormat::Jsonl).unwrap();
        assert_eq!(notes, corpus.notes);
        assert_eq!(diagnoses, corpus.diagnoses);
        let raw = std::fs::read_to_string(&a.diagnoses).unwrap();
        assert!(raw.contains('.'), "codes are written in dotted form");
    }

    #[test]
    fn invalid_configs() {
        let bad = SynthConfig { prevalence: 1.5, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { notes_per_patient: IntRange::new(3, 2), ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { admissions_per_patient: IntRange::new(0, 2), ..SynthConfig::default() };
        assert!(bad.validate().is_err());
    }
}
