//! Evaluation quantities.
//!
//! Window accuracy: the shares of correct, incorrect and inconclusive cases
//! among all cases that had at least one note. Cohort rates: the overlap of
//! the model's metastatic/non-metastatic split with the ICD-coded split.
//! Counts stay integral until the final division.

mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{LlmPartition, Outcome, WindowOutcome};
use crate::corpus::{CohortPartition, Granularity};

pub use report::{
    read_accuracy_csv, read_rates_csv, render_report, AccuracyRow, RateRow, RunMetadata, RunReport,
    WindowSummary,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0}: denominator is zero")]
    ZeroDenominator(&'static str),
    #[error("cannot write report {path}: {message}")]
    Write { path: String, message: String },
    #[error("cannot read report {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub n_inconclusive: usize,
    pub p_correct: f64,
    pub p_incorrect: f64,
    pub p_inconclusive: f64,
    pub n_excluded_no_notes: usize,
}

impl EvaluationSummary {
    pub fn from_counts(
        n_correct: usize,
        n_incorrect: usize,
        n_inconclusive: usize,
        n_excluded_no_notes: usize,
    ) -> Result<Self, MetricsError> {
        let total = n_correct + n_incorrect + n_inconclusive;
        if total == 0 {
            return Err(MetricsError::ZeroDenominator("window accuracy (no evaluable cases)"));
        }
        let share = |n: usize| n as f64 / total as f64;
        Ok(Self {
            n_correct,
            n_incorrect,
            n_inconclusive,
            p_correct: share(n_correct),
            p_incorrect: share(n_incorrect),
            p_inconclusive: share(n_inconclusive),
            n_excluded_no_notes,
        })
    }

    pub fn evaluated(&self) -> usize {
        self.n_correct + self.n_incorrect + self.n_inconclusive
    }
}

pub fn accuracy_summary(outcomes: &[WindowOutcome]) -> Result<EvaluationSummary, MetricsError> {
    let mut counts = [0usize; 4];
    for o in outcomes {
        let slot = match o.outcome {
            Outcome::Correct => 0,
            Outcome::Incorrect => 1,
            Outcome::Inconclusive => 2,
            Outcome::NoNotes => 3,
        };
        counts[slot] += 1;
    }
    EvaluationSummary::from_counts(counts[0], counts[1], counts[2], counts[3])
}

/// Sensitivity and specificity at one granularity with their raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortRates {
    pub granularity: Granularity,
    pub sensitivity: f64,
    pub sensitivity_numerator: usize,
    pub sensitivity_denominator: usize,
    pub specificity: f64,
    pub specificity_numerator: usize,
    pub specificity_denominator: usize,
}

fn sensitivity_counts(llm: &LlmPartition, icd: &CohortPartition) -> (usize, usize) {
    let hits = icd.positives.intersection(&llm.metastatic).count();
    (hits, icd.positives.len())
}

fn specificity_counts(llm: &LlmPartition, icd: &CohortPartition) -> (usize, usize) {
    let hits = icd.negatives.intersection(&llm.non_metastatic).count();
    (hits, icd.negatives.len())
}

/// `|M_llm ∩ M_icd| / |M_icd|`.
pub fn sensitivity(llm: &LlmPartition, icd: &CohortPartition) -> Result<f64, MetricsError> {
    match sensitivity_counts(llm, icd) {
        (_, 0) => Err(MetricsError::ZeroDenominator("sensitivity (no ICD-positive entities)")),
        (hits, total) => Ok(hits as f64 / total as f64),
    }
}

/// `|N_llm ∩ N_icd| / |N_icd|`.
pub fn specificity(llm: &LlmPartition, icd: &CohortPartition) -> Result<f64, MetricsError> {
    match specificity_counts(llm, icd) {
        (_, 0) => Err(MetricsError::ZeroDenominator("specificity (no ICD-negative entities)")),
        (hits, total) => Ok(hits as f64 / total as f64),
    }
}

pub fn cohort_rates(llm: &LlmPartition, icd: &CohortPartition) -> Result<CohortRates, MetricsError> {
    let (sens_n, sens_d) = sensitivity_counts(llm, icd);
    let (spec_n, spec_d) = specificity_counts(llm, icd);
    Ok(CohortRates {
        granularity: icd.granularity,
        sensitivity: sensitivity(llm, icd)?,
        sensitivity_numerator: sens_n,
        sensitivity_denominator: sens_d,
        specificity: specificity(llm, icd)?,
        specificity_numerator: spec_n,
        specificity_denominator: spec_d,
    })
}
