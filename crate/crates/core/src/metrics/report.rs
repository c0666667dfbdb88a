//! Report tables.
//!
//! `accuracy.csv` has one row per run and window (time range, method,
//! preprocessing status, P_c, P_i, P_l). `sensitivity.csv` and
//! `specificity.csv` have one row per run with a patient and an admission
//! column. `report.txt` holds the same tables aligned for reading, and
//! `run_metadata.json` lists the settings behind each run. Rates print with
//! four decimals.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CohortRates, EvaluationSummary, MetricsError};
use crate::corpus::Granularity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub backend_id: String,
    pub method: String,
    pub prompt_mode: String,
    pub shots_total: usize,
    pub seed: u64,
    pub preprocessing: bool,
    pub radius: usize,
    pub lexicon_sha256: String,
    pub windows: Vec<u32>,
    pub granularities: Vec<Granularity>,
}

impl RunMetadata {
    pub fn preprocessing_status(&self) -> &'static str {
        if self.preprocessing {
            "Preprocessed"
        } else {
            "No preprocessing"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub half_width_days: u32,
    #[serde(flatten)]
    pub summary: EvaluationSummary,
}

impl WindowSummary {
    /// Total span of the window, e.g. `20 days` for a half-width of 10.
    pub fn time_range(&self) -> String {
        format!("{} days", 2 * self.half_width_days)
    }
}

/// Everything one evaluation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub windows: Vec<WindowSummary>,
    pub rates: Vec<CohortRates>,
}

impl RunReport {
    fn rate(&self, granularity: Granularity) -> Option<&CohortRates> {
        self.rates.iter().find(|r| r.granularity == granularity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub time_range: String,
    pub method: String,
    pub preprocessing_status: String,
    pub p_correct: f64,
    pub p_incorrect: f64,
    pub p_inconclusive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub method: String,
    pub preprocessing_status: String,
    pub patient: Option<f64>,
    pub admission: Option<f64>,
}

fn fixed4(x: f64) -> String {
    format!("{x:.4}")
}

fn accuracy_rows(runs: &[RunReport]) -> Vec<Vec<String>> {
    runs.iter()
        .flat_map(|run| {
            run.windows.iter().map(move |w| {
                vec![
                    w.time_range(),
                    run.metadata.method.clone(),
                    run.metadata.preprocessing_status().to_string(),
                    fixed4(w.summary.p_correct),
                    fixed4(w.summary.p_incorrect),
                    fixed4(w.summary.p_inconclusive),
                ]
            })
        })
        .collect()
}

fn rate_rows(runs: &[RunReport], pick: fn(&CohortRates) -> f64) -> Vec<Vec<String>> {
    runs.iter()
        .filter(|run| !run.rates.is_empty())
        .map(|run| {
            let cell = |g| run.rate(g).map(pick).map(fixed4).unwrap_or_default();
            vec![
                run.metadata.method.clone(),
                run.metadata.preprocessing_status().to_string(),
                cell(Granularity::Patient),
                cell(Granularity::Admission),
            ]
        })
        .collect()
}

const ACCURACY_CSV: [&str; 6] = [
    "time_range",
    "method",
    "preprocessing_status",
    "p_correct",
    "p_incorrect",
    "p_inconclusive",
];
const ACCURACY_TEXT: [&str; 6] = [
    "Time range",
    "Method",
    "Preprocessing status",
    "Classified correctly (P_c)",
    "Classified incorrectly (P_i)",
    "No information is provided (P_l)",
];
const RATES_CSV: [&str; 4] = ["method", "preprocessing_status", "patient", "admission"];
const RATES_TEXT: [&str; 4] = [
    "Method",
    "Preprocessing status",
    "Results (Patient)",
    "Results (Hospital admission)",
];

fn text_table(title: &str, headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = format!("{title}\n");
    out.push_str(&line(headers.to_vec()));
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn write_csv(path: &Path, headers: &[&str], rows: &[Vec<String>]) -> Result<(), MetricsError> {
    let err = |message: String| MetricsError::Write {
        path: path.display().to_string(),
        message,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    writer.write_record(headers).map_err(|e| err(e.to_string()))?;
    for row in rows {
        writer.write_record(row).map_err(|e| err(e.to_string()))?;
    }
    writer.flush().map_err(|e| err(e.to_string()))
}

fn write_text(path: &Path, contents: &str) -> Result<(), MetricsError> {
    fs::write(path, contents).map_err(|e| MetricsError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the report files for `runs` into `dir` and returns their paths.
pub fn render_report(runs: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    fs::create_dir_all(dir).map_err(|e| MetricsError::Write {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let accuracy = accuracy_rows(runs);
    let sensitivity = rate_rows(runs, |r| r.sensitivity);
    let specificity = rate_rows(runs, |r| r.specificity);

    let files = [
        dir.join("accuracy.csv"),
        dir.join("sensitivity.csv"),
        dir.join("specificity.csv"),
        dir.join("report.txt"),
        dir.join("run_metadata.json"),
    ];
    write_csv(&files[0], &ACCURACY_CSV, &accuracy)?;
    write_csv(&files[1], &RATES_CSV, &sensitivity)?;
    write_csv(&files[2], &RATES_CSV, &specificity)?;

    let mut text = text_table("Window accuracy", &ACCURACY_TEXT, &accuracy);
    text.push('\n');
    text.push_str(&text_table("Sensitivity", &RATES_TEXT, &sensitivity));
    text.push('\n');
    text.push_str(&text_table("Specificity", &RATES_TEXT, &specificity));
    write_text(&files[3], &text)?;

    let metadata: Vec<&RunMetadata> = runs.iter().map(|r| &r.metadata).collect();
    let mut json = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    json.push('\n');
    write_text(&files[4], &json)?;
    Ok(files.to_vec())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, MetricsError> {
    let err = |message: String| MetricsError::Read {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| err(e.to_string()))
}

pub fn read_accuracy_csv(path: &Path) -> Result<Vec<AccuracyRow>, MetricsError> {
    read_csv(path)
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>, MetricsError> {
    read_csv(path)
}
