use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::info;

use super::{CliError, RunConfig};
use crate::aggregate::{entity_classes, partition_by_llm, window_outcomes, EntityClass, WindowOutcome};
use crate::corpus::{
    load_diagnoses, load_notes, metastasis_anchors, partition_cohort, select_finetune_samples,
    write_finetune_export, ClinicalNote, IcdDiagnosis, TableFormat,
};
use crate::extract::{extract_contexts, Lexicon};
use crate::llm::{classify_batch, prompt_digest, ClassifyJob, Label, NoteVerdict, VerdictCache};
use crate::metrics::{accuracy_summary, cohort_rates, render_report, RunMetadata, RunReport, WindowSummary};
use crate::prompt::{load_example_pool, select_shots, ExampleSet, PromptMode, PromptTemplates};
use crate::synth::{write_corpus, SynthConfig, SynthFiles};

pub const PREPROCESSED_FILE: &str = "preprocessed.jsonl";
pub const CACHE_FILE: &str = "verdict_cache.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

/// Writes JSON lines to a sibling temp file, then renames it into place.
fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut out = BufWriter::new(File::create(&tmp).map_err(|e| io_error(&tmp, e))?);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| io_error(path, e))?;
        writeln!(out, "{line}").map_err(|e| io_error(&tmp, e))?;
    }
    out.flush().map_err(|e| io_error(&tmp, e))?;
    drop(out);
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn notes_of(config: &RunConfig) -> Result<Vec<ClinicalNote>, CliError> {
    let path = config.notes_path()?;
    let notes = load_notes(path, TableFormat::from_path(path)?)?;
    info!(count = notes.len(), path = %path.display(), "loaded notes");
    Ok(notes)
}

fn diagnoses_of(config: &RunConfig) -> Result<Vec<IcdDiagnosis>, CliError> {
    let path = config.diagnoses_path()?;
    let diagnoses = load_diagnoses(path, TableFormat::from_path(path)?)?;
    info!(count = diagnoses.len(), path = %path.display(), "loaded diagnoses");
    Ok(diagnoses)
}

fn lexicon_of(config: &RunConfig) -> Result<Lexicon, CliError> {
    Ok(Lexicon::from_optional_file(config.paths.lexicon.as_deref())?)
}

/// Writes one `PreprocessedNote` per input note.
pub fn cmd_extract(config: &RunConfig) -> Result<PathBuf, CliError> {
    let notes = notes_of(config)?;
    let lexicon = lexicon_of(config)?;
    let dir = config.output_dir();
    ensure_dir(&dir)?;
    let path = dir.join(PREPROCESSED_FILE);
    let records = notes
        .iter()
        .map(|n| extract_contexts(&n.note_id, &n.text, &lexicon, config.pipeline.radius));
    write_jsonl(&path, records)?;
    Ok(path)
}

/// The verdict file row: a [`NoteVerdict`] without timing, so that the file
/// depends only on inputs and model answers.
#[derive(Debug, Serialize)]
struct VerdictRecord<'a> {
    note_id: &'a str,
    label: Label,
    raw_response: &'a str,
    parse_ok: bool,
    backend_id: &'a str,
    skipped: bool,
}

impl<'a> From<&'a NoteVerdict> for VerdictRecord<'a> {
    fn from(v: &'a NoteVerdict) -> Self {
        Self {
            note_id: &v.note_id,
            label: v.label,
            raw_response: &v.raw_response,
            parse_ok: v.parse_ok,
            backend_id: &v.backend_id,
            skipped: v.skipped,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifySummary {
    pub verdicts_path: PathBuf,
    pub notes: usize,
    /// Notes without any lexicon phrase.
    pub filtered: usize,
    /// Keyword-bearing notes whose extraction came out empty.
    pub no_context: usize,
    pub answered_from_cache: usize,
    pub sent: usize,
}

impl fmt::Display for ClassifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {} ({} notes: {} sent, {} cached, {} without keywords, {} without context)",
            self.verdicts_path.display(),
            self.notes,
            self.sent,
            self.answered_from_cache,
            self.filtered,
            self.no_context
        )
    }
}

fn few_shot_examples(config: &RunConfig) -> Result<Option<ExampleSet>, CliError> {
    if config.prompt.mode != PromptMode::FewShot {
        return Ok(None);
    }
    let path = config
        .paths
        .example_pool
        .as_deref()
        .ok_or_else(|| CliError::config("few-shot prompting needs an example pool (paths.example_pool)"))?;
    let pool = load_example_pool(path)?;
    Ok(Some(select_shots(&pool, config.prompt.shots_total, config.prompt.seed)?))
}

/// Classifies every note and writes `verdicts.jsonl` sorted by note id.
///
/// Keyword-free notes get a skipped Unknown verdict and are never sent. With
/// preprocessing on, a note whose extraction is empty gets Unknown without a
/// backend call. Answers are journaled to `verdict_cache.jsonl` as they
/// arrive, so an interrupted run picks up where it stopped.
pub fn cmd_classify(config: &RunConfig) -> Result<ClassifySummary, CliError> {
    let notes = notes_of(config)?;
    let lexicon = lexicon_of(config)?;
    let templates = PromptTemplates::load(
        config.paths.zero_shot_template.as_deref(),
        config.paths.few_shot_template.as_deref(),
    )?;
    let examples = few_shot_examples(config)?;
    let backend = config.backend.build(&lexicon)?;
    let backend_id = backend.id();
    let dir = config.output_dir();
    ensure_dir(&dir)?;

    let mut summary = ClassifySummary {
        verdicts_path: dir.join(VERDICTS_FILE),
        notes: notes.len(),
        ..ClassifySummary::default()
    };
    let mut verdicts: Vec<Option<NoteVerdict>> = vec![None; notes.len()];
    let mut jobs = Vec::new();
    let mut slots = Vec::new();
    for (i, note) in notes.iter().enumerate() {
        if !lexicon.contains_keyword(&note.text) {
            verdicts[i] = Some(NoteVerdict::filtered(&note.note_id, &backend_id));
            summary.filtered += 1;
            continue;
        }
        let text = if config.pipeline.preprocessing.is_on() {
            let extracted = extract_contexts(&note.note_id, &note.text, &lexicon, config.pipeline.radius);
            if !extracted.has_context() {
                verdicts[i] = Some(NoteVerdict {
                    skipped: false,
                    ..NoteVerdict::filtered(&note.note_id, &backend_id)
                });
                summary.no_context += 1;
                continue;
            }
            extracted.prompt_text()
        } else {
            note.text.clone()
        };
        let prompt = templates
            .render(&config.prompt, &text, examples.as_ref())
            .map_err(|e| CliError::from(e).context(format!("note {}", note.note_id)))?;
        jobs.push(ClassifyJob {
            note_id: note.note_id.clone(),
            prompt,
        });
        slots.push(i);
    }

    let mut cache = VerdictCache::open(&dir.join(CACHE_FILE))?;
    summary.answered_from_cache = jobs
        .iter()
        .filter(|j| cache.get(&backend_id, &prompt_digest(j.prompt.text())).is_some())
        .count();
    summary.sent = jobs.len() - summary.answered_from_cache;
    info!(
        jobs = jobs.len(),
        cached = summary.answered_from_cache,
        backend = %backend_id,
        "classifying"
    );
    let answered = classify_batch(&jobs, backend.as_ref(), config.backend.max_in_flight, Some(&mut cache))?;
    for (slot, verdict) in slots.into_iter().zip(answered) {
        verdicts[slot] = Some(verdict);
    }

    let mut verdicts: Vec<NoteVerdict> = verdicts.into_iter().map(|v| v.expect("every note has a verdict")).collect();
    verdicts.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    write_jsonl(&summary.verdicts_path, verdicts.iter().map(VerdictRecord::from))?;
    Ok(summary)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<NoteVerdict>, CliError> {
    let file = File::open(path).map_err(|e| {
        CliError::data(format!("cannot open verdicts {} (run classify first): {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: NoteVerdict = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Files written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub paths: Vec<PathBuf>,
}

impl fmt::Display for OutputFiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.paths.iter().map(|p| format!("wrote {}", p.display())).collect();
        f.write_str(&lines.join("\n"))
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Window accuracy for every configured half-width and cohort rates for
/// every configured granularity.
pub fn cmd_evaluate(config: &RunConfig) -> Result<OutputFiles, CliError> {
    let notes = notes_of(config)?;
    let diagnoses = diagnoses_of(config)?;
    let lexicon = lexicon_of(config)?;
    let dir = config.output_dir();
    let verdicts = read_verdicts(&dir.join(VERDICTS_FILE))?;
    let by_note: HashMap<&str, &NoteVerdict> = verdicts.iter().map(|v| (v.note_id.as_str(), v)).collect();
    let pipeline = &config.pipeline;

    let anchors = metastasis_anchors(&diagnoses, &pipeline.icd);
    let mut outcomes: Vec<WindowOutcome> = Vec::new();
    let mut windows = Vec::new();
    for &h in &pipeline.windows {
        let cases = window_outcomes(&notes, &by_note, &anchors, h);
        let summary = accuracy_summary(&cases)
            .map_err(|e| CliError::from(e).context(format!("window of +/-{h} days")))?;
        windows.push(WindowSummary {
            half_width_days: h,
            summary,
        });
        outcomes.extend(cases);
    }

    let mut entities: Vec<EntityClass> = Vec::new();
    let mut rates = Vec::new();
    for &g in &pipeline.granularities {
        let classes = entity_classes(&notes, &by_note, g);
        let universe: BTreeSet<String> = classes.iter().map(|c| c.entity_id.clone()).collect();
        let icd = partition_cohort(&diagnoses, &universe, g, &pipeline.icd)?;
        let llm = partition_by_llm(&classes)?;
        let r = cohort_rates(&llm, &icd).map_err(|e| CliError::from(e).context(format!("{g} level")))?;
        rates.push(r);
        entities.extend(classes);
    }

    let report = RunReport {
        metadata: RunMetadata {
            backend_id: config.backend.backend_id(),
            method: config.prompt.method_name(),
            prompt_mode: match config.prompt.mode {
                PromptMode::ZeroShot => "zero_shot".into(),
                PromptMode::FewShot => "few_shot".into(),
            },
            shots_total: config.prompt.shots_total,
            seed: config.prompt.seed,
            preprocessing: pipeline.preprocessing.is_on(),
            radius: pipeline.radius,
            lexicon_sha256: lexicon.fingerprint(),
            windows: pipeline.windows.clone(),
            granularities: pipeline.granularities.clone(),
        },
        windows,
        rates,
    };

    ensure_dir(&dir)?;
    let mut paths = vec![dir.join(OUTCOMES_FILE), dir.join(ENTITIES_FILE), dir.join(SUMMARY_FILE)];
    write_jsonl(&paths[0], &outcomes)?;
    write_jsonl(&paths[1], &entities)?;
    write_json(&paths[2], &report)?;
    paths.extend(render_report(std::slice::from_ref(&report), &dir)?);
    Ok(OutputFiles { paths })
}

/// `extract`, `classify` and `evaluate` in sequence.
pub fn cmd_run(config: &RunConfig) -> Result<(ClassifySummary, OutputFiles), CliError> {
    cmd_extract(config)?;
    let summary = cmd_classify(config)?;
    let files = cmd_evaluate(config)?;
    Ok((summary, files))
}

pub fn cmd_synth(config: &SynthConfig, dir: &Path) -> Result<SynthFiles, CliError> {
    let (corpus, files) = write_corpus(config, dir)?;
    info!(
        notes = corpus.notes.len(),
        positives = corpus.planted_positive_patients(),
        "synthetic corpus written"
    );
    Ok(files)
}

/// Reads `summary.json` from each run directory and renders one combined
/// set of tables.
pub fn cmd_report(runs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut reports = Vec::with_capacity(runs.len());
    for dir in runs {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let report: RunReport = serde_json::from_str(&text).map_err(|e| io_error(&path, e))?;
        reports.push(report);
    }
    Ok(render_report(&reports, out_dir)?)
}

/// Writes `finetune/train.jsonl` and `finetune/validation.jsonl` under the
/// output directory.
pub fn cmd_finetune_data(config: &RunConfig, n_per_class: usize, split: f64) -> Result<PathBuf, CliError> {
    let notes = notes_of(config)?;
    let lexicon = lexicon_of(config)?;
    let export = select_finetune_samples(&notes, &lexicon, n_per_class, split, config.prompt.seed)?;
    let dir = config.output_dir().join("finetune");
    write_finetune_export(&dir, &export)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Preprocessing;
    use crate::synth::IntRange;

    fn three_note_config(dir: &Path) -> RunConfig {
        let notes = dir.join("notes.jsonl");
        fs::write(
            &notes,
            concat!(
                r#"{"note_id":"a","patient_id":"p1","admission_id":"h1","chart_date":"2020-01-01","text":"Stable. Imaging consistent with metastasis. Plan reviewed."}"#,
                "\n",
                r#"{"note_id":"b","patient_id":"p1","admission_id":"h1","chart_date":"2020-01-02","text":"Patient ambulating."}"#,
                "\n",
                r#"{"note_id":"c","patient_id":"p2","admission_id":"h2","chart_date":"2020-01-03","text":"Doing well today."}"#,
                "\n"
            ),
        )
        .unwrap();
        let mut config = RunConfig::default();
        config.paths.notes = Some(notes);
        config.paths.output_dir = Some(dir.join("out"));
        config
    }

    #[test]
    fn extract_writes_one_record_per_note() {
        let dir = tempfile::tempdir().unwrap();
        let config = three_note_config(dir.path());
        let path = cmd_extract(&config).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let records: Vec<crate::extract::PreprocessedNote> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 3);
        assert_eq!(records.iter().filter(|r| r.has_context()).count(), 1);
        let again = cmd_extract(&config).unwrap();
        assert_eq!(fs::read(&again).unwrap(), text.as_bytes());
    }

    #[test]
    fn missing_notes_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = three_note_config(dir.path());
        config.paths.notes = Some(dir.path().join("absent.jsonl"));
        let err = cmd_extract(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message().contains("absent.jsonl"), "{}", err.message());
    }

    #[test]
    fn classify_filters_keyword_free_notes() {
        let dir = tempfile::tempdir().unwrap();
        let config = three_note_config(dir.path());
        let summary = cmd_classify(&config).unwrap();
        assert_eq!((summary.notes, summary.filtered, summary.sent), (3, 2, 1));
        let verdicts = read_verdicts(&summary.verdicts_path).unwrap();
        let ids: Vec<_> = verdicts.iter().map(|v| v.note_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(verdicts[0].label, Label::Metastasis);
        assert!(verdicts[1].skipped && verdicts[2].skipped);
        let raw = fs::read_to_string(&summary.verdicts_path).unwrap();
        assert!(!raw.contains("latency_ms"));

        let again = cmd_classify(&config).unwrap();
        assert_eq!((again.sent, again.answered_from_cache), (0, 1));
    }

    #[test]
    fn evaluate_needs_diagnoses() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = three_note_config(dir.path());
        cmd_classify(&config).unwrap();
        config.paths.diagnoses = Some(dir.path().join("nope.csv"));
        assert_eq!(cmd_evaluate(&config).unwrap_err().exit_code(), 2);
        config.paths.diagnoses = None;
        assert_eq!(cmd_evaluate(&config).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn small_closed_loop_gives_three_window_rows() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            seed: 11,
            n_patients: 30,
            distractor_sentences_per_note: IntRange::new(1, 3),
            ..SynthConfig::default()
        };
        let files = cmd_synth(&synth, &dir.path().join("corpus")).unwrap();
        let mut config = RunConfig::default();
        config.paths.notes = Some(files.notes);
        config.paths.diagnoses = Some(files.diagnoses);
        config.paths.output_dir = Some(dir.path().join("out"));
        for preprocessing in [Preprocessing::On, Preprocessing::Off] {
            config.pipeline.preprocessing = preprocessing;
            cmd_run(&config).unwrap();
            let text = fs::read_to_string(dir.path().join("out").join(SUMMARY_FILE)).unwrap();
            let report: RunReport = serde_json::from_str(&text).unwrap();
            assert_eq!(report.windows.len(), 3);
            for r in &report.rates {
                assert_eq!((r.sensitivity, r.specificity), (1.0, 1.0), "{r:?}");
            }
        }
        let combined = cmd_report(&[dir.path().join("out")], &dir.path().join("combined")).unwrap();
        assert!(combined.iter().all(|p| p.exists()));
    }
}
