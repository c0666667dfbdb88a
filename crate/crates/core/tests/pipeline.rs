mod common;

use std::fs;
use std::process::Command;
use std::time::Duration;

use chrono::NaiveDate;
use common::{example_pool, read_lines, synth_run, StubServer};
use pheno::cli::{cmd_classify, cmd_run, read_verdicts, Preprocessing, RunConfig};
use pheno::corpus::{write_notes, ClinicalNote, TableFormat};
use pheno::extract::Lexicon;
use pheno::llm::{classify_batch, oracle_classify, BackendConfig, ClassifyJob, Label};
use pheno::prompt::{build_zero_shot, PromptMode};
use pheno::synth::{IntRange, SynthConfig};

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_patients: 24,
        distractor_sentences_per_note: IntRange::new(1, 4),
        ..SynthConfig::default()
    }
}

fn pheno_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pheno"));
    cmd.env_remove("PHENO_BASE_URL");
    cmd
}

#[test]
fn http_batch_respects_max_in_flight() {
    let server = StubServer::start(Duration::from_millis(40));
    let config = server.backend(4);
    let backend = config.build(&Lexicon::default()).unwrap();
    let texts = ["Imaging consistent with metastasis.", "No evidence of metastasis.", "Unremarkable."];
    let jobs: Vec<ClassifyJob> = (0..24)
        .map(|i| ClassifyJob {
            note_id: format!("n{i:02}"),
            prompt: build_zero_shot(&format!("Visit {i}. {}", texts[i % 3])).unwrap(),
        })
        .collect();
    let verdicts = classify_batch(&jobs, backend.as_ref(), 4, None).unwrap();
    assert_eq!(server.requests(), 24);
    assert!(server.peak_in_flight() <= 4, "peak {}", server.peak_in_flight());
    assert!(server.peak_in_flight() >= 2, "requests never overlapped");
    for (i, v) in verdicts.iter().enumerate() {
        assert_eq!(v.note_id, format!("n{i:02}"));
        let expected = [Label::Metastasis, Label::NoMetastasis, Label::Unknown][i % 3];
        assert_eq!(v.label, expected);
        assert!(v.parse_ok);
        assert_eq!(v.backend_id, "http-chat:stub-model");
    }
}

#[test]
fn transient_server_errors_are_retried() {
    let server = StubServer::start_with_failures(Duration::ZERO, 2);
    let backend = server.backend(1).build(&Lexicon::default()).unwrap();
    let jobs = vec![ClassifyJob {
        note_id: "n1".into(),
        prompt: build_zero_shot("Imaging consistent with metastasis.").unwrap(),
    }];
    let verdicts = classify_batch(&jobs, backend.as_ref(), 1, None).unwrap();
    assert_eq!(verdicts[0].label, Label::Metastasis);
    assert_eq!(server.requests(), 3);
}

#[test]
fn retries_exhausted_surface_the_note() {
    let server = StubServer::start_with_failures(Duration::ZERO, 10);
    let backend = server.backend(1).build(&Lexicon::default()).unwrap();
    let jobs = vec![ClassifyJob {
        note_id: "n7".into(),
        prompt: build_zero_shot("Imaging consistent with metastasis.").unwrap(),
    }];
    let err = classify_batch(&jobs, backend.as_ref(), 1, None).unwrap_err();
    assert!(err.is_transport());
    assert!(err.to_string().contains("n7"), "{err}");
    assert_eq!(server.requests(), 3);
}

#[test]
fn http_pipeline_matches_oracle_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (mut config, _) = synth_run(dir.path(), &small_synth(4));
    cmd_run(&config).unwrap();
    let oracle = read_verdicts(&dir.path().join("out/verdicts.jsonl")).unwrap();

    let server = StubServer::start(Duration::ZERO);
    config.backend = server.backend(3);
    config.paths.output_dir = Some(dir.path().join("http"));
    let summary = cmd_classify(&config).unwrap();
    assert_eq!(summary.sent, server.requests());
    let http = read_verdicts(&dir.path().join("http/verdicts.jsonl")).unwrap();
    assert_eq!(oracle.len(), http.len());
    for (a, b) in oracle.iter().zip(&http) {
        assert_eq!((&a.note_id, a.label, a.skipped), (&b.note_id, b.label, b.skipped));
    }
}

#[test]
fn keyword_free_and_context_free_notes_never_reach_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let date = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let note = |id: &str, text: &str| ClinicalNote {
        note_id: id.into(),
        patient_id: "p1".into(),
        admission_id: Some("h1".into()),
        chart_date: date,
        text: text.into(),
    };
    let notes_path = dir.path().join("notes.csv");
    write_notes(
        &notes_path,
        TableFormat::Csv,
        &[
            note("plain", "Patient doing well."),
            // The phrase straddles a paragraph break, so no sentence holds it.
            note("split", "Concern for distant\n\nspread raised by family."),
        ],
    )
    .unwrap();
    let server = StubServer::start(Duration::ZERO);
    let mut config = RunConfig::default();
    config.paths.notes = Some(notes_path);
    config.paths.output_dir = Some(dir.path().join("out"));
    config.backend = server.backend(1);

    let summary = cmd_classify(&config).unwrap();
    assert_eq!((summary.filtered, summary.no_context, summary.sent), (1, 1, 0));
    assert_eq!(server.requests(), 0);
    let verdicts = read_verdicts(&summary.verdicts_path).unwrap();
    assert!(verdicts.iter().all(|v| v.label == Label::Unknown));
    let split = verdicts.iter().find(|v| v.note_id == "split").unwrap();
    assert!(!split.skipped);

    config.pipeline.preprocessing = Preprocessing::Off;
    let summary = cmd_classify(&config).unwrap();
    assert_eq!(summary.sent, 1);
    assert_eq!(server.requests(), 1);
}

#[test]
fn few_shot_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (mut config, _) = synth_run(dir.path(), &small_synth(8));
    config.prompt.mode = PromptMode::FewShot;
    config.prompt.shots_total = 3;
    config.paths.example_pool = Some(example_pool(dir.path()));
    let (summary, files) = cmd_run(&config).unwrap();
    assert!(summary.sent > 0);
    let accuracy = read_lines(&dir.path().join("out/accuracy.csv"));
    assert_eq!(accuracy.len(), 4);
    assert!(accuracy[1].contains("Three-shot"));
    assert!(files.paths.iter().all(|p| p.exists()));

    config.paths.example_pool = None;
    assert_eq!(cmd_classify(&config).unwrap_err().exit_code(), 1);
}

#[test]
fn binary_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let status = pheno_bin()
        .args(["synth", "--seed", "2", "--patients", "20", "-o"])
        .arg(dir.path().join("corpus"))
        .output()
        .unwrap();
    assert!(status.status.success());
    fs::write(
        dir.path().join("run.toml"),
        "[paths]\nnotes = 'corpus/notes.jsonl'\ndiagnoses = 'corpus/diagnoses.jsonl'\noutput_dir = 'out'\n\
         [pipeline]\nwindows = [10, 15]\n",
    )
    .unwrap();
    let output = pheno_bin()
        .arg("--config")
        .arg(dir.path().join("run.toml"))
        .arg("run")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let accuracy = read_lines(&dir.path().join("out/accuracy.csv"));
    assert_eq!(accuracy[0], "time_range,method,preprocessing_status,p_correct,p_incorrect,p_inconclusive");
    assert_eq!(accuracy.len(), 3);
    assert!(accuracy[1].starts_with("20 days,Zero-shot,Preprocessed,"));
    let sens = read_lines(&dir.path().join("out/sensitivity.csv"));
    assert_eq!(sens[1], "Zero-shot,Preprocessed,1.0000,1.0000");

    let combined = pheno_bin()
        .arg("report")
        .arg(dir.path().join("out"))
        .arg(dir.path().join("out"))
        .arg("-o")
        .arg(dir.path().join("both"))
        .output()
        .unwrap();
    assert!(combined.status.success());
    assert_eq!(read_lines(&dir.path().join("both/accuracy.csv")).len(), 5);

    let finetune = pheno_bin()
        .arg("--config")
        .arg(dir.path().join("run.toml"))
        .args(["finetune-data", "--n-per-class", "3"])
        .output()
        .unwrap();
    assert!(finetune.status.success());
    assert_eq!(read_lines(&dir.path().join("out/finetune/train.jsonl")).len(), 4);
    assert_eq!(read_lines(&dir.path().join("out/finetune/validation.jsonl")).len(), 2);
}

#[test]
fn binary_takes_base_url_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (config, files) = synth_run(dir.path(), &small_synth(6));
    let server = StubServer::start(Duration::ZERO);
    let output = pheno_bin()
        .env("PHENO_BASE_URL", &server.url)
        .arg("classify")
        .arg("--notes")
        .arg(&files.notes)
        .arg("-o")
        .arg(config.output_dir())
        .args(["--backend", "http-chat", "--model", "stub-model", "--max-in-flight", "2"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(server.requests() > 0);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, files) = synth_run(dir.path(), &small_synth(1));

    let usage = pheno_bin().args(["classify", "--mode", "two-shot"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    assert_eq!(pheno_bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(pheno_bin().arg("--help").output().unwrap().status.code(), Some(0));

    let missing = pheno_bin()
        .args(["extract", "--notes"])
        .arg(dir.path().join("absent.jsonl"))
        .arg("-o")
        .arg(dir.path().join("o1"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.jsonl"));

    // Nothing listens on port 1.
    let transport = pheno_bin()
        .arg("classify")
        .arg("--notes")
        .arg(&files.notes)
        .arg("-o")
        .arg(dir.path().join("o2"))
        .args([
            "--backend",
            "http-chat",
            "--base-url",
            "http://127.0.0.1:1/v1",
            "--model",
            "m",
            "--max-retries",
            "1",
            "--backoff-ms",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(transport.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&transport.stderr).contains("note N"));
}

#[test]
fn oracle_backend_config_round_trip() {
    let c = BackendConfig::rule_oracle();
    let backend = c.build(&Lexicon::default()).unwrap();
    let prompt = build_zero_shot("Scan free of metastasis.").unwrap();
    assert_eq!(backend.complete(&prompt).unwrap().text, "(2)");
    assert_eq!(oracle_classify(prompt.note_text(), &Lexicon::default()), Label::NoMetastasis);
}
