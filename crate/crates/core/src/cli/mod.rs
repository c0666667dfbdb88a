//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 backend transport failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::aggregate::AggregateError;
use crate::corpus::{CorpusError, Granularity};
use crate::extract::ExtractError;
use crate::llm::{BackendKind, LlmError};
use crate::metrics::MetricsError;
use crate::prompt::{PromptError, PromptMode};
use crate::synth::{IntRange, SynthConfig, SynthError};

pub use commands::{
    cmd_classify, cmd_evaluate, cmd_extract, cmd_finetune_data, cmd_report, cmd_run, cmd_synth,
    read_verdicts, ClassifySummary, OutputFiles,
};
pub use config::{PathsConfig, PipelineConfig, Preprocessing, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Transport,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            Self::Usage => 1,
            Self::Data => 2,
            Self::Transport => 3,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl fmt::Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::BadSplit(_) => Self::config(e),
            _ => Self::data(e),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        Self::config(e)
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Pool { .. } | PromptError::InsufficientPool { .. } | PromptError::EmptyNote => {
                Self::data(e)
            }
            _ => Self::config(e),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        if e.is_transport() {
            Self::new(ErrorKind::Transport, e)
        } else if matches!(e, LlmError::Config(_)) {
            Self::config(e)
        } else {
            Self::data(e)
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::data(e)
    }
}

impl From<AggregateError> for CliError {
    fn from(e: AggregateError) -> Self {
        Self::data(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => Self::config(e),
            SynthError::Write(_) => Self::data(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pheno", version, about = "Metastasis phenotyping from clinical notes")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keyword-anchored context extraction into preprocessed.jsonl.
    Extract(Overrides),
    /// Classify notes into verdicts.jsonl (resumable).
    Classify(Overrides),
    /// Window accuracy and cohort rates from verdicts.jsonl.
    Evaluate(Overrides),
    /// Extract, classify and evaluate in one go.
    Run(Overrides),
    /// Write a synthetic corpus with planted labels.
    Synth(SynthArgs),
    /// Combine the summaries of several runs into one set of tables.
    Report(ReportArgs),
    /// Export labelled train/validation samples for fine-tuning.
    FinetuneData(FinetuneArgs),
}

/// Flags that override the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub diagnoses: Option<PathBuf>,
    /// Keyword list, one phrase per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Labelled examples (JSONL) for few-shot prompting.
    #[arg(long)]
    pub example_pool: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub zero_shot_template: Option<PathBuf>,
    #[arg(long)]
    pub few_shot_template: Option<PathBuf>,
    /// zero-shot or few-shot.
    #[arg(long)]
    pub mode: Option<String>,
    /// Total few-shot examples (3, 6, 9, ...).
    #[arg(long)]
    pub shots: Option<usize>,
    /// Seed for example selection and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// rule-oracle or http-chat.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, env = "PHENO_BASE_URL")]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    /// on or off.
    #[arg(long)]
    pub preprocessing: Option<String>,
    #[arg(long)]
    pub radius: Option<usize>,
    /// Window half-widths in days, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<u32>>,
    /// patient and/or admission, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub granularities: Option<Vec<String>>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        let paths = &mut config.paths;
        for (slot, value) in [
            (&mut paths.notes, &self.notes),
            (&mut paths.diagnoses, &self.diagnoses),
            (&mut paths.lexicon, &self.lexicon),
            (&mut paths.example_pool, &self.example_pool),
            (&mut paths.output_dir, &self.output_dir),
            (&mut paths.zero_shot_template, &self.zero_shot_template),
            (&mut paths.few_shot_template, &self.few_shot_template),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }

        if let Some(mode) = &self.mode {
            config.prompt.mode = match mode.replace('-', "_").to_ascii_lowercase().as_str() {
                "zero_shot" => PromptMode::ZeroShot,
                "few_shot" => PromptMode::FewShot,
                other => return Err(CliError::config(format!("unknown prompt mode {other:?}"))),
            };
        }
        if let Some(k) = self.shots {
            config.prompt.shots_total = k;
        }
        if let Some(seed) = self.seed {
            config.prompt.seed = seed;
        }

        let backend = &mut config.backend;
        if let Some(kind) = &self.backend {
            backend.kind = match kind.replace('-', "_").to_ascii_lowercase().as_str() {
                "rule_oracle" | "oracle" => BackendKind::RuleOracle,
                "http_chat" | "http" => BackendKind::HttpChat,
                other => return Err(CliError::config(format!("unknown backend {other:?}"))),
            };
        }
        if self.base_url.is_some() {
            backend.base_url.clone_from(&self.base_url);
        }
        if self.model.is_some() {
            backend.model_name.clone_from(&self.model);
        }
        if let Some(v) = self.temperature {
            backend.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            backend.max_tokens = v;
        }
        if let Some(v) = self.timeout_ms {
            backend.timeout_ms = v;
        }
        if let Some(v) = self.max_retries {
            backend.max_retries = v;
        }
        if let Some(v) = self.max_in_flight {
            backend.max_in_flight = v;
        }
        if let Some(v) = self.backoff_ms {
            backend.backoff_ms = v;
        }

        let pipeline = &mut config.pipeline;
        if let Some(p) = &self.preprocessing {
            pipeline.preprocessing = p.parse().map_err(CliError::config)?;
        }
        if let Some(r) = self.radius {
            pipeline.radius = r;
        }
        if let Some(w) = &self.windows {
            pipeline.windows.clone_from(w);
        }
        if let Some(gs) = &self.granularities {
            pipeline.granularities = gs
                .iter()
                .map(|g| g.parse::<Granularity>().map_err(CliError::config))
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }
}

fn parse_range(s: &str) -> Result<IntRange, String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['-', ':']) {
        Some((a, b)) => Ok(IntRange::new(parse(a)?, parse(b)?)),
        None => {
            let v = parse(s)?;
            Ok(IntRange::new(v, v))
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, short = 'o')]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub negation_rate: Option<f64>,
    #[arg(long)]
    pub negative_mention_rate: Option<f64>,
    /// Inclusive range such as 2-6.
    #[arg(long, value_parser = parse_range)]
    pub notes_per_patient: Option<IntRange>,
    #[arg(long, value_parser = parse_range)]
    pub admissions_per_patient: Option<IntRange>,
    #[arg(long, value_parser = parse_range)]
    pub distractors: Option<IntRange>,
    #[arg(long)]
    pub anchor_start: Option<NaiveDate>,
    #[arg(long)]
    pub anchor_end: Option<NaiveDate>,
}

impl SynthArgs {
    pub fn to_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            seed: self.seed.unwrap_or(d.seed),
            n_patients: self.patients.unwrap_or(d.n_patients),
            prevalence: self.prevalence.unwrap_or(d.prevalence),
            notes_per_patient: self.notes_per_patient.unwrap_or(d.notes_per_patient),
            admissions_per_patient: self.admissions_per_patient.unwrap_or(d.admissions_per_patient),
            distractor_sentences_per_note: self.distractors.unwrap_or(d.distractor_sentences_per_note),
            negation_rate: self.negation_rate.unwrap_or(d.negation_rate),
            negative_mention_rate: self.negative_mention_rate.unwrap_or(d.negative_mention_rate),
            anchor_start: self.anchor_start.unwrap_or(d.anchor_start),
            anchor_end: self.anchor_end.unwrap_or(d.anchor_end),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directories of earlier `evaluate` runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, short = 'o')]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, default_value_t = 50)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
}

fn load_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

/// Runs one parsed invocation, printing a short summary to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config.as_ref();
    match &cli.command {
        Command::Extract(o) => {
            let path = cmd_extract(&load_config(config, o)?)?;
            println!("wrote {}", path.display());
        }
        Command::Classify(o) => {
            let summary = cmd_classify(&load_config(config, o)?)?;
            println!("{summary}");
        }
        Command::Evaluate(o) => {
            let files = cmd_evaluate(&load_config(config, o)?)?;
            println!("{files}");
        }
        Command::Run(o) => {
            let (summary, files) = cmd_run(&load_config(config, o)?)?;
            println!("{summary}");
            println!("{files}");
        }
        Command::Synth(args) => {
            let files = cmd_synth(&args.to_config(), &args.out_dir)?;
            for p in [files.notes, files.diagnoses, files.truth] {
                println!("wrote {}", p.display());
            }
        }
        Command::Report(args) => {
            for p in cmd_report(&args.runs, &args.out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::FinetuneData(args) => {
            let run = load_config(config, &args.overrides)?;
            let dir = cmd_finetune_data(&run, args.n_per_class, args.split)?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}
