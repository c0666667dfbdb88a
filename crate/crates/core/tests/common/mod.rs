#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock};
use std::thread;
use std::time::Duration;

use pheno::cli::RunConfig;
use pheno::extract::Lexicon;
use pheno::llm::{oracle_classify, BackendConfig};
use pheno::synth::{write_corpus, SynthConfig, SynthFiles};

const NOTE_MARKER: &str = "determine if the patient has metastasis:\n\n";

static LEXICON: LazyLock<Lexicon> = LazyLock::new(Lexicon::default);

#[derive(Default)]
struct Stats {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    requests: AtomicUsize,
    failures_left: AtomicUsize,
}

/// Local chat-completion server that answers like the rule oracle would on
/// the note part of the prompt, optionally slowly or with leading 500s.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    stats: Arc<Stats>,
    worker: Option<thread::JoinHandle<()>>,
    pub url: String,
}

impl StubServer {
    pub fn start(delay: Duration) -> Self {
        Self::start_with_failures(delay, 0)
    }

    pub fn start_with_failures(delay: Duration, failures: usize) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let stats = Arc::new(Stats::default());
        stats.failures_left.store(failures, Ordering::SeqCst);
        let worker = {
            let server = Arc::clone(&server);
            let stats = Arc::clone(&stats);
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    let stats = Arc::clone(&stats);
                    thread::spawn(move || handle(request, &stats, delay));
                }
            })
        };
        Self {
            server,
            stats,
            worker: Some(worker),
            url: format!("http://127.0.0.1:{port}/v1"),
        }
    }

    pub fn peak_in_flight(&self) -> usize {
        self.stats.peak.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    pub fn backend(&self, max_in_flight: usize) -> BackendConfig {
        BackendConfig {
            max_in_flight,
            max_retries: 2,
            backoff_ms: 10,
            timeout_ms: 10_000,
            ..BackendConfig::http_chat(&self.url, "stub-model")
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn answer_for(body: &str) -> String {
    let request: serde_json::Value = serde_json::from_str(body).unwrap_or_default();
    let content = request["messages"][0]["content"].as_str().unwrap_or_default();
    let note = content.rsplit_once(NOTE_MARKER).map(|(_, n)| n).unwrap_or(content);
    let label = oracle_classify(note, &LEXICON);
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": label.answer()}}]
    })
    .to_string()
}

fn handle(mut request: tiny_http::Request, stats: &Stats, delay: Duration) {
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    stats.requests.fetch_add(1, Ordering::SeqCst);
    let mut body = String::new();
    let _ = request.as_reader().read_to_string(&mut body);
    thread::sleep(delay);
    let fail = stats
        .failures_left
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    let json: tiny_http::Header = "Content-Type: application/json".parse().expect("header");
    let response = if fail {
        tiny_http::Response::from_string("{\"error\":\"busy\"}")
            .with_status_code(500)
            .with_header(json)
    } else {
        tiny_http::Response::from_string(answer_for(&body)).with_header(json)
    };
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    let _ = request.respond(response);
}

/// Writes a synthetic corpus into `dir/corpus` and returns a run config
/// pointing at it, with output under `dir/out`.
pub fn synth_run(dir: &Path, synth: &SynthConfig) -> (RunConfig, SynthFiles) {
    let (_, files) = write_corpus(synth, &dir.join("corpus")).expect("synth corpus");
    let mut config = RunConfig::default();
    config.paths.notes = Some(files.notes.clone());
    config.paths.diagnoses = Some(files.diagnoses.clone());
    config.paths.output_dir = Some(dir.join("out"));
    (config, files)
}

pub fn example_pool(dir: &Path) -> PathBuf {
    let path = dir.join("pool.jsonl");
    let rows = [
        ("CT shows liver lesions consistent with metastasis.", 1),
        ("Bone scan demonstrates metastatic disease in the spine.", 1),
        ("PET positive for distant spread to the lung.", 1),
        ("No evidence of metastatic disease on restaging.", 2),
        ("Imaging negative for metastasis.", 2),
        ("Free of distant spread at this time.", 2),
        ("Patient seen for routine follow-up.", 3),
        ("Tolerating radiation well with mild mucositis.", 3),
        ("Labs within normal limits.", 3),
    ];
    let text: String = rows
        .iter()
        .map(|(t, l)| format!("{}\n", serde_json::json!({"text": t, "label": l})))
        .collect();
    std::fs::write(&path, text).expect("write pool");
    path
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}
