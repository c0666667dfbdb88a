use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use tracing::info;

use super::{classify, prompt_digest, Backend, LlmError, NoteVerdict, VerdictCache};
use crate::prompt::Prompt;

#[derive(Debug, Clone)]
pub struct ClassifyJob {
    pub note_id: String,
    pub prompt: Prompt,
}

/// Classifies every job, at most `max_in_flight` at a time.
///
/// Jobs whose `(backend, prompt digest)` is already cached are answered from
/// the cache. Fresh verdicts are appended to the cache as they complete, so
/// an interrupted batch resumes where it stopped. The result follows job
/// order regardless of completion order. On the first transport failure no
/// new requests start; in-flight ones finish and are cached.
pub fn classify_batch(
    jobs: &[ClassifyJob],
    backend: &dyn Backend,
    max_in_flight: usize,
    mut cache: Option<&mut VerdictCache>,
) -> Result<Vec<NoteVerdict>, LlmError> {
    let backend_id = backend.id();
    let digests: Vec<String> = jobs.iter().map(|j| prompt_digest(j.prompt.text())).collect();
    let mut results: Vec<Option<NoteVerdict>> = vec![None; jobs.len()];
    let mut pending = Vec::new();
    for (i, job) in jobs.iter().enumerate() {
        match cache.as_ref().and_then(|c| c.get(&backend_id, &digests[i])) {
            Some(hit) => {
                results[i] = Some(NoteVerdict {
                    note_id: job.note_id.clone(),
                    ..hit.clone()
                })
            }
            None => pending.push(i),
        }
    }
    info!(
        total = jobs.len(),
        cached = jobs.len() - pending.len(),
        "classifying"
    );

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = max_in_flight.max(1).min(pending.len().max(1));
    let (tx, rx) = mpsc::channel::<(usize, Result<NoteVerdict, LlmError>)>();
    let mut first_error: Option<LlmError> = None;

    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, pending) = (&next, &abort, &pending);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(slot) else {
                    break;
                };
                let job = &jobs[i];
                let outcome = classify(&job.note_id, &job.prompt, backend);
                if outcome.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for (i, outcome) in rx {
            match outcome {
                Ok(verdict) => {
                    if let Some(cache) = cache.as_deref_mut() {
                        if let Err(e) = cache.append(&verdict, &digests[i]) {
                            abort.store(true, Ordering::SeqCst);
                            first_error.get_or_insert(e);
                        }
                    }
                    results[i] = Some(verdict);
                }
                Err(e) => {
                    first_error.get_or_insert(LlmError::Note {
                        note_id: jobs[i].note_id.clone(),
                        source: Box::new(e),
                    });
                }
            }
        }
    });

    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(results
        .into_iter()
        .map(|v| v.expect("every job resolved"))
        .collect())
}
