//! Append-only verdict journal keyed by backend and prompt digest.
//!
//! A run killed mid-write can leave a partial last line; opening the cache
//! drops that line so the next append starts on a clean record boundary.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmError, NoteVerdict};

/// Hex SHA-256 of the prompt text.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(flatten)]
    pub verdict: NoteVerdict,
    pub prompt_sha256: String,
}

pub struct VerdictCache {
    path: PathBuf,
    entries: HashMap<(String, String), NoteVerdict>,
    file: File,
}

impl VerdictCache {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let err = |message: String| LlmError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        let mut keep_bytes = 0u64;
        if path.exists() {
            let file = File::open(path).map_err(|e| err(e.to_string()))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| err(e.to_string()))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    // Torn final write.
                    break;
                }
                if !line.trim().is_empty() {
                    let entry: CacheEntry = serde_json::from_str(&line)
                        .map_err(|e| err(format!("line {line_no}: {e}")))?;
                    entries.insert(
                        (entry.verdict.backend_id.clone(), entry.prompt_sha256),
                        entry.verdict,
                    );
                }
                keep_bytes += n as u64;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .map_err(|e| err(e.to_string()))?;
        file.set_len(keep_bytes).map_err(|e| err(e.to_string()))?;
        let mut cache = Self {
            path: path.to_path_buf(),
            entries,
            file,
        };
        cache.seek_end()?;
        Ok(cache)
    }

    fn seek_end(&mut self) -> Result<(), LlmError> {
        use std::io::{Seek, SeekFrom};
        self.file.seek(SeekFrom::End(0)).map_err(|e| LlmError::Cache {
            path: self.path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, backend_id: &str, prompt_sha256: &str) -> Option<&NoteVerdict> {
        self.entries
            .get(&(backend_id.to_string(), prompt_sha256.to_string()))
    }

    /// Writes one record and flushes it before returning.
    pub fn append(&mut self, verdict: &NoteVerdict, prompt_sha256: &str) -> Result<(), LlmError> {
        let entry = CacheEntry {
            verdict: verdict.clone(),
            prompt_sha256: prompt_sha256.to_string(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| LlmError::Cache {
            path: self.path.display().to_string(),
            message: e.to_string(),
        })?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| LlmError::Cache {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })?;
        self.entries.insert(
            (verdict.backend_id.clone(), entry.prompt_sha256),
            entry.verdict,
        );
        Ok(())
    }
}
