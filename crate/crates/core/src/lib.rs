//! Metastasis phenotyping from clinical notes with an LLM backend.

pub mod aggregate;
pub mod cli;
pub mod corpus;
pub mod extract;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod synth;
