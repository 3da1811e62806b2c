//! Batch analytics for live-stream chat toxicity.
//!
//! The pipeline runs in explicit stages: ingest chat dumps into a normalized
//! corpus, pre-label objectively non-toxic and bot messages, classify the rest
//! through a pluggable chat-completion backend in two zero-shot stages, then
//! compute ratio, prevalence, co-occurrence, and distribution-comparison
//! analyses over the labeled corpus.

pub mod analysis;
pub mod classify;
pub mod digest;
pub mod ingest;
pub mod prelabel;
pub mod report;
pub mod taxonomy;
