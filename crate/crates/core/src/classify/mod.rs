//! Two-stage zero-shot toxicity classification over a pluggable
//! chat-completion backend.
//!
//! Stage one asks for a binary yes/no toxicity verdict with the preceding
//! ten seconds of same-stream chat as context; messages judged toxic get a
//! second request that assigns a primary and optional secondary subclass.
//! Results land in an append-only label store keyed by message id, so an
//! interrupted run resumes without re-issuing finished requests.

mod backend;
mod store;

pub use backend::{
    Backend, BackendError, CapturedRequest, HttpBackend, MockBackend, RecordingBackend,
    ReplayBackend,
};
pub use store::LabelStore;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::digest16;
use crate::ingest::{ChatMessage, Corpus};
use crate::prelabel::{PreLabelAssignment, PreLabelClass};
use crate::taxonomy::{alias_table, normalize_label_text, Subclass};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: BackendError },
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("label store corrupt at line {line}: {detail}")]
    StoreCorrupt { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which of the two classification prompts a payload carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Binary,
    Subclass,
}

impl Stage {
    fn token(self) -> &'static str {
        match self {
            Stage::Binary => "binary",
            Stage::Subclass => "subclass",
        }
    }
}

/// Same-stream chat lines preceding the target message, ordered by offset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    /// (user, text) pairs.
    pub messages: Vec<(String, String)>,
}

impl Context {
    /// One "user: text" line per context message.
    pub fn lines(&self) -> Vec<String> {
        self.messages
            .iter()
            .map(|(user, text)| format!("{user}: {text}"))
            .collect()
    }
}

/// A fully rendered request: deterministic for identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptPayload {
    pub system_instruction: String,
    pub user_content: String,
    pub stage: Stage,
}

impl PromptPayload {
    /// Stable 16-hex digest; the key for request capture and replay logs.
    pub fn digest(&self) -> String {
        digest16(&[
            self.stage.token().as_bytes(),
            b"\x00",
            self.system_instruction.as_bytes(),
            b"\x00",
            self.user_content.as_bytes(),
        ])
    }
}

/// Classification verdict for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    PreNonToxic,
    Bot,
    NonToxic,
    Toxic,
    Invalid,
}

impl LabelStatus {
    pub fn token(self) -> &'static str {
        match self {
            LabelStatus::PreNonToxic => "pre_non_toxic",
            LabelStatus::Bot => "bot",
            LabelStatus::NonToxic => "non_toxic",
            LabelStatus::Toxic => "toxic",
            LabelStatus::Invalid => "invalid",
        }
    }
}

/// One committed label-store record.
///
/// Subclasses are present exactly when the status is `Toxic`; a secondary
/// subclass implies a primary and never equals it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityLabel {
    pub message_id: String,
    pub status: LabelStatus,
    pub primary: Option<Subclass>,
    pub secondary: Option<Subclass>,
    pub backend_id: String,
    pub response_digest: String,
}

impl ToxicityLabel {
    pub fn toxic(
        message_id: String,
        primary: Subclass,
        secondary: Option<Subclass>,
        backend_id: String,
        response_digest: String,
    ) -> Self {
        let secondary = secondary.filter(|&s| s != primary);
        Self {
            message_id,
            status: LabelStatus::Toxic,
            primary: Some(primary),
            secondary,
            backend_id,
            response_digest,
        }
    }

    pub fn non_toxic(message_id: String, backend_id: String, response_digest: String) -> Self {
        Self {
            message_id,
            status: LabelStatus::NonToxic,
            primary: None,
            secondary: None,
            backend_id,
            response_digest,
        }
    }

    pub fn invalid(message_id: String, backend_id: String, response_digest: String) -> Self {
        Self {
            message_id,
            status: LabelStatus::Invalid,
            primary: None,
            secondary: None,
            backend_id,
            response_digest,
        }
    }

    pub fn pre_non_toxic(message_id: String) -> Self {
        Self {
            message_id,
            status: LabelStatus::PreNonToxic,
            primary: None,
            secondary: None,
            backend_id: "prelabel".into(),
            response_digest: String::new(),
        }
    }

    pub fn bot(message_id: String) -> Self {
        Self {
            message_id,
            status: LabelStatus::Bot,
            primary: None,
            secondary: None,
            backend_id: "prelabel".into(),
            response_digest: String::new(),
        }
    }

    /// Structural invariants, re-checked when records come off disk.
    pub fn check(&self) -> Result<(), String> {
        match self.status {
            LabelStatus::Toxic => {
                if self.primary.is_none() {
                    return Err("toxic label without a primary subclass".into());
                }
                if self.secondary.is_some() && self.secondary == self.primary {
                    return Err("secondary subclass equals primary".into());
                }
            }
            _ => {
                if self.primary.is_some() || self.secondary.is_some() {
                    return Err(format!(
                        "status '{}' must not carry subclasses",
                        self.status.token()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Context window over a time-ordered stream: messages with offset in
/// `[target − window_s, target)`, earlier boundary inclusive, target-time
/// exclusive. When more than `cap` qualify, the most recent `cap` are kept.
pub fn build_context(
    stream_messages: &[ChatMessage],
    target_index: usize,
    window_s: f64,
    cap: usize,
) -> Context {
    let target = &stream_messages[target_index];
    let lower = target.offset_s - window_s;
    let mut picked: Vec<&ChatMessage> = Vec::new();
    for m in stream_messages[..target_index].iter().rev() {
        if m.offset_s < lower {
            break;
        }
        if m.offset_s < target.offset_s {
            picked.push(m);
        }
    }
    picked.reverse();
    if picked.len() > cap {
        picked.drain(..picked.len() - cap);
    }
    Context {
        messages: picked
            .into_iter()
            .map(|m| (m.user.clone(), m.text.clone()))
            .collect(),
    }
}

fn taxonomy_definitions() -> String {
    Subclass::ALL
        .iter()
        .map(|s| {
            format!(
                "{} / {}: {}",
                s.category().display_name(),
                s.display_name(),
                s.definition()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn candidate_labels() -> String {
    Subclass::ALL
        .iter()
        .map(|s| s.token())
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_user_content(target: &ChatMessage, ctx: &Context) -> String {
    let mut out = String::from("Chat context (same stream, immediately before the message):\n");
    if ctx.messages.is_empty() {
        out.push_str("(no prior context)\n");
    } else {
        for line in ctx.lines() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("\nMessage to classify:\n");
    out.push_str(&format!("{}: {}", target.user, target.text));
    out
}

/// Renders the instruction prompt for one message. Byte-identical output for
/// identical inputs; both stages embed the moderation-rule definitions and
/// demand a machine-parseable one-line answer.
pub fn render_prompt(target: &ChatMessage, ctx: &Context, stage: Stage) -> PromptPayload {
    let system_instruction = match stage {
        Stage::Binary => format!(
            "You are a strict content-moderation classifier for live-stream chat.\n\
             A chat message is toxic when it matches any of these definitions of \
             inappropriate or harmful content:\n\n{}\n\n\
             Judge only the final message; the earlier chat lines are context.\n\
             Answer with exactly one word: \"yes\" if the message is toxic, \"no\" if it is not.",
            taxonomy_definitions()
        ),
        Stage::Subclass => format!(
            "You are a strict content-moderation classifier for live-stream chat.\n\
             The final message was judged toxic. Assign the best-fitting toxicity subclass, \
             and a secondary subclass only if one clearly also applies.\n\
             Subclass definitions:\n\n{}\n\n\
             Candidate labels: {}.\n\
             Answer on one line as: primary: <label>; secondary: <label or none>.",
            taxonomy_definitions(),
            candidate_labels()
        ),
    };
    PromptPayload {
        system_instruction,
        user_content: render_user_content(target, ctx),
        stage,
    }
}

/// Stage-one verdict. `Invalid` is a value, not an error: it marks a
/// nonconforming model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryVerdict {
    Toxic,
    NonToxic,
    Invalid,
}

/// Case-insensitive leading-token match on yes/no after trimming punctuation.
pub fn parse_binary_response(raw: &str) -> BinaryVerdict {
    let first = raw.split_whitespace().next().unwrap_or("");
    let token = first
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    match token.as_str() {
        "yes" => BinaryVerdict::Toxic,
        "no" => BinaryVerdict::NonToxic,
        _ => BinaryVerdict::Invalid,
    }
}

/// Stage-two verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubclassVerdict {
    Labeled {
        primary: Subclass,
        secondary: Option<Subclass>,
    },
    Invalid,
}

/// Scans the response for the first two recognizable subclass tokens
/// (longest alias match wins at each position). A duplicated second token
/// collapses to primary-only; no recognizable token at all is `Invalid`.
pub fn parse_subclass_response(raw: &str) -> SubclassVerdict {
    let normalized = normalize_label_text(raw);
    let words: Vec<&str> = normalized.split(' ').filter(|w| !w.is_empty()).collect();
    let mut aliases: Vec<(Vec<&str>, Subclass)> = alias_table()
        .iter()
        .map(|&(alias, s)| (alias.split(' ').collect(), s))
        .collect();
    aliases.sort_by_key(|(words, _)| std::cmp::Reverse(words.len()));

    let mut found: Vec<Subclass> = Vec::new();
    let mut i = 0;
    while i < words.len() && found.len() < 2 {
        let mut advanced = false;
        for (alias_words, subclass) in &aliases {
            if words[i..].starts_with(alias_words) {
                found.push(*subclass);
                i += alias_words.len();
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    match found.as_slice() {
        [] => SubclassVerdict::Invalid,
        [primary] => SubclassVerdict::Labeled {
            primary: *primary,
            secondary: None,
        },
        [primary, secondary] => SubclassVerdict::Labeled {
            primary: *primary,
            secondary: (secondary != primary).then_some(*secondary),
        },
        _ => unreachable!("scanner stops at two tokens"),
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    pub window_s: f64,
    pub context_cap: usize,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            context_cap: 50,
            max_in_flight: 4,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

/// Sends one request, retrying transient failures with exponential backoff
/// (base, 2×base, 4×base, ...) up to `max_retries` extra attempts.
pub fn send_with_retry(
    backend: &dyn Backend,
    payload: &PromptPayload,
    cfg: &ClassifyConfig,
) -> Result<String, ClassifyError> {
    let mut attempt: u32 = 0;
    loop {
        match backend.send(payload) {
            Ok(response) => return Ok(response),
            Err(e) if e.is_retryable() => {
                if attempt >= cfg.max_retries {
                    return Err(ClassifyError::BackendUnavailable {
                        attempts: attempt + 1,
                        last: e,
                    });
                }
                std::thread::sleep(cfg.backoff_base * 2u32.saturating_pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(ClassifyError::Backend(e)),
        }
    }
}

/// Runs the two-stage scheme for one message and builds its label.
fn classify_one(
    stream_messages: &[ChatMessage],
    local_index: usize,
    backend: &dyn Backend,
    cfg: &ClassifyConfig,
    requests: &AtomicU64,
) -> Result<ToxicityLabel, ClassifyError> {
    let target = &stream_messages[local_index];
    let ctx = build_context(stream_messages, local_index, cfg.window_s, cfg.context_cap);
    let binary_payload = render_prompt(target, &ctx, Stage::Binary);
    requests.fetch_add(1, Ordering::Relaxed);
    let binary_raw = send_with_retry(backend, &binary_payload, cfg)?;
    let id = target.message_id.clone();
    match parse_binary_response(&binary_raw) {
        BinaryVerdict::Invalid => Ok(ToxicityLabel::invalid(
            id,
            backend.id(),
            digest16(&[binary_raw.as_bytes()]),
        )),
        BinaryVerdict::NonToxic => Ok(ToxicityLabel::non_toxic(
            id,
            backend.id(),
            digest16(&[binary_raw.as_bytes()]),
        )),
        BinaryVerdict::Toxic => {
            let subclass_payload = render_prompt(target, &ctx, Stage::Subclass);
            requests.fetch_add(1, Ordering::Relaxed);
            let subclass_raw = send_with_retry(backend, &subclass_payload, cfg)?;
            let digest = digest16(&[binary_raw.as_bytes(), b"\n", subclass_raw.as_bytes()]);
            match parse_subclass_response(&subclass_raw) {
                SubclassVerdict::Labeled { primary, secondary } => Ok(ToxicityLabel::toxic(
                    id,
                    primary,
                    secondary,
                    backend.id(),
                    digest,
                )),
                SubclassVerdict::Invalid => Ok(ToxicityLabel::invalid(id, backend.id(), digest)),
            }
        }
    }
}

/// Commits `Bot`/`PreNonToxic` records, in corpus order, for every
/// pre-labeled message not yet in the store. Returns the number written.
/// Idempotent: existing records are left alone.
pub fn commit_prelabels(
    corpus: &Corpus,
    assignment: &PreLabelAssignment,
    store: &mut LabelStore,
) -> Result<u64, ClassifyError> {
    let mut written = 0u64;
    for (global, message) in corpus.messages().iter().enumerate() {
        if store.contains(&message.message_id) {
            continue;
        }
        match assignment.class_of(global) {
            PreLabelClass::BotMessage => {
                store.append(&ToxicityLabel::bot(message.message_id.clone()))?;
                written += 1;
            }
            PreLabelClass::AllowlistedNonToxic => {
                store.append(&ToxicityLabel::pre_non_toxic(message.message_id.clone()))?;
                written += 1;
            }
            PreLabelClass::NeedsClassification => {}
        }
    }
    Ok(written)
}

/// Counts per final status plus run bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassificationSummary {
    pub total_messages: u64,
    pub pre_non_toxic: u64,
    pub bot: u64,
    pub non_toxic: u64,
    pub toxic: u64,
    pub invalid: u64,
    pub toxic_rate: f64,
    pub invalid_rate: f64,
    /// Messages already in the store when the run started.
    pub already_labeled: u64,
    /// Backend requests issued by this run (both stages).
    pub requests_issued: u64,
}

/// Classifies every message that still needs a label.
///
/// Pre-labeled messages are committed first (and never reach the backend);
/// the rest flow through up to `max_in_flight` concurrent workers. Results
/// commit in corpus order through a single writer, so the store is always a
/// prefix of the uninterrupted run's store and a killed run resumes to a
/// byte-identical file. On failure, committed progress is preserved.
pub fn classify_corpus(
    corpus: &Corpus,
    assignment: &PreLabelAssignment,
    backend: &dyn Backend,
    store: &mut LabelStore,
    cfg: &ClassifyConfig,
) -> Result<ClassificationSummary, ClassifyError> {
    let already_labeled = corpus
        .messages()
        .iter()
        .filter(|m| store.contains(&m.message_id))
        .count() as u64;
    commit_prelabels(corpus, assignment, store)?;
    let mut work: Vec<(usize, usize)> = Vec::new();
    for (global, message) in corpus.messages().iter().enumerate() {
        if assignment.class_of(global) == PreLabelClass::NeedsClassification
            && !store.contains(&message.message_id)
        {
            work.push(corpus.locate(global));
        }
    }

    let requests = AtomicU64::new(0);
    let next_item = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let n_workers = cfg.max_in_flight.max(1).min(work.len().max(1));

    let run_result: Result<(), ClassifyError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<ToxicityLabel, ClassifyError>)>();
        for _ in 0..n_workers {
            let tx = tx.clone();
            let work = &work;
            let requests = &requests;
            let next_item = &next_item;
            let abort = &abort;
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let idx = next_item.fetch_add(1, Ordering::Relaxed);
                if idx >= work.len() {
                    break;
                }
                let (stream_idx, local) = work[idx];
                let result = classify_one(
                    corpus.messages_of(stream_idx),
                    local,
                    backend,
                    cfg,
                    requests,
                );
                if result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                if tx.send((idx, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single committer: release results strictly in work order so the
        // store stays a prefix of the complete run regardless of scheduling.
        let mut pending: BTreeMap<usize, Result<ToxicityLabel, ClassifyError>> = BTreeMap::new();
        let mut next_commit = 0usize;
        let mut first_error: Option<ClassifyError> = None;
        for (idx, result) in rx {
            pending.insert(idx, result);
            while let Some(result) = pending.remove(&next_commit) {
                next_commit += 1;
                match result {
                    Ok(label) => {
                        if first_error.is_none() {
                            store.append(&label)?;
                        }
                    }
                    Err(e) => {
                        if first_error.is_none() {
                            first_error = Some(e);
                        }
                    }
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    });
    run_result?;

    let mut summary = ClassificationSummary {
        total_messages: corpus.message_count() as u64,
        already_labeled,
        requests_issued: requests.load(Ordering::Relaxed),
        ..Default::default()
    };
    for message in corpus.messages() {
        match store.get(&message.message_id).map(|l| l.status) {
            Some(LabelStatus::PreNonToxic) => summary.pre_non_toxic += 1,
            Some(LabelStatus::Bot) => summary.bot += 1,
            Some(LabelStatus::NonToxic) => summary.non_toxic += 1,
            Some(LabelStatus::Toxic) => summary.toxic += 1,
            Some(LabelStatus::Invalid) => summary.invalid += 1,
            None => {}
        }
    }
    if summary.total_messages > 0 {
        summary.toxic_rate = summary.toxic as f64 / summary.total_messages as f64;
        summary.invalid_rate = summary.invalid as f64 / summary.total_messages as f64;
    }
    Ok(summary)
}
