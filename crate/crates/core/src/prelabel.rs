//! Deterministic pre-labeling: objectively non-toxic frequent messages and
//! known-bot messages are diverted before the LLM ever sees them.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::Serialize;

use crate::ingest::{Corpus, IngestError};

/// Messages that unambiguously carry no toxicity, shipped as a conservative
/// default; the curated list is normally supplied via config.
pub const DEFAULT_ALLOWLIST: [&str; 7] = ["hi", "yes", "gg", "lol", "hello", "no", "gl"];

/// Chat bots named in stream setups; extendable via config.
pub const DEFAULT_BOTS: [&str; 2] = ["Nightbot", "StreamElements"];

#[derive(Debug, Clone)]
pub struct PreLabelRuleSet {
    /// Exact lowercase message strings (matched case-insensitively on trimmed
    /// text).
    allowlist: BTreeSet<String>,
    /// Exact user names (matched case-sensitively).
    bot_users: BTreeSet<String>,
}

impl PreLabelRuleSet {
    pub fn new(
        allowlist: impl IntoIterator<Item = String>,
        bots: impl IntoIterator<Item = String>,
    ) -> Self {
        Self {
            allowlist: allowlist
                .into_iter()
                .map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect(),
            bot_users: bots.into_iter().collect(),
        }
    }

    pub fn defaults() -> Self {
        Self::new(
            DEFAULT_ALLOWLIST.iter().map(|s| s.to_string()),
            DEFAULT_BOTS.iter().map(|s| s.to_string()),
        )
    }

    /// Reads one entry per line; blank lines and `#` comments are ignored.
    pub fn load_list_file(path: &Path) -> Result<Vec<String>, IngestError> {
        let file = std::fs::File::open(path).map_err(|e| IngestError::FileNotReadable {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut entries = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            entries.push(trimmed.to_string());
        }
        Ok(entries)
    }

    pub fn allowlist(&self) -> &BTreeSet<String> {
        &self.allowlist
    }

    pub fn bot_users(&self) -> &BTreeSet<String> {
        &self.bot_users
    }
}

/// What pre-labeling decided for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PreLabelClass {
    AllowlistedNonToxic,
    BotMessage,
    NeedsClassification,
}

/// Per-message pre-label classes, parallel to `corpus.messages()`.
#[derive(Debug, Clone)]
pub struct PreLabelAssignment {
    classes: Vec<PreLabelClass>,
    pub allowlisted: u64,
    pub bots: u64,
    pub needs_classification: u64,
}

impl PreLabelAssignment {
    pub fn class_of(&self, message_index: usize) -> PreLabelClass {
        self.classes[message_index]
    }

    pub fn classes(&self) -> &[PreLabelClass] {
        &self.classes
    }

    pub fn total(&self) -> u64 {
        self.allowlisted + self.bots + self.needs_classification
    }
}

/// The `n` most frequent message texts (case-folded, whitespace-trimmed),
/// ranked by count descending with lexicographic tie-break. Candidate source
/// for allowlist curation.
pub fn top_frequent_messages(corpus: &Corpus, n: usize) -> Vec<(String, u64)> {
    assert!(n >= 1, "n must be at least 1");
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for m in corpus.messages() {
        let key = m.text.trim().to_lowercase();
        if key.is_empty() {
            continue;
        }
        *counts.entry(key).or_default() += 1;
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

/// Assigns every message exactly one pre-label class. Bot identity is checked
/// before the allowlist, so a bot posting an allowlisted text still counts as
/// a bot message.
pub fn apply_prelabels(corpus: &Corpus, rules: &PreLabelRuleSet) -> PreLabelAssignment {
    let mut classes = Vec::with_capacity(corpus.message_count());
    let (mut allowlisted, mut bots, mut needs) = (0u64, 0u64, 0u64);
    for m in corpus.messages() {
        let class = if rules.bot_users.contains(&m.user) {
            bots += 1;
            PreLabelClass::BotMessage
        } else if rules.allowlist.contains(&m.text.trim().to_lowercase()) {
            allowlisted += 1;
            PreLabelClass::AllowlistedNonToxic
        } else {
            needs += 1;
            PreLabelClass::NeedsClassification
        };
        classes.push(class);
    }
    PreLabelAssignment {
        classes,
        allowlisted,
        bots,
        needs_classification: needs,
    }
}
