//! Chat-dump ingestion: parses downloaded VOD chat exports into a normalized,
//! time-ordered corpus with stream, game, and genre metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::digest16;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed chat dump: {detail}")]
    MalformedDump { detail: String },
    #[error("comment {record} lacks required field '{field}'")]
    MissingField { record: usize, field: &'static str },
    #[error("duplicate stream id '{stream_id}'")]
    DuplicateStream { stream_id: String },
    #[error("cannot read '{path}': {source}")]
    FileNotReadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest line {line} is not a valid entry: {detail}")]
    BadManifestEntry { line: usize, detail: String },
    #[error("corpus is inconsistent: {0}")]
    InconsistentCorpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four game genres that participate in genre-level analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    Moba,
    MpShooter,
    SpShooter,
    SportsGames,
}

impl Genre {
    pub const ALL: [Genre; 4] = [
        Genre::Moba,
        Genre::MpShooter,
        Genre::SpShooter,
        Genre::SportsGames,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Genre::Moba => "moba",
            Genre::MpShooter => "mp_shooter",
            Genre::SpShooter => "sp_shooter",
            Genre::SportsGames => "sports_games",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Genre::Moba => "MOBA",
            Genre::MpShooter => "MP Shooter",
            Genre::SpShooter => "SP Shooter",
            Genre::SportsGames => "Sports Games",
        }
    }
}

impl std::fmt::Display for Genre {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moba" => Ok(Genre::Moba),
            "mp_shooter" => Ok(Genre::MpShooter),
            "sp_shooter" => Ok(Genre::SpShooter),
            "sports_games" => Ok(Genre::SportsGames),
            other => Err(format!("unknown genre '{other}'")),
        }
    }
}

/// Built-in game-to-genre table. Games from the MMO and strategy rows are
/// present but map to no genre; unknown games also map to none.
const GAME_GENRES: &[(&str, Option<Genre>)] = &[
    ("League of Legends", Some(Genre::Moba)),
    ("Dota 2", Some(Genre::Moba)),
    ("Counter-Strike 2", Some(Genre::MpShooter)),
    ("Counter-Strike", Some(Genre::MpShooter)),
    ("Valorant", Some(Genre::MpShooter)),
    ("Cyberpunk 2077", Some(Genre::SpShooter)),
    ("Red Dead Redemption 2", Some(Genre::SpShooter)),
    ("Red Dead Redemption II", Some(Genre::SpShooter)),
    ("FIFA/FC 26", Some(Genre::SportsGames)),
    ("EA Sports FC 26", Some(Genre::SportsGames)),
    ("Trackmania", Some(Genre::SportsGames)),
    ("Path of Exile", None),
    ("Minecraft", None),
    ("Dead by Daylight", None),
    ("Hearthstone", None),
    ("Dispatch", None),
    ("Plants vs Zombies", None),
    ("Plants vs. Zombies", None),
];

/// Exact-name genre lookup in the built-in table.
pub fn genre_of(game: &str) -> Option<Genre> {
    GAME_GENRES
        .iter()
        .find(|(name, _)| *name == game)
        .and_then(|&(_, g)| g)
}

/// Built-in table plus per-config overrides; an override may also force a
/// game to "no genre".
#[derive(Debug, Clone, Default)]
pub struct GenreOverrides {
    map: BTreeMap<String, Option<Genre>>,
}

impl GenreOverrides {
    pub fn new(map: BTreeMap<String, Option<Genre>>) -> Self {
        Self { map }
    }

    pub fn resolve(&self, game: &str) -> Option<Genre> {
        match self.map.get(game) {
            Some(&g) => g,
            None => genre_of(game),
        }
    }
}

/// Stream-level metadata. `stream_id` is unique within a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub stream_id: String,
    pub streamer: String,
    pub game: String,
    pub genre: Option<Genre>,
    pub started_at: Option<DateTime<Utc>>,
    pub duration_s: f64,
}

/// One normalized chat line. `seq` is assigned after time-ordering, so it is
/// strictly increasing while `offset_s` is non-decreasing within a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub stream_id: String,
    pub seq: u32,
    pub offset_s: f64,
    pub user: String,
    pub text: String,
    pub message_id: String,
}

impl ChatMessage {
    pub fn new(stream_id: &str, seq: u32, offset_s: f64, user: String, text: String) -> Self {
        let message_id = message_id_for(stream_id, seq);
        Self {
            stream_id: stream_id.to_string(),
            seq,
            offset_s,
            user,
            text,
            message_id,
        }
    }
}

/// Deterministic join key: first 16 hex chars of SHA-256("stream_id|seq").
pub fn message_id_for(stream_id: &str, seq: u32) -> String {
    digest16(&[stream_id.as_bytes(), b"|", seq.to_string().as_bytes()])
}

/// Values a manifest entry can impose on top of what the dump itself carries.
/// Hint fields win over the dump's own metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetaHint {
    pub stream_id: Option<String>,
    pub streamer: Option<String>,
    pub game: Option<String>,
    pub started_at: Option<DateTime<Utc>>,
    pub duration_s: Option<f64>,
}

/// Why a single comment was skipped during parsing.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedComment {
    pub record: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct ParsedDump {
    pub meta: StreamMeta,
    pub messages: Vec<ChatMessage>,
    /// Structurally broken comments, skipped with a counted warning.
    pub skipped: Vec<SkippedComment>,
    /// Comments whose negative offset was clamped to zero.
    pub clamped_offsets: usize,
}

#[derive(Deserialize)]
struct RawDump {
    #[serde(default)]
    streamer: Option<RawStreamer>,
    #[serde(default)]
    video: Option<RawVideo>,
    comments: Vec<RawComment>,
}

#[derive(Deserialize)]
struct RawStreamer {
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
struct RawVideo {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    game: Option<String>,
    #[serde(default)]
    created_at: Option<String>,
    #[serde(default)]
    length: Option<f64>,
    #[serde(default)]
    start: Option<f64>,
    #[serde(default)]
    end: Option<f64>,
}

#[derive(Deserialize)]
struct RawComment {
    #[serde(default)]
    content_offset_seconds: Option<f64>,
    #[serde(default)]
    offset_seconds: Option<f64>,
    #[serde(default)]
    commenter: Option<RawCommenter>,
    #[serde(default)]
    message: Option<RawMessage>,
}

#[derive(Deserialize)]
struct RawCommenter {
    #[serde(default)]
    display_name: Option<String>,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
struct RawMessage {
    #[serde(default)]
    body: Option<String>,
}

fn value_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses one chat-dump document (the de-facto VOD chat export shape: a
/// `streamer`/`video` header plus a `comments` array).
///
/// Messages come back sorted by `(offset_s, original order)` with empty-body
/// comments dropped. Comments missing an offset or body are skipped with a
/// counted warning rather than failing the stream. Metadata merges with
/// `meta_hint`, hint fields winning.
pub fn parse_chat_dump(
    raw: impl Read,
    meta_hint: Option<&MetaHint>,
) -> Result<ParsedDump, IngestError> {
    let dump: RawDump = serde_json::from_reader(raw).map_err(|e| IngestError::MalformedDump {
        detail: e.to_string(),
    })?;

    let hint = meta_hint.cloned().unwrap_or_default();
    let video = dump.video.as_ref();
    let stream_id = hint
        .stream_id
        .or_else(|| video.and_then(|v| v.id.as_ref()).and_then(value_to_string))
        .ok_or(IngestError::MalformedDump {
            detail: "no stream id in dump or hint".into(),
        })?;
    let streamer = hint
        .streamer
        .or_else(|| dump.streamer.as_ref().and_then(|s| s.name.clone()))
        .unwrap_or_default();
    let game = hint
        .game
        .or_else(|| video.and_then(|v| v.game.clone()))
        .unwrap_or_default();
    let started_at = hint.started_at.or_else(|| {
        video
            .and_then(|v| v.created_at.as_deref())
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|dt| dt.with_timezone(&Utc))
    });

    let mut skipped = Vec::new();
    let mut clamped_offsets = 0usize;
    // (offset, file order, user, text)
    let mut rows: Vec<(f64, usize, String, String)> = Vec::with_capacity(dump.comments.len());
    for (record, comment) in dump.comments.into_iter().enumerate() {
        let offset = comment
            .content_offset_seconds
            .or(comment.offset_seconds);
        let Some(mut offset) = offset else {
            skipped.push(SkippedComment {
                record,
                reason: IngestError::MissingField {
                    record,
                    field: "offset",
                }
                .to_string(),
            });
            continue;
        };
        let Some(body) = comment.message.and_then(|m| m.body) else {
            skipped.push(SkippedComment {
                record,
                reason: IngestError::MissingField {
                    record,
                    field: "body",
                }
                .to_string(),
            });
            continue;
        };
        if body.trim().is_empty() {
            continue;
        }
        if !offset.is_finite() {
            skipped.push(SkippedComment {
                record,
                reason: format!("comment {record} has non-finite offset"),
            });
            continue;
        }
        if offset < 0.0 {
            offset = 0.0;
            clamped_offsets += 1;
        }
        let user = comment
            .commenter
            .and_then(|c| c.display_name.or(c.name))
            .unwrap_or_default();
        rows.push((offset, record, user, body));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let messages: Vec<ChatMessage> = rows
        .into_iter()
        .enumerate()
        .map(|(seq, (offset, _, user, text))| {
            ChatMessage::new(&stream_id, seq as u32, offset, user, text)
        })
        .collect();

    let duration_s = hint
        .duration_s
        .or_else(|| video.and_then(|v| v.length))
        .or_else(|| {
            video.and_then(|v| match (v.start, v.end) {
                (Some(s), Some(e)) => Some(e - s),
                _ => None,
            })
        })
        .or_else(|| messages.last().map(|m| m.offset_s))
        .unwrap_or(0.0)
        .max(0.0);

    Ok(ParsedDump {
        meta: StreamMeta {
            stream_id,
            streamer,
            game,
            genre: None,
            started_at,
            duration_s,
        },
        messages,
        skipped,
        clamped_offsets,
    })
}

/// A normalized corpus: stream metadata plus all messages, grouped
/// contiguously per stream in stream order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    streams: Vec<StreamMeta>,
    messages: Vec<ChatMessage>,
    ranges: Vec<std::ops::Range<usize>>,
}

impl Corpus {
    pub fn from_streams(parts: Vec<(StreamMeta, Vec<ChatMessage>)>) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        let mut corpus = Corpus::default();
        for (meta, messages) in parts {
            if !seen.insert(meta.stream_id.clone()) {
                return Err(IngestError::DuplicateStream {
                    stream_id: meta.stream_id,
                });
            }
            if let Some(stray) = messages.iter().find(|m| m.stream_id != meta.stream_id) {
                return Err(IngestError::InconsistentCorpus(format!(
                    "message {} belongs to stream '{}', not '{}'",
                    stray.message_id, stray.stream_id, meta.stream_id
                )));
            }
            let start = corpus.messages.len();
            corpus.messages.extend(messages);
            corpus.ranges.push(start..corpus.messages.len());
            corpus.streams.push(meta);
        }
        Ok(corpus)
    }

    pub fn streams(&self) -> &[StreamMeta] {
        &self.streams
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    /// Messages of stream `idx`, in time order.
    pub fn messages_of(&self, idx: usize) -> &[ChatMessage] {
        &self.messages[self.ranges[idx].clone()]
    }

    /// Maps a global message index to `(stream index, index within stream)`.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let idx = self
            .ranges
            .binary_search_by(|r| {
                if r.end <= global {
                    std::cmp::Ordering::Less
                } else if r.start > global {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .unwrap_or_else(|_| panic!("message index {global} out of range"));
        (idx, global - self.ranges[idx].start)
    }

    pub fn hours(&self) -> f64 {
        self.streams.iter().map(|s| s.duration_s).sum::<f64>() / 3600.0
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            streams: self.stream_count(),
            messages: self.message_count(),
            hours: self.hours(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub streams: usize,
    pub messages: usize,
    pub hours: f64,
}

/// One line of the ingest manifest: a dump file plus its metadata hint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub streamer: Option<String>,
    #[serde(default)]
    pub game: Option<String>,
    #[serde(default)]
    pub stream_id: Option<String>,
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl ManifestEntry {
    fn hint(&self) -> MetaHint {
        MetaHint {
            stream_id: self.stream_id.clone(),
            streamer: self.streamer.clone(),
            game: self.game.clone(),
            started_at: self.started_at,
            duration_s: self.duration_s,
        }
    }
}

/// Per-run ingest bookkeeping: skipped-comment counts per stream.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub skipped_comments: u64,
    pub clamped_offsets: u64,
    pub per_stream_skipped: BTreeMap<String, u64>,
}

/// Reads a manifest (one JSON entry per line, `#` comments allowed), parses
/// every listed dump, and assembles the corpus. Paths resolve relative to the
/// manifest's directory. Parsing runs per-file in parallel; assembly is a
/// serial merge in manifest order.
pub fn load_corpus(
    manifest_path: &Path,
    overrides: &GenreOverrides,
) -> Result<(Corpus, IngestReport), IngestError> {
    let file = fs::File::open(manifest_path).map_err(|e| IngestError::FileNotReadable {
        path: manifest_path.to_path_buf(),
        source: e,
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(trimmed).map_err(|e| IngestError::BadManifestEntry {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        entries.push(entry);
    }

    let parse_entry = |entry: &ManifestEntry| -> Result<ParsedDump, IngestError> {
        let path = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let file = fs::File::open(&path).map_err(|e| IngestError::FileNotReadable {
            path: path.clone(),
            source: e,
        })?;
        let mut parsed = parse_chat_dump(BufReader::new(file), Some(&entry.hint()))?;
        parsed.meta.genre = overrides.resolve(&parsed.meta.game);
        Ok(parsed)
    };

    #[cfg(feature = "parallel")]
    let parsed: Vec<Result<ParsedDump, IngestError>> =
        entries.par_iter().map(parse_entry).collect();
    #[cfg(not(feature = "parallel"))]
    let parsed: Vec<Result<ParsedDump, IngestError>> = entries.iter().map(parse_entry).collect();

    let mut report = IngestReport::default();
    let mut parts = Vec::with_capacity(parsed.len());
    for dump in parsed {
        let dump = dump?;
        report.skipped_comments += dump.skipped.len() as u64;
        report.clamped_offsets += dump.clamped_offsets as u64;
        if !dump.skipped.is_empty() {
            report
                .per_stream_skipped
                .insert(dump.meta.stream_id.clone(), dump.skipped.len() as u64);
        }
        parts.push((dump.meta, dump.messages));
    }
    let corpus = Corpus::from_streams(parts)?;
    Ok((corpus, report))
}

/// On-disk record shape for one normalized message.
#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    stream_id: String,
    seq: u32,
    offset_s: f64,
    user: String,
    text: String,
}

/// Writes `streams.jsonl`, `corpus.jsonl`, and `summary.json` under `dir`.
/// Byte-identical for identical inputs.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir)?;
    let mut streams = std::io::BufWriter::new(fs::File::create(dir.join("streams.jsonl"))?);
    for meta in corpus.streams() {
        serde_json::to_writer(&mut streams, meta).map_err(io_from_json)?;
        streams.write_all(b"\n")?;
    }
    streams.flush()?;

    let mut records = std::io::BufWriter::new(fs::File::create(dir.join("corpus.jsonl"))?);
    for m in corpus.messages() {
        let rec = CorpusRecord {
            stream_id: m.stream_id.clone(),
            seq: m.seq,
            offset_s: m.offset_s,
            user: m.user.clone(),
            text: m.text.clone(),
        };
        serde_json::to_writer(&mut records, &rec).map_err(io_from_json)?;
        records.write_all(b"\n")?;
    }
    records.flush()?;

    let summary = serde_json::to_string_pretty(&corpus.summary()).map_err(io_from_json)?;
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

fn io_from_json(e: serde_json::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

/// Loads a corpus previously written by [`save_corpus`], recomputing message
/// ids and checking that every message belongs to a known stream.
pub fn load_saved_corpus(dir: &Path) -> Result<Corpus, IngestError> {
    let streams_path = dir.join("streams.jsonl");
    let file = fs::File::open(&streams_path).map_err(|e| IngestError::FileNotReadable {
        path: streams_path,
        source: e,
    })?;
    let mut streams = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: StreamMeta =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedDump {
                detail: format!("streams.jsonl: {e}"),
            })?;
        streams.push(meta);
    }

    let corpus_path = dir.join("corpus.jsonl");
    let file = fs::File::open(&corpus_path).map_err(|e| IngestError::FileNotReadable {
        path: corpus_path,
        source: e,
    })?;
    let mut by_stream: BTreeMap<String, Vec<ChatMessage>> = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedDump {
                detail: format!("corpus.jsonl: {e}"),
            })?;
        by_stream
            .entry(rec.stream_id.clone())
            .or_default()
            .push(ChatMessage::new(
                &rec.stream_id,
                rec.seq,
                rec.offset_s,
                rec.user,
                rec.text,
            ));
    }

    let known: BTreeSet<&str> = streams.iter().map(|s| s.stream_id.as_str()).collect();
    for id in by_stream.keys() {
        if !known.contains(id.as_str()) {
            return Err(IngestError::InconsistentCorpus(format!(
                "message references unknown stream '{id}'"
            )));
        }
    }

    let parts: Vec<(StreamMeta, Vec<ChatMessage>)> = streams
        .into_iter()
        .map(|meta| {
            let msgs = by_stream.remove(&meta.stream_id).unwrap_or_default();
            (meta, msgs)
        })
        .collect();
    Corpus::from_streams(parts)
}
