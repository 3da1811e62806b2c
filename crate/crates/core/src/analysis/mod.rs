//! Metrics over the labeled corpus: toxicity ratios, label prevalence,
//! co-occurrences, the high/low-toxicity comparison, and pairwise
//! distribution tests between games or genres.

pub mod agreement;
pub mod benchmark;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use chatox_stats::{
    anova_oneway, distance_matrix, levene, permanova, permdisp, welch_t, Metric, PermScheme,
    PermTestResult, StatsError, SubclassDistribution, TestResult, SUBCLASS_COUNT,
};

use crate::classify::{ClassifyError, LabelStatus, LabelStore, ToxicityLabel};
use crate::ingest::{Corpus, StreamMeta};
use crate::taxonomy::{Category, Subclass};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{count} corpus message(s) have no label in the store (first: {first})")]
    UnlabeledMessages { count: usize, first: String },
    #[error("high/low split is degenerate: {high} high / {low} low stream(s) with toxic messages")]
    DegenerateSplit { high: usize, low: usize },
    #[error("unit '{unit}' has only {streams} stream(s) with toxic messages; need at least 2")]
    UnitTooSmall { unit: String, streams: usize },
    #[error("not enough {class} messages: requested {requested}, available {available}")]
    InsufficientClass {
        class: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("rater file does not align with the answer key: {0}")]
    RowMismatch(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grouping axis for ratio and prevalence analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    All,
    Game,
    Genre,
    Stream,
}

impl GroupBy {
    pub fn token(self) -> &'static str {
        match self {
            GroupBy::All => "all",
            GroupBy::Game => "game",
            GroupBy::Genre => "genre",
            GroupBy::Stream => "stream",
        }
    }
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(GroupBy::All),
            "game" => Ok(GroupBy::Game),
            "genre" => Ok(GroupBy::Genre),
            "stream" => Ok(GroupBy::Stream),
            other => Err(format!("unknown grouping '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Category,
    Subclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Primary,
    Secondary,
    /// Binary indicator: the label counts once if either slot holds it.
    Combined,
}

/// Join of corpus messages with their stored labels. Every message must have
/// exactly one committed label; `Invalid` labels stay visible (they count in
/// totals and in the invalid rate) but never feed toxicity numerators or
/// subclass statistics.
pub struct LabeledCorpusView<'a> {
    corpus: &'a Corpus,
    labels: Vec<ToxicityLabel>,
}

impl<'a> LabeledCorpusView<'a> {
    pub fn new(corpus: &'a Corpus, store: &LabelStore) -> Result<Self, AnalysisError> {
        let mut labels = Vec::with_capacity(corpus.message_count());
        let mut missing = 0usize;
        let mut first = String::new();
        for m in corpus.messages() {
            match store.get(&m.message_id) {
                Some(label) => labels.push(label.clone()),
                None => {
                    if missing == 0 {
                        first = m.message_id.clone();
                    }
                    missing += 1;
                }
            }
        }
        if missing > 0 {
            return Err(AnalysisError::UnlabeledMessages {
                count: missing,
                first,
            });
        }
        Ok(Self { corpus, labels })
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn label(&self, global_index: usize) -> &ToxicityLabel {
        &self.labels[global_index]
    }

    pub fn labels(&self) -> &[ToxicityLabel] {
        &self.labels
    }

    /// Iterates `(stream meta, global message range)` pairs.
    fn stream_slices(&self) -> impl Iterator<Item = (&StreamMeta, std::ops::Range<usize>)> {
        let mut start = 0usize;
        (0..self.corpus.stream_count()).map(move |idx| {
            let len = self.corpus.messages_of(idx).len();
            let range = start..start + len;
            start += len;
            (&self.corpus.streams()[idx], range)
        })
    }

    fn group_key(meta: &StreamMeta, group_by: GroupBy) -> Option<String> {
        match group_by {
            GroupBy::All => Some("all".to_string()),
            GroupBy::Game => Some(meta.game.clone()),
            GroupBy::Genre => meta.genre.map(|g| g.token().to_string()),
            GroupBy::Stream => Some(meta.stream_id.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEntry {
    pub toxic: u64,
    pub total: u64,
    pub ratio: f64,
    /// Set when the group holds no messages at all.
    pub zero_count: bool,
}

/// Toxic share per group: `Toxic` count over total message count. Totals
/// include pre-labeled, bot, and invalid messages; the numerator excludes
/// invalid ones.
pub fn toxicity_ratio(
    view: &LabeledCorpusView<'_>,
    group_by: GroupBy,
) -> BTreeMap<String, RatioEntry> {
    let mut acc: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (meta, range) in view.stream_slices() {
        let Some(key) = LabeledCorpusView::group_key(meta, group_by) else {
            continue;
        };
        let entry = acc.entry(key).or_insert((0, 0));
        for idx in range {
            entry.1 += 1;
            if view.label(idx).status == LabelStatus::Toxic {
                entry.0 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(key, (toxic, total))| {
            let ratio = if total == 0 {
                0.0
            } else {
                toxic as f64 / total as f64
            };
            (
                key,
                RatioEntry {
                    toxic,
                    total,
                    ratio,
                    zero_count: total == 0,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrevalenceEntry {
    pub count: u64,
    pub toxic_total: u64,
    pub percent: f64,
}

fn label_tokens(level: Level) -> Vec<&'static str> {
    match level {
        Level::Category => Category::ALL.iter().map(|c| c.token()).collect(),
        Level::Subclass => Subclass::ALL.iter().map(|s| s.token()).collect(),
    }
}

fn slot_token(level: Level, subclass: Subclass) -> &'static str {
    match level {
        Level::Category => subclass.category().token(),
        Level::Subclass => subclass.token(),
    }
}

/// Share of each label among the toxic messages of each group, for the given
/// slot. Every `(group, label)` combination is present, zero counts included.
pub fn label_prevalence(
    view: &LabeledCorpusView<'_>,
    level: Level,
    slot: Slot,
    group_by: GroupBy,
) -> BTreeMap<(String, String), PrevalenceEntry> {
    let mut toxic_totals: BTreeMap<String, u64> = BTreeMap::new();
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (meta, range) in view.stream_slices() {
        let Some(key) = LabeledCorpusView::group_key(meta, group_by) else {
            continue;
        };
        let toxic_total = toxic_totals.entry(key.clone()).or_insert(0);
        for idx in range {
            let label = view.label(idx);
            if label.status != LabelStatus::Toxic {
                continue;
            }
            *toxic_total += 1;
            let primary = label.primary.expect("toxic label carries a primary");
            let hit = |counts: &mut BTreeMap<(String, String), u64>, token: &'static str| {
                *counts.entry((key.clone(), token.to_string())).or_insert(0) += 1;
            };
            match slot {
                Slot::Primary => hit(&mut counts, slot_token(level, primary)),
                Slot::Secondary => {
                    if let Some(secondary) = label.secondary {
                        hit(&mut counts, slot_token(level, secondary));
                    }
                }
                Slot::Combined => {
                    let first = slot_token(level, primary);
                    hit(&mut counts, first);
                    if let Some(secondary) = label.secondary {
                        let second = slot_token(level, secondary);
                        if second != first {
                            hit(&mut counts, second);
                        }
                    }
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for (group, toxic_total) in &toxic_totals {
        for token in label_tokens(level) {
            let count = counts
                .get(&(group.clone(), token.to_string()))
                .copied()
                .unwrap_or(0);
            let percent = if *toxic_total == 0 {
                0.0
            } else {
                100.0 * count as f64 / *toxic_total as f64
            };
            out.insert(
                (group.clone(), token.to_string()),
                PrevalenceEntry {
                    count,
                    toxic_total: *toxic_total,
                    percent,
                },
            );
        }
    }
    out
}

/// Primary×secondary label pair counts over toxic messages, with a marginal
/// for primary-only messages. Cells plus the marginal always sum to the
/// toxic-message count.
#[derive(Debug, Clone, Serialize)]
pub struct CooccurrenceMatrix {
    pub level: Level,
    pub cells: BTreeMap<(String, String), u64>,
    pub primary_only: BTreeMap<String, u64>,
    pub toxic_total: u64,
}

impl CooccurrenceMatrix {
    pub fn cell_total(&self) -> u64 {
        self.cells.values().sum()
    }

    pub fn primary_only_total(&self) -> u64 {
        self.primary_only.values().sum()
    }

    /// Messages containing each label in either slot, derived from the cells
    /// and the primary-only marginal.
    pub fn contains_counts(&self) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        for token in label_tokens(self.level) {
            let mut count = 0;
            for ((p, s), c) in &self.cells {
                if p == token || s == token {
                    count += c;
                }
            }
            count += self.primary_only.get(token).copied().unwrap_or(0);
            out.insert(token.to_string(), count);
        }
        out
    }

    pub fn percent_of_toxic(&self, count: u64) -> f64 {
        if self.toxic_total == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.toxic_total as f64
        }
    }
}

/// Counts primary/secondary co-occurrences among toxic messages. The
/// category-level view aggregates the subclass pairs.
pub fn cooccurrence(view: &LabeledCorpusView<'_>, level: Level) -> CooccurrenceMatrix {
    let mut cells: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut primary_only: BTreeMap<String, u64> = BTreeMap::new();
    let mut toxic_total = 0u64;
    for label in view.labels() {
        if label.status != LabelStatus::Toxic {
            continue;
        }
        toxic_total += 1;
        let primary = slot_token(level, label.primary.expect("toxic label carries a primary"));
        match label.secondary {
            Some(secondary) => {
                let key = (primary.to_string(), slot_token(level, secondary).to_string());
                *cells.entry(key).or_insert(0) += 1;
            }
            None => {
                *primary_only.entry(primary.to_string()).or_insert(0) += 1;
            }
        }
    }
    CooccurrenceMatrix {
        level,
        cells,
        primary_only,
        toxic_total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HighLowSide {
    High,
    Low,
    Equal,
}

#[derive(Debug, Clone, Serialize)]
pub struct HighLowRow {
    pub subclass: Subclass,
    pub levene: TestResult,
    /// The routed test; its `method` field says which one ran.
    pub test: TestResult,
    pub significant: bool,
    pub higher_in: HighLowSide,
}

#[derive(Debug, Clone, Serialize)]
pub struct HighLowReport {
    /// Split threshold: the arithmetic mean of per-stream toxic rates
    /// (ties go high).
    pub mean_rate: f64,
    pub high_streams: usize,
    pub low_streams: usize,
    pub excluded_zero_toxic: usize,
    pub alpha: f64,
    pub rows: Vec<HighLowRow>,
}

/// Splits streams into high/low toxicity at the mean per-stream toxic rate
/// and, per subclass, compares the per-stream primary-label shares between
/// the sides. A variance check routes each comparison to ANOVA or Welch's t.
pub fn high_low_comparison(
    view: &LabeledCorpusView<'_>,
    alpha: f64,
) -> Result<HighLowReport, AnalysisError> {
    struct StreamStats {
        rate: f64,
        toxic: u64,
        subclass_counts: [u64; SUBCLASS_COUNT],
    }

    let mut stats: Vec<StreamStats> = Vec::new();
    for (_, range) in view.stream_slices() {
        let total = range.len() as u64;
        if total == 0 {
            continue;
        }
        let mut toxic = 0u64;
        let mut subclass_counts = [0u64; SUBCLASS_COUNT];
        for idx in range {
            let label = view.label(idx);
            if label.status == LabelStatus::Toxic {
                toxic += 1;
                subclass_counts[label.primary.expect("toxic label carries a primary").index()] +=
                    1;
            }
        }
        stats.push(StreamStats {
            rate: toxic as f64 / total as f64,
            toxic,
            subclass_counts,
        });
    }

    let mean_rate = stats.iter().map(|s| s.rate).sum::<f64>() / stats.len().max(1) as f64;
    let mut high: Vec<&StreamStats> = Vec::new();
    let mut low: Vec<&StreamStats> = Vec::new();
    let mut excluded_zero_toxic = 0usize;
    for s in &stats {
        if s.toxic == 0 {
            excluded_zero_toxic += 1;
            continue;
        }
        if s.rate >= mean_rate {
            high.push(s);
        } else {
            low.push(s);
        }
    }
    if high.len() < 2 || low.len() < 2 {
        return Err(AnalysisError::DegenerateSplit {
            high: high.len(),
            low: low.len(),
        });
    }

    let shares = |group: &[&StreamStats], subclass: Subclass| -> Vec<f64> {
        group
            .iter()
            .map(|s| s.subclass_counts[subclass.index()] as f64 / s.toxic as f64)
            .collect()
    };

    let mut rows = Vec::with_capacity(SUBCLASS_COUNT);
    for subclass in Subclass::ALL {
        let high_obs = shares(&high, subclass);
        let low_obs = shares(&low, subclass);
        let levene_result = levene(&[high_obs.clone(), low_obs.clone()])?;
        // Identical constant observations on both sides are a no-difference
        // result, not a failure.
        let degenerate = |method: &str, df: Vec<f64>| TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df,
            method: method.into(),
        };
        let n = (high_obs.len() + low_obs.len()) as f64;
        let test = if levene_result.p_value < alpha {
            match welch_t(&high_obs, &low_obs) {
                Ok(t) => t,
                Err(StatsError::DegenerateInput(_)) => degenerate("welch_t", vec![n - 2.0]),
                Err(e) => return Err(e.into()),
            }
        } else {
            match anova_oneway(&[high_obs.clone(), low_obs.clone()]) {
                Ok(f) => f,
                Err(StatsError::DegenerateInput(_)) => {
                    degenerate("anova_oneway", vec![1.0, n - 2.0])
                }
                Err(e) => return Err(e.into()),
            }
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mh, ml) = (mean(&high_obs), mean(&low_obs));
        rows.push(HighLowRow {
            subclass,
            significant: test.p_value < alpha,
            higher_in: if mh > ml {
                HighLowSide::High
            } else if ml > mh {
                HighLowSide::Low
            } else {
                HighLowSide::Equal
            },
            levene: levene_result,
            test,
        });
    }

    Ok(HighLowReport {
        mean_rate,
        high_streams: high.len(),
        low_streams: low.len(),
        excluded_zero_toxic,
        alpha,
        rows,
    })
}

/// Comparison unit for the distribution tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Game,
    Genre,
}

impl Unit {
    pub fn token(self) -> &'static str {
        match self {
            Unit::Game => "game",
            Unit::Genre => "genre",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseConfig {
    pub metric: Metric,
    pub n_perm: u32,
    pub seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparisonRow {
    pub unit_a: String,
    pub unit_b: String,
    pub permanova: PermTestResult,
    pub permdisp: PermTestResult,
    /// Both tests fired: the location difference may reflect unequal
    /// within-unit variability rather than different centers.
    pub dispersion_caveat: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseReport {
    pub unit: Unit,
    pub alpha: f64,
    pub metric: Metric,
    /// Streams dropped because they had no toxic messages (their subclass
    /// distribution is undefined).
    pub excluded_zero_toxic_streams: u64,
    pub rows: Vec<PairwiseComparisonRow>,
}

/// Per-stream primary-label subclass distributions per unit, compared for
/// every unit pair with PERMANOVA and PERMDISP under a shared seed.
pub fn pairwise_distribution_tests(
    view: &LabeledCorpusView<'_>,
    unit: Unit,
    cfg: &PairwiseConfig,
) -> Result<PairwiseReport, AnalysisError> {
    let group_by = match unit {
        Unit::Game => GroupBy::Game,
        Unit::Genre => GroupBy::Genre,
    };
    let mut units: BTreeMap<String, Vec<SubclassDistribution>> = BTreeMap::new();
    let mut excluded = 0u64;
    for (meta, range) in view.stream_slices() {
        let Some(key) = LabeledCorpusView::group_key(meta, group_by) else {
            continue;
        };
        let mut counts = [0u64; SUBCLASS_COUNT];
        let mut toxic = 0u64;
        for idx in range {
            let label = view.label(idx);
            if label.status == LabelStatus::Toxic {
                toxic += 1;
                counts[label.primary.expect("toxic label carries a primary").index()] += 1;
            }
        }
        if toxic == 0 {
            excluded += 1;
            units.entry(key).or_default();
            continue;
        }
        units
            .entry(key)
            .or_default()
            .push(SubclassDistribution::from_counts(counts));
    }

    for (unit_name, dists) in &units {
        if dists.len() < 2 {
            return Err(AnalysisError::UnitTooSmall {
                unit: unit_name.clone(),
                streams: dists.len(),
            });
        }
    }

    let names: Vec<&String> = units.keys().collect();
    let mut pair_indices = Vec::new();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            pair_indices.push((i, j));
        }
    }

    let run_pair = |&(i, j): &(usize, usize)| -> Result<PairwiseComparisonRow, AnalysisError> {
        let (a, b) = (names[i], names[j]);
        let rows: Vec<SubclassDistribution> =
            units[a].iter().chain(units[b].iter()).cloned().collect();
        let labels: Vec<usize> = std::iter::repeat_n(0usize, units[a].len())
            .chain(std::iter::repeat_n(1usize, units[b].len()))
            .collect();
        let d = distance_matrix(&rows, cfg.metric)?;
        let scheme = PermScheme::MonteCarlo {
            n_perm: cfg.n_perm,
            seed: cfg.seed,
        };
        let location = permanova(&d, &labels, scheme)?;
        let dispersion = permdisp(&d, &labels, scheme)?;
        let caveat = location.p_value < cfg.alpha && dispersion.p_value < cfg.alpha;
        Ok(PairwiseComparisonRow {
            unit_a: a.clone(),
            unit_b: b.clone(),
            permanova: location,
            permdisp: dispersion,
            dispersion_caveat: caveat,
        })
    };

    #[cfg(feature = "parallel")]
    let rows: Result<Vec<_>, _> = pair_indices.par_iter().map(run_pair).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<_>, _> = pair_indices.iter().map(run_pair).collect();

    Ok(PairwiseReport {
        unit,
        alpha: cfg.alpha,
        metric: cfg.metric,
        excluded_zero_toxic_streams: excluded,
        rows: rows?,
    })
}
