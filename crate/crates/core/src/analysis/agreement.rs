//! Agreement-study harness: stratified rater samples with context attached,
//! and kappa scoring of returned rater files against the answer key.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use chatox_stats::{cohen_kappa, KappaResult, StatsError};

use crate::classify::{build_context, LabelStatus};
use crate::taxonomy::{parse_subclass, Subclass};

use super::{AnalysisError, LabeledCorpusView};

/// One row of the blinded rater file.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub sample_id: u32,
    pub message_id: String,
    pub context: String,
    pub text: String,
}

/// One row of the answer key, kept separate from the rater file.
#[derive(Debug, Clone, Serialize)]
pub struct KeyRow {
    pub sample_id: u32,
    pub message_id: String,
    pub toxic: bool,
    pub primary: Option<Subclass>,
    pub secondary: Option<Subclass>,
}

#[derive(Debug, Clone)]
pub struct SampleBundle {
    pub rows: Vec<SampleRow>,
    pub key: Vec<KeyRow>,
}

fn tsv_safe(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

/// Stratified uniform sample of labeled messages: `n_toxic` with status
/// `Toxic` and `n_nontoxic` with a non-toxic verdict (`NonToxic` or
/// `PreNonToxic`; bot chatter is not sampled). Rows are shuffled so raters
/// are blind to the strata, and the same seed reproduces the same bundle.
pub fn agreement_sample(
    view: &LabeledCorpusView<'_>,
    n_toxic: usize,
    n_nontoxic: usize,
    seed: u64,
    window_s: f64,
    context_cap: usize,
) -> Result<SampleBundle, AnalysisError> {
    let mut toxic_candidates = Vec::new();
    let mut nontoxic_candidates = Vec::new();
    for (idx, label) in view.labels().iter().enumerate() {
        match label.status {
            LabelStatus::Toxic => toxic_candidates.push(idx),
            LabelStatus::NonToxic | LabelStatus::PreNonToxic => nontoxic_candidates.push(idx),
            LabelStatus::Bot | LabelStatus::Invalid => {}
        }
    }
    if toxic_candidates.len() < n_toxic {
        return Err(AnalysisError::InsufficientClass {
            class: "toxic",
            requested: n_toxic,
            available: toxic_candidates.len(),
        });
    }
    if nontoxic_candidates.len() < n_nontoxic {
        return Err(AnalysisError::InsufficientClass {
            class: "non-toxic",
            requested: n_nontoxic,
            available: nontoxic_candidates.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    toxic_candidates.shuffle(&mut rng);
    nontoxic_candidates.shuffle(&mut rng);
    let mut picked: Vec<usize> = toxic_candidates[..n_toxic]
        .iter()
        .chain(nontoxic_candidates[..n_nontoxic].iter())
        .copied()
        .collect();
    picked.shuffle(&mut rng);

    let corpus = view.corpus();
    let mut rows = Vec::with_capacity(picked.len());
    let mut key = Vec::with_capacity(picked.len());
    for (pos, &global) in picked.iter().enumerate() {
        let sample_id = pos as u32 + 1;
        let (stream_idx, local) = corpus.locate(global);
        let messages = corpus.messages_of(stream_idx);
        let target = &messages[local];
        let ctx = build_context(messages, local, window_s, context_cap);
        let context = if ctx.messages.is_empty() {
            "(no prior context)".to_string()
        } else {
            tsv_safe(&ctx.lines().join(" | "))
        };
        let label = view.label(global);
        rows.push(SampleRow {
            sample_id,
            message_id: target.message_id.clone(),
            context,
            text: tsv_safe(&target.text),
        });
        key.push(KeyRow {
            sample_id,
            message_id: target.message_id.clone(),
            toxic: label.status == LabelStatus::Toxic,
            primary: label.primary,
            secondary: label.secondary,
        });
    }
    Ok(SampleBundle { rows, key })
}

/// Writes the blinded rater file: tab-separated, label and subclass columns
/// left blank for the rater to fill.
pub fn write_rater_file(bundle: &SampleBundle, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "sample_id\tcontext\ttext\tlabel\tsubclass")?;
    for row in &bundle.rows {
        writeln!(out, "{}\t{}\t{}\t\t", row.sample_id, row.context, row.text)?;
    }
    Ok(())
}

/// Writes the answer key.
pub fn write_key_file(bundle: &SampleBundle, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "sample_id\tmessage_id\tlabel\tprimary\tsecondary")?;
    for row in &bundle.key {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.sample_id,
            row.message_id,
            if row.toxic { "toxic" } else { "nontoxic" },
            row.primary.map(|s| s.token()).unwrap_or(""),
            row.secondary.map(|s| s.token()).unwrap_or(""),
        )?;
    }
    Ok(())
}

/// A rater's filled-in row.
#[derive(Debug, Clone)]
pub struct RaterRow {
    pub sample_id: u32,
    pub toxic: bool,
    pub subclass: Option<Subclass>,
}

fn parse_binary_cell(cell: &str) -> Option<bool> {
    match cell.trim().to_lowercase().as_str() {
        "toxic" | "yes" | "1" | "true" => Some(true),
        "nontoxic" | "non-toxic" | "non_toxic" | "no" | "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads a filled rater file (same shape the harness exported).
pub fn read_rater_file(path: &Path) -> Result<Vec<RaterRow>, AnalysisError> {
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(AnalysisError::RowMismatch(format!(
                "line {}: expected at least 4 tab-separated columns",
                lineno + 1
            )));
        }
        let sample_id: u32 = fields[0].trim().parse().map_err(|_| {
            AnalysisError::RowMismatch(format!("line {}: bad sample_id", lineno + 1))
        })?;
        let toxic = parse_binary_cell(fields[3]).ok_or_else(|| {
            AnalysisError::RowMismatch(format!(
                "line {}: label must be toxic/nontoxic",
                lineno + 1
            ))
        })?;
        let subclass = fields
            .get(4)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                parse_subclass(s).map_err(|e| {
                    AnalysisError::RowMismatch(format!("line {}: {e}", lineno + 1))
                })
            })
            .transpose()?;
        rows.push(RaterRow {
            sample_id,
            toxic,
            subclass,
        });
    }
    Ok(rows)
}

/// Reads an answer key written by [`write_key_file`].
pub fn read_key_file(path: &Path) -> Result<Vec<KeyRow>, AnalysisError> {
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 {
            return Err(AnalysisError::RowMismatch(format!(
                "key line {}: expected 5 tab-separated columns",
                lineno + 1
            )));
        }
        let sample_id: u32 = fields[0].trim().parse().map_err(|_| {
            AnalysisError::RowMismatch(format!("key line {}: bad sample_id", lineno + 1))
        })?;
        let toxic = parse_binary_cell(fields[2]).ok_or_else(|| {
            AnalysisError::RowMismatch(format!("key line {}: bad label", lineno + 1))
        })?;
        let parse_opt = |cell: &str| -> Result<Option<Subclass>, AnalysisError> {
            let cell = cell.trim();
            if cell.is_empty() {
                return Ok(None);
            }
            parse_subclass(cell)
                .map(Some)
                .map_err(|e| AnalysisError::RowMismatch(format!("key line {}: {e}", lineno + 1)))
        };
        rows.push(KeyRow {
            sample_id,
            message_id: fields[1].trim().to_string(),
            toxic,
            primary: parse_opt(fields[3])?,
            secondary: parse_opt(fields[4])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct RaterScore {
    pub rater: usize,
    pub binary: Option<KappaResult>,
    pub subclass: Option<KappaResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairScore {
    pub rater_a: usize,
    pub rater_b: usize,
    pub binary: Option<KappaResult>,
    pub subclass: Option<KappaResult>,
}

/// A (model label, rater label) subclass disagreement and its share of all
/// subclass disagreements.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionShare {
    pub model: Subclass,
    pub rater: Subclass,
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub samples: usize,
    pub raters: Vec<RaterScore>,
    pub pairs: Vec<PairScore>,
    pub mean_model_kappa: Option<f64>,
    pub mean_inter_rater_kappa: Option<f64>,
    pub mean_model_subclass_kappa: Option<f64>,
    pub mean_inter_rater_subclass_kappa: Option<f64>,
    pub confusions: Vec<ConfusionShare>,
}

fn kappa_or_none<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> Option<KappaResult> {
    match cohen_kappa(a, b) {
        Ok(k) => Some(k),
        Err(StatsError::DegenerateAgreement) => None,
        Err(_) => None,
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Scores rater files against the answer key: per-rater model-vs-human kappa,
/// all pairwise inter-human kappas, their means, the same over subclass
/// labels on the toxic subset, and the dominant subclass confusion pairs.
pub fn agreement_score(
    key: &[KeyRow],
    raters: &[Vec<RaterRow>],
) -> Result<AgreementReport, AnalysisError> {
    let mut key_sorted: Vec<&KeyRow> = key.iter().collect();
    key_sorted.sort_by_key(|r| r.sample_id);

    // Align every rater file to the key row order.
    let mut aligned: Vec<Vec<&RaterRow>> = Vec::with_capacity(raters.len());
    for (rater_idx, rows) in raters.iter().enumerate() {
        if rows.len() != key_sorted.len() {
            return Err(AnalysisError::RowMismatch(format!(
                "rater {} has {} rows, key has {}",
                rater_idx + 1,
                rows.len(),
                key_sorted.len()
            )));
        }
        let by_id: BTreeMap<u32, &RaterRow> = rows.iter().map(|r| (r.sample_id, r)).collect();
        if by_id.len() != rows.len() {
            return Err(AnalysisError::RowMismatch(format!(
                "rater {} has duplicate sample ids",
                rater_idx + 1
            )));
        }
        let mut ordered = Vec::with_capacity(key_sorted.len());
        for k in &key_sorted {
            match by_id.get(&k.sample_id) {
                Some(r) => ordered.push(*r),
                None => {
                    return Err(AnalysisError::RowMismatch(format!(
                        "rater {} is missing sample {}",
                        rater_idx + 1,
                        k.sample_id
                    )))
                }
            }
        }
        aligned.push(ordered);
    }

    let model_binary: Vec<bool> = key_sorted.iter().map(|k| k.toxic).collect();
    let toxic_rows: Vec<usize> = key_sorted
        .iter()
        .enumerate()
        .filter(|(_, k)| k.toxic && k.primary.is_some())
        .map(|(i, _)| i)
        .collect();

    let subclass_pairs = |a: &dyn Fn(usize) -> Option<Subclass>,
                          b: &dyn Fn(usize) -> Option<Subclass>|
     -> (Vec<Subclass>, Vec<Subclass>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &row in &toxic_rows {
            if let (Some(x), Some(y)) = (a(row), b(row)) {
                left.push(x);
                right.push(y);
            }
        }
        (left, right)
    };

    let mut rater_scores = Vec::new();
    for (idx, rows) in aligned.iter().enumerate() {
        let binary_labels: Vec<bool> = rows.iter().map(|r| r.toxic).collect();
        let binary = kappa_or_none(&model_binary, &binary_labels);
        let (model_sub, rater_sub) = subclass_pairs(
            &|row| key_sorted[row].primary,
            &|row| rows[row].subclass,
        );
        let subclass = if model_sub.is_empty() {
            None
        } else {
            kappa_or_none(&model_sub, &rater_sub)
        };
        rater_scores.push(RaterScore {
            rater: idx + 1,
            binary,
            subclass,
        });
    }

    let mut pair_scores = Vec::new();
    for i in 0..aligned.len() {
        for j in (i + 1)..aligned.len() {
            let a: Vec<bool> = aligned[i].iter().map(|r| r.toxic).collect();
            let b: Vec<bool> = aligned[j].iter().map(|r| r.toxic).collect();
            let binary = kappa_or_none(&a, &b);
            let (sub_a, sub_b) = subclass_pairs(
                &|row| aligned[i][row].subclass,
                &|row| aligned[j][row].subclass,
            );
            let subclass = if sub_a.is_empty() {
                None
            } else {
                kappa_or_none(&sub_a, &sub_b)
            };
            pair_scores.push(PairScore {
                rater_a: i + 1,
                rater_b: j + 1,
                binary,
                subclass,
            });
        }
    }

    // Subclass disagreement tally: model label vs rater label across raters.
    let mut confusion_counts: BTreeMap<(Subclass, Subclass), u64> = BTreeMap::new();
    let mut total_disagreements = 0u64;
    for rows in &aligned {
        for &row in &toxic_rows {
            if let (Some(model), Some(rater)) = (key_sorted[row].primary, rows[row].subclass) {
                if model != rater {
                    *confusion_counts.entry((model, rater)).or_insert(0) += 1;
                    total_disagreements += 1;
                }
            }
        }
    }
    let mut confusions: Vec<ConfusionShare> = confusion_counts
        .into_iter()
        .map(|((model, rater), count)| ConfusionShare {
            model,
            rater,
            count,
            share: if total_disagreements == 0 {
                0.0
            } else {
                count as f64 / total_disagreements as f64
            },
        })
        .collect();
    confusions.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| (a.model, a.rater).cmp(&(b.model, b.rater)))
    });

    Ok(AgreementReport {
        samples: key_sorted.len(),
        mean_model_kappa: mean_of(
            rater_scores
                .iter()
                .filter_map(|r| r.binary.as_ref().map(|k| k.kappa)),
        ),
        mean_inter_rater_kappa: mean_of(
            pair_scores
                .iter()
                .filter_map(|p| p.binary.as_ref().map(|k| k.kappa)),
        ),
        mean_model_subclass_kappa: mean_of(
            rater_scores
                .iter()
                .filter_map(|r| r.subclass.as_ref().map(|k| k.kappa)),
        ),
        mean_inter_rater_subclass_kappa: mean_of(
            pair_scores
                .iter()
                .filter_map(|p| p.subclass.as_ref().map(|k| k.kappa)),
        ),
        raters: rater_scores,
        pairs: pair_scores,
        confusions,
    })
}
