//! F1 benchmark harness: runs the binary stage (empty context) over a
//! labeled dataset and scores the toxic class.

use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::classify::{
    parse_binary_response, render_prompt, send_with_retry, Backend, BinaryVerdict,
    ClassifyConfig, ClassifyError, Context, Stage,
};
use crate::ingest::ChatMessage;

#[derive(Debug, Clone)]
pub struct BenchmarkItem {
    pub text: String,
    pub toxic: bool,
}

#[derive(Deserialize)]
struct DatasetRecord {
    text: String,
    gold: GoldLabel,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum GoldLabel {
    Toxic,
    #[serde(alias = "non_toxic", alias = "non-toxic")]
    Nontoxic,
}

/// Loads a dataset of one JSON record per line: `{"text": ..., "gold":
/// "toxic" | "nontoxic"}`.
pub fn load_benchmark_dataset(path: &Path) -> Result<Vec<BenchmarkItem>, std::io::Error> {
    let file = std::fs::File::open(path)?;
    let mut items = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::other(format!("dataset line {}: {e}", lineno + 1))
        })?;
        items.push(BenchmarkItem {
            text: rec.text,
            toxic: matches!(rec.gold, GoldLabel::Toxic),
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct F1Report {
    pub total: u64,
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
    /// Nonconforming responses; scored as non-toxic predictions.
    pub invalid: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Runs the binary classifier over every dataset item (no context, a fixed
/// placeholder sender) and reports precision/recall/F1 of the toxic class.
/// Invalid responses count as non-toxic predictions and are tallied
/// separately.
pub fn f1_benchmark(
    dataset: &[BenchmarkItem],
    backend: &dyn Backend,
    cfg: &ClassifyConfig,
) -> Result<F1Report, ClassifyError> {
    let tp = AtomicU64::new(0);
    let fp = AtomicU64::new(0);
    let fn_ = AtomicU64::new(0);
    let tn = AtomicU64::new(0);
    let invalid = AtomicU64::new(0);

    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<(usize, ClassifyError)>> = Mutex::new(None);
    let n_workers = cfg.max_in_flight.max(1).min(dataset.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                if first_error.lock().unwrap().is_some() {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= dataset.len() {
                    break;
                }
                let item = &dataset[idx];
                let target =
                    ChatMessage::new("benchmark", idx as u32, 0.0, "chatter".into(), item.text.clone());
                let payload = render_prompt(&target, &Context::default(), Stage::Binary);
                match send_with_retry(backend, &payload, cfg) {
                    Ok(raw) => {
                        let predicted_toxic = match parse_binary_response(&raw) {
                            BinaryVerdict::Toxic => true,
                            BinaryVerdict::NonToxic => false,
                            BinaryVerdict::Invalid => {
                                invalid.fetch_add(1, Ordering::Relaxed);
                                false
                            }
                        };
                        let counter = match (predicted_toxic, item.toxic) {
                            (true, true) => &tp,
                            (true, false) => &fp,
                            (false, true) => &fn_,
                            (false, false) => &tn,
                        };
                        counter.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        let mut slot = first_error.lock().unwrap();
                        match slot.as_ref() {
                            Some((held, _)) if *held <= idx => {}
                            _ => *slot = Some((idx, e)),
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some((_, e)) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let (tp, fp, fn_, tn) = (
        tp.into_inner(),
        fp.into_inner(),
        fn_.into_inner(),
        tn.into_inner(),
    );
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Report {
        total: dataset.len() as u64,
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: tn,
        invalid: invalid.into_inner(),
        precision,
        recall,
        f1,
    })
}
