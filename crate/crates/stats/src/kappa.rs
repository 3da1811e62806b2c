//! Cohen's kappa: chance-corrected agreement between two raters.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
}

/// Cohen's kappa over the joint confusion table of two equally long label
/// sequences: kappa = (po − pe) / (1 − pe).
///
/// Returns `DegenerateAgreement` when both raters are constant and identical
/// (pe = 1, so the ratio is undefined).
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<KappaResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::TooFew {
            what: "rated items",
            min: 1,
            got: 0,
        });
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let po = agree / n;

    let mut count_a: HashMap<&T, usize> = HashMap::new();
    let mut count_b: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *count_a.entry(x).or_default() += 1;
    }
    for y in b {
        *count_b.entry(y).or_default() += 1;
    }
    if count_a.len() == 1 && count_b.len() == 1 && a[0] == b[0] {
        return Err(StatsError::DegenerateAgreement);
    }
    let mut pe = 0.0;
    for (label, &ca) in &count_a {
        if let Some(&cb) = count_b.get(*label) {
            pe += (ca as f64 / n) * (cb as f64 / n);
        }
    }

    Ok(KappaResult {
        kappa: (po - pe) / (1.0 - pe),
        observed_agreement: po,
        expected_agreement: pe,
    })
}
