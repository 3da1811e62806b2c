//! Composition vectors and pairwise dissimilarity matrices.

use serde::{Deserialize, Serialize};

use crate::error::StatsError;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of toxicity subclasses a distribution ranges over.
pub const SUBCLASS_COUNT: usize = 8;

/// Relative frequencies over the eight toxicity subclasses for one group of
/// messages (typically one stream). All-zero only when `count_basis` is 0;
/// otherwise the weights sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubclassDistribution {
    weights: [f64; SUBCLASS_COUNT],
    count_basis: u64,
}

impl SubclassDistribution {
    pub fn from_counts(counts: [u64; SUBCLASS_COUNT]) -> Self {
        let total: u64 = counts.iter().sum();
        let mut weights = [0.0; SUBCLASS_COUNT];
        if total > 0 {
            for (w, &c) in weights.iter_mut().zip(&counts) {
                *w = c as f64 / total as f64;
            }
        }
        Self {
            weights,
            count_basis: total,
        }
    }

    pub fn weights(&self) -> &[f64; SUBCLASS_COUNT] {
        &self.weights
    }

    pub fn count_basis(&self) -> u64 {
        self.count_basis
    }
}

impl AsRef<[f64]> for SubclassDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BrayCurtis,
    Euclidean,
}

impl Metric {
    pub fn tag(self) -> &'static str {
        match self {
            Metric::BrayCurtis => "bray_curtis",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bray_curtis" => Ok(Metric::BrayCurtis),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Symmetric pairwise dissimilarities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Wraps a full row-major n×n matrix, checking symmetry, zero diagonal,
    /// and nonnegativity.
    pub fn from_raw(n: usize, values: Vec<f64>, metric: Metric) -> Result<Self, StatsError> {
        assert_eq!(values.len(), n * n, "expected {} entries", n * n);
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(StatsError::DegenerateInput("nonzero diagonal entry"));
            }
            for j in 0..n {
                let d = values[i * n + j];
                if d < 0.0 || d.is_nan() {
                    return Err(StatsError::DegenerateInput("negative or NaN distance"));
                }
                if d != values[j * n + i] {
                    return Err(StatsError::DegenerateInput("asymmetric distance matrix"));
                }
            }
        }
        Ok(Self { n, values, metric })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Squared distances as a dense row-major buffer.
    pub(crate) fn squared(&self) -> Vec<f64> {
        self.values.iter().map(|d| d * d).collect()
    }
}

fn pair_distance(u: &[f64], v: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::BrayCurtis => {
            let num: f64 = u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
            let den: f64 = u.iter().zip(v).map(|(a, b)| a + b).sum();
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        }
        Metric::Euclidean => u
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Pairwise dissimilarities between composition rows.
///
/// Bray-Curtis is Σ|uᵢ−vᵢ| / Σ(uᵢ+vᵢ) with d = 0 for two all-zero vectors;
/// it requires nonnegative entries. Only symmetry, zero diagonal, and
/// nonnegativity are promised — Bray-Curtis is not a metric.
pub fn distance_matrix<S: AsRef<[f64]> + Sync>(
    rows: &[S],
    metric: Metric,
) -> Result<DistanceMatrix, StatsError> {
    if rows.len() < 2 {
        return Err(StatsError::TooFew {
            what: "rows",
            min: 2,
            got: rows.len(),
        });
    }
    let width = rows[0].as_ref().len();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != width {
            return Err(StatsError::RaggedRows {
                row: i,
                got: r.len(),
                expected: width,
            });
        }
        if metric == Metric::BrayCurtis {
            if let Some((index, &value)) = r.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(StatsError::NegativeInput {
                    row: i,
                    index,
                    value,
                });
            }
        }
    }
    let n = rows.len();

    let compute_row = |i: usize| -> Vec<f64> {
        let u = rows[i].as_ref();
        (i + 1..n)
            .map(|j| pair_distance(u, rows[j].as_ref(), metric))
            .collect()
    };

    #[cfg(feature = "parallel")]
    let upper: Vec<Vec<f64>> = (0..n).into_par_iter().map(compute_row).collect();
    #[cfg(not(feature = "parallel"))]
    let upper: Vec<Vec<f64>> = (0..n).map(compute_row).collect();

    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values, metric })
}
