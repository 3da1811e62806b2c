//! PERMANOVA and PERMDISP with counter-based permutation streams.
//!
//! Permutation `i` draws its shuffle from an independent ChaCha stream keyed
//! by `(seed, i)`, so the Monte-Carlo loop can be partitioned across threads
//! without changing a single bit of the outcome.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distance::DistanceMatrix;
use crate::error::StatsError;
use crate::pcoa::pcoa;
use crate::util::{dense_groups, sum_sorted};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How permutations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermScheme {
    /// `n_perm` seeded label shuffles; p = (1 + exceedances) / (1 + n_perm).
    MonteCarlo { n_perm: u32, seed: u64 },
    /// Every distinct assignment of the observed label multiset;
    /// p = exceedances / total (the identity assignment is enumerated).
    Exhaustive,
}

/// Permutation-test outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: u64,
    pub seed: u64,
    pub method: String,
}

const ENUMERATION_CAP: u128 = 1_000_000;

fn check_design(d: &DistanceMatrix, groups: &[usize]) -> Result<(Vec<usize>, Vec<usize>), StatsError> {
    if groups.len() != d.n() {
        return Err(StatsError::LengthMismatch {
            left: d.n(),
            right: groups.len(),
        });
    }
    let (dense, sizes) = dense_groups(groups);
    if sizes.len() < 2 {
        return Err(StatsError::TooFew {
            what: "groups",
            min: 2,
            got: sizes.len(),
        });
    }
    for (g, &size) in sizes.iter().enumerate() {
        if size < 2 {
            return Err(StatsError::GroupTooSmall { group: g, size });
        }
    }
    Ok((dense, sizes))
}

/// Pseudo-F from squared distances per the distance-based one-way
/// partitioning: SS_total = Σ_{i<j} d²/N, SS_within = Σ_g Σ_{i<j∈g} d²/n_g.
fn pseudo_f(sq: &[f64], n: usize, labels: &[usize], sizes: &[usize], ss_total: f64) -> f64 {
    let k = sizes.len();
    let mut group_sq = vec![0.0; k];
    for i in 0..n {
        let gi = labels[i];
        let row = i * n;
        for j in (i + 1)..n {
            if gi == labels[j] {
                group_sq[gi] += sq[row + j];
            }
        }
    }
    let ss_within = sum_sorted(
        group_sq
            .iter()
            .zip(sizes)
            .map(|(s, &n_g)| s / n_g as f64),
    );
    let ss_between = (ss_total - ss_within).max(0.0);
    f_ratio(ss_between, ss_within, k, n)
}

fn f_ratio(ss_between: f64, ss_within: f64, k: usize, n: usize) -> f64 {
    if ss_between == 0.0 {
        return 0.0;
    }
    if ss_within == 0.0 {
        return f64::INFINITY;
    }
    (ss_between / (k - 1) as f64) / (ss_within / (n - k) as f64)
}

/// One-way ANOVA F over plain values with precomputed dense labels. This is
/// the permuted statistic for the dispersion test.
fn anova_f_labeled(values: &[f64], labels: &[usize], sizes: &[usize]) -> f64 {
    let k = sizes.len();
    let n = values.len();
    let mut sums = vec![0.0; k];
    for (v, &g) in values.iter().zip(labels) {
        sums[g] += v;
    }
    let grand = sum_sorted(sums.iter().copied()) / n as f64;
    let means: Vec<f64> = sums.iter().zip(sizes).map(|(s, &m)| s / m as f64).collect();
    let ss_between = sum_sorted(
        means
            .iter()
            .zip(sizes)
            .map(|(m, &n_g)| n_g as f64 * (m - grand).powi(2)),
    );
    let mut within = vec![0.0; k];
    for (v, &g) in values.iter().zip(labels) {
        within[g] += (v - means[g]).powi(2);
    }
    let ss_within = sum_sorted(within.iter().copied());
    f_ratio(ss_between, ss_within, k, n)
}

/// Counter-based generator for permutation `index` of the stream `seed`.
fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn multiset_permutation_count(sizes: &[usize]) -> u128 {
    let n: usize = sizes.iter().sum();
    let mut count: u128 = 1;
    let mut denominator: u128 = 1;
    for i in 1..=n {
        count = count.saturating_mul(i as u128);
    }
    for &s in sizes {
        for i in 1..=s {
            denominator = denominator.saturating_mul(i as u128);
        }
    }
    count / denominator
}

/// Visits every distinct arrangement of the label multiset described by
/// `remaining` counts, in lexicographic order.
fn for_each_assignment(
    remaining: &mut [usize],
    current: &mut Vec<usize>,
    n: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == n {
        visit(current);
        return;
    }
    for g in 0..remaining.len() {
        if remaining[g] > 0 {
            remaining[g] -= 1;
            current.push(g);
            for_each_assignment(remaining, current, n, visit);
            current.pop();
            remaining[g] += 1;
        }
    }
}

fn run_permutation_test(
    observed: f64,
    dense: &[usize],
    sizes: &[usize],
    scheme: PermScheme,
    method: &str,
    stat_for: impl Fn(&[usize]) -> f64 + Sync,
) -> Result<PermTestResult, StatsError> {
    match scheme {
        PermScheme::MonteCarlo { n_perm, seed } => {
            if n_perm == 0 {
                return Err(StatsError::ZeroPermutations);
            }
            let exceed_at = |i: u64| -> bool {
                let mut rng = stream_rng(seed, i);
                let mut labels = dense.to_vec();
                labels.shuffle(&mut rng);
                stat_for(&labels) >= observed
            };
            #[cfg(feature = "parallel")]
            let exceedances = (0..n_perm as u64)
                .into_par_iter()
                .filter(|&i| exceed_at(i))
                .count();
            #[cfg(not(feature = "parallel"))]
            let exceedances = (0..n_perm as u64).filter(|&i| exceed_at(i)).count();
            Ok(PermTestResult {
                statistic: observed,
                p_value: (1 + exceedances) as f64 / (1 + n_perm as u64) as f64,
                n_permutations: n_perm as u64,
                seed,
                method: method.into(),
            })
        }
        PermScheme::Exhaustive => {
            let count = multiset_permutation_count(sizes);
            if count > ENUMERATION_CAP {
                return Err(StatsError::EnumerationTooLarge {
                    count,
                    cap: ENUMERATION_CAP,
                });
            }
            let mut remaining = sizes.to_vec();
            let mut current = Vec::with_capacity(dense.len());
            let mut total = 0u64;
            let mut exceedances = 0u64;
            for_each_assignment(&mut remaining, &mut current, dense.len(), &mut |labels| {
                total += 1;
                if stat_for(labels) >= observed {
                    exceedances += 1;
                }
            });
            Ok(PermTestResult {
                statistic: observed,
                p_value: exceedances as f64 / total as f64,
                n_permutations: total,
                seed: 0,
                method: method.into(),
            })
        }
    }
}

/// Distance-based one-way PERMANOVA (pseudo-F on a distance matrix, p-value
/// by permuting group labels).
pub fn permanova(
    d: &DistanceMatrix,
    groups: &[usize],
    scheme: PermScheme,
) -> Result<PermTestResult, StatsError> {
    let (dense, sizes) = check_design(d, groups)?;
    let n = d.n();
    let sq = d.squared();
    let mut upper_sq = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            upper_sq += sq[i * n + j];
        }
    }
    let ss_total = upper_sq / n as f64;
    let stat_for = |labels: &[usize]| pseudo_f(&sq, n, labels, &sizes, ss_total);
    let observed = stat_for(&dense);
    run_permutation_test(observed, &dense, &sizes, scheme, "permanova", stat_for)
}

/// Homogeneity-of-dispersion test: ANOVA F on distances to group centroids in
/// principal-coordinate space, p-value by permuting those distances' group
/// assignments.
pub fn permdisp(
    d: &DistanceMatrix,
    groups: &[usize],
    scheme: PermScheme,
) -> Result<PermTestResult, StatsError> {
    let (dense, sizes) = check_design(d, groups)?;
    let ordination = pcoa(d)?;
    let mut z = ordination.centroid_distances(&dense, sizes.len());
    // Distances that are zero up to embedding round-off snap to exactly zero,
    // so all-identical groups hit the degenerate statistic-0/p-1 rule.
    let mut scale = 0.0f64;
    for i in 0..d.n() {
        for j in (i + 1)..d.n() {
            scale = scale.max(d.get(i, j));
        }
    }
    let tol = scale * 1e-12;
    for v in z.iter_mut() {
        if *v <= tol {
            *v = 0.0;
        }
    }
    let stat_for = |labels: &[usize]| anova_f_labeled(&z, labels, &sizes);
    let observed = stat_for(&dense);
    run_permutation_test(observed, &dense, &sizes, scheme, "permdisp", stat_for)
}
