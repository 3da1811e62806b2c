//! Small numeric helpers shared across the crate.

/// Sums addends in ascending `total_cmp` order.
///
/// Group-level statistics accumulate one addend per group; sorting first makes
/// the total independent of group enumeration order, so relabeling group ids
/// cannot perturb the last bit of a statistic.
pub(crate) fn sum_sorted(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Maps arbitrary group ids to dense indices in order of first appearance and
/// returns `(dense labels, group sizes)`.
pub(crate) fn dense_groups(groups: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = Vec::new();
    let mut dense = Vec::with_capacity(groups.len());
    for &g in groups {
        let idx = match order.iter().position(|&o| o == g) {
            Some(i) => i,
            None => {
                order.push(g);
                order.len() - 1
            }
        };
        dense.push(idx);
    }
    let mut sizes = vec![0usize; order.len()];
    for &d in &dense {
        sizes[d] += 1;
    }
    (dense, sizes)
}
