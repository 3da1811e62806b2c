use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {min} {what}, got {got}")]
    TooFew {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("group {group} has {size} member(s); every group needs at least 2")]
    GroupTooSmall { group: usize, size: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("both raters are constant and identical; expected agreement is 1 so kappa is undefined")]
    DegenerateAgreement,
    #[error("Bray-Curtis requires nonnegative entries; row {row} entry {index} is {value}")]
    NegativeInput {
        row: usize,
        index: usize,
        value: f64,
    },
    #[error("rows have unequal lengths: row {row} has {got}, expected {expected}")]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    #[error("exhaustive enumeration would visit {count} label assignments (cap {cap})")]
    EnumerationTooLarge { count: u128, cap: u128 },
    #[error("n_perm must be at least 1")]
    ZeroPermutations,
}
