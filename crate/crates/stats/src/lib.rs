//! Deterministic statistical engine for composition-of-toxicity analytics.
//!
//! Everything in this crate is a pure function of its inputs (plus an explicit
//! seed where permutations are involved). Permutation streams are counter-based:
//! permutation `i` derives its generator from `(seed, i)`, so Monte-Carlo
//! p-values are bit-identical regardless of how the loop is scheduled or how
//! many threads run it.

mod anova;
mod distance;
mod error;
mod kappa;
mod pcoa;
mod perm;
mod special;
mod util;

pub use anova::{anova_oneway, levene, welch_t, TestResult};
pub use distance::{distance_matrix, DistanceMatrix, Metric, SubclassDistribution, SUBCLASS_COUNT};
pub use error::StatsError;
pub use kappa::{cohen_kappa, KappaResult};
pub use pcoa::{pcoa, Ordination};
pub use perm::{permanova, permdisp, PermScheme, PermTestResult};
pub use special::{betainc_regularized, f_sf, ln_gamma, t_sf_two_sided};
