//! Variance and mean-difference tests: classic Levene, one-way ANOVA, Welch's t.

use serde::Serialize;

use crate::error::StatsError;
use crate::special::{f_sf, t_sf_two_sided};
use crate::util::{mean, sum_sorted};

/// Outcome of a classical test with a continuous-distribution p-value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Vec<f64>,
    pub method: String,
}

fn check_groups<S: AsRef<[f64]>>(groups: &[S]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew {
            what: "groups",
            min: 2,
            got: groups.len(),
        });
    }
    for (i, g) in groups.iter().enumerate() {
        if g.as_ref().len() < 2 {
            return Err(StatsError::GroupTooSmall {
                group: i,
                size: g.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// One-way ANOVA decomposition on a list of groups.
/// Returns (ss_between, ss_within, k, n).
fn oneway_ss<S: AsRef<[f64]>>(groups: &[S]) -> (f64, f64, usize, usize) {
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let grand = sum_sorted(groups.iter().map(|g| g.as_ref().iter().sum::<f64>())) / n as f64;
    let ss_between = sum_sorted(groups.iter().map(|g| {
        let g = g.as_ref();
        let m = mean(g);
        g.len() as f64 * (m - grand).powi(2)
    }));
    let ss_within = sum_sorted(groups.iter().map(|g| {
        let g = g.as_ref();
        let m = mean(g);
        g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    }));
    (ss_between, ss_within, k, n)
}

/// Classic Levene test (absolute deviations from group means) for equality of
/// variances. All-zero deviations degenerate to statistic 0, p 1.
pub fn levene<S: AsRef<[f64]>>(groups: &[S]) -> Result<TestResult, StatsError> {
    check_groups(groups)?;
    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let m = mean(g);
            g.iter().map(|x| (x - m).abs()).collect()
        })
        .collect();
    let (ssb, ssw, k, n) = oneway_ss(&deviations);
    let df = vec![(k - 1) as f64, (n - k) as f64];
    if ssb == 0.0 && ssw == 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df,
            method: "levene".into(),
        });
    }
    let w = if ssw == 0.0 {
        f64::INFINITY
    } else {
        (ssb / df[0]) / (ssw / df[1])
    };
    Ok(TestResult {
        statistic: w,
        p_value: f_sf(w, df[0], df[1]),
        df,
        method: "levene".into(),
    })
}

/// Standard one-way ANOVA F test with df (k−1, N−k).
pub fn anova_oneway<S: AsRef<[f64]>>(groups: &[S]) -> Result<TestResult, StatsError> {
    check_groups(groups)?;
    let (ssb, ssw, k, n) = oneway_ss(groups);
    if ssb == 0.0 && ssw == 0.0 {
        return Err(StatsError::DegenerateInput(
            "zero between- and within-group sums of squares",
        ));
    }
    let df = vec![(k - 1) as f64, (n - k) as f64];
    let f = if ssw == 0.0 {
        if ssb == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ssb / df[0]) / (ssw / df[1])
    };
    Ok(TestResult {
        statistic: f,
        p_value: f_sf(f, df[0], df[1]),
        df,
        method: "anova_oneway".into(),
    })
}

/// Welch's unequal-variance t test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    for (name, s) in [("a", a), ("b", b)] {
        if s.len() < 2 {
            return Err(StatsError::TooFew {
                what: if name == "a" {
                    "values in sample a"
                } else {
                    "values in sample b"
                },
                min: 2,
                got: s.len(),
            });
        }
    }
    let (ma, mb) = (mean(a), mean(b));
    let var = |s: &[f64], m: f64| s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(StatsError::DegenerateInput(
                "both samples constant and equal",
            ));
        }
        return Ok(TestResult {
            statistic: if ma > mb {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            p_value: 0.0,
            df: vec![na + nb - 2.0],
            method: "welch_t".into(),
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / (sa.powi(2) / (na - 1.0) + sb.powi(2) / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: t_sf_two_sided(t, df),
        df: vec![df],
        method: "welch_t".into(),
    })
}
