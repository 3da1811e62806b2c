//! Report rendering. Analyses serialize twice: as structured JSON records
//! (one per line; the machine-readable test surface) and as aligned text
//! tables for humans.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Value};

use chatox_stats::{Metric, PermTestResult, TestResult};

use crate::analysis::{
    CooccurrenceMatrix, GroupBy, HighLowReport, Level, PairwiseReport, PrevalenceEntry,
    RatioEntry, Slot,
};
use crate::ingest::CorpusSummary;
use crate::taxonomy::{Category, Subclass};

pub type PrevalenceMap = BTreeMap<(String, String), PrevalenceEntry>;

/// First record of every report file: ties the artifact to the run.
pub fn run_header(config_digest: &str, corpus_digest: &str, tool_version: &str, seed: u64) -> Value {
    json!({
        "kind": "run_header",
        "config_digest": config_digest,
        "corpus_digest": corpus_digest,
        "tool_version": tool_version,
        "seed": seed,
    })
}

pub fn write_jsonl(out: &mut impl Write, records: &[Value]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// The crate-wide statistical result record:
/// `{method, statistic, df, p, n_perm, seed, metric}`.
pub fn stat_record(
    method: &str,
    statistic: f64,
    df: Option<&[f64]>,
    p: f64,
    n_perm: Option<u64>,
    seed: Option<u64>,
    metric: Option<Metric>,
) -> Value {
    json!({
        "method": method,
        "statistic": statistic,
        "df": df,
        "p": p,
        "n_perm": n_perm,
        "seed": seed,
        "metric": metric.map(|m| m.tag()),
    })
}

pub fn test_result_record(result: &TestResult) -> Value {
    stat_record(
        &result.method,
        result.statistic,
        Some(&result.df),
        result.p_value,
        None,
        None,
        None,
    )
}

pub fn perm_result_record(result: &PermTestResult, metric: Metric) -> Value {
    stat_record(
        &result.method,
        result.statistic,
        None,
        result.p_value,
        Some(result.n_permutations),
        Some(result.seed),
        Some(metric),
    )
}

pub fn ratio_records(group_by: GroupBy, ratios: &BTreeMap<String, RatioEntry>) -> Vec<Value> {
    ratios
        .iter()
        .map(|(group, entry)| {
            json!({
                "kind": "toxicity_ratio",
                "group_by": group_by.token(),
                "group": group,
                "toxic": entry.toxic,
                "total": entry.total,
                "ratio": entry.ratio,
                "zero_count": entry.zero_count,
            })
        })
        .collect()
}

pub fn prevalence_records(
    level: Level,
    slot: Slot,
    group_by: GroupBy,
    prevalence: &PrevalenceMap,
) -> Vec<Value> {
    prevalence
        .iter()
        .map(|((group, label), entry)| {
            json!({
                "kind": "prevalence",
                "group_by": group_by.token(),
                "group": group,
                "level": level,
                "slot": slot,
                "label": label,
                "count": entry.count,
                "toxic_total": entry.toxic_total,
                "percent": entry.percent,
            })
        })
        .collect()
}

pub fn cooccurrence_records(matrix: &CooccurrenceMatrix) -> Vec<Value> {
    let mut records = Vec::new();
    for ((primary, secondary), count) in &matrix.cells {
        records.push(json!({
            "kind": "cooccurrence",
            "level": matrix.level,
            "primary": primary,
            "secondary": secondary,
            "count": count,
            "percent_of_toxic": matrix.percent_of_toxic(*count),
        }));
    }
    for (primary, count) in &matrix.primary_only {
        records.push(json!({
            "kind": "cooccurrence_primary_only",
            "level": matrix.level,
            "primary": primary,
            "count": count,
            "percent_of_toxic": matrix.percent_of_toxic(*count),
        }));
    }
    for (label, count) in matrix.contains_counts() {
        records.push(json!({
            "kind": "contains_label",
            "level": matrix.level,
            "label": label,
            "count": count,
            "percent_of_toxic": matrix.percent_of_toxic(count),
        }));
    }
    records
}

pub fn high_low_records(report: &HighLowReport) -> Vec<Value> {
    let mut records = vec![json!({
        "kind": "high_low_split",
        "mean_rate": report.mean_rate,
        "high_streams": report.high_streams,
        "low_streams": report.low_streams,
        "excluded_zero_toxic": report.excluded_zero_toxic,
        "alpha": report.alpha,
    })];
    for row in &report.rows {
        records.push(json!({
            "kind": "high_low_test",
            "subclass": row.subclass,
            "levene": test_result_record(&row.levene),
            "test": test_result_record(&row.test),
            "significant": row.significant,
            "higher_in": row.higher_in,
        }));
    }
    records
}

pub fn pairwise_records(report: &PairwiseReport) -> Vec<Value> {
    let mut records = vec![json!({
        "kind": "pairwise_header",
        "unit": report.unit.token(),
        "alpha": report.alpha,
        "metric": report.metric.tag(),
        "excluded_zero_toxic_streams": report.excluded_zero_toxic_streams,
    })];
    for row in &report.rows {
        records.push(json!({
            "kind": "pairwise_comparison",
            "unit": report.unit.token(),
            "unit_a": row.unit_a,
            "unit_b": row.unit_b,
            "permanova": perm_result_record(&row.permanova, report.metric),
            "permdisp": perm_result_record(&row.permdisp, report.metric),
            "dispersion_caveat": row.dispersion_caveat,
        }));
    }
    records
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn render_corpus_summary(summary: &CorpusSummary) -> String {
    let hours = if summary.hours >= 100.0 {
        thousands(summary.hours.round() as u64)
    } else {
        format!("{:.1}", summary.hours)
    };
    format!(
        "Corpus: {} streams, {} messages, {} hours of stream time\n",
        thousands(summary.streams as u64),
        thousands(summary.messages as u64),
        hours,
    )
}

/// "(F=44.12, p<0.001)"-style line for a classical test.
pub fn format_stat_line(result: &TestResult) -> String {
    let letter = match result.method.as_str() {
        "welch_t" => "t",
        "levene" => "W",
        _ => "F",
    };
    format!(
        "({letter}={:.2}, {})",
        result.statistic,
        format_p(result.p_value)
    )
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p<0.001".to_string()
    } else {
        format!("p={p:.3}")
    }
}

/// Two-column table of toxic-message shares, highest first.
pub fn render_ratio_table(title: &str, ratios: &BTreeMap<String, RatioEntry>) -> String {
    let mut rows: Vec<(&String, &RatioEntry)> = ratios.iter().collect();
    rows.sort_by(|a, b| b.1.ratio.total_cmp(&a.1.ratio).then_with(|| a.0.cmp(b.0)));
    let name_width = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain([4])
        .max()
        .unwrap();
    let mut out = format!("{title}\n");
    out.push_str(&format!("{:<name_width$}  {:>8}\n", "Group", "Toxic %"));
    for (name, entry) in rows {
        let note = if entry.zero_count { "  (no messages)" } else { "" };
        out.push_str(&format!(
            "{name:<name_width$}  {:>8.2}{note}\n",
            100.0 * entry.ratio
        ));
    }
    out
}

/// Category rows with indented subclass rows; primary columns per group, then
/// secondary columns per group.
pub fn render_prevalence_table(
    groups: &[String],
    cat_primary: &PrevalenceMap,
    cat_secondary: &PrevalenceMap,
    sub_primary: &PrevalenceMap,
    sub_secondary: &PrevalenceMap,
) -> String {
    const CATEGORY_LAYOUT: [(Category, &[Subclass]); 4] = [
        (Category::Harassment, &[Subclass::Bullying, Subclass::Aggression]),
        (
            Category::Discrimination,
            &[
                Subclass::RaceEthnicityReligion,
                Subclass::SexualityGender,
                Subclass::Misogyny,
                Subclass::Disability,
            ],
        ),
        (Category::SexualContent, &[]),
        (Category::Profanity, &[]),
    ];

    let pct = |map: &PrevalenceMap, group: &str, label: &str| -> f64 {
        map.get(&(group.to_string(), label.to_string()))
            .map(|e| e.percent)
            .unwrap_or(0.0)
    };

    let label_width = CATEGORY_LAYOUT
        .iter()
        .flat_map(|(c, subs)| {
            std::iter::once(c.display_name().len() + " (overall)".len())
                .chain(subs.iter().map(|s| s.display_name().len() + 2))
        })
        .max()
        .unwrap_or(24)
        + 2;
    let col_width = groups.iter().map(|g| g.len()).chain([8]).max().unwrap();
    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", "Category"));
    for half in ["primary", "secondary"] {
        for g in groups {
            out.push_str(&format!("  {g:>col_width$}"));
        }
        if half == "primary" {
            out.push_str("  |");
        }
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<label_width$}  {:^primary_width$}  |  {:^primary_width$}\n",
        "",
        "primary label (%)",
        "secondary label (%)",
        primary_width = groups.len() * (col_width + 2) - 2,
    ));

    let mut push_row = |name: String, primary: &PrevalenceMap, secondary: &PrevalenceMap, label: &str| {
        out.push_str(&format!("{name:<label_width$}"));
        for g in groups {
            out.push_str(&format!("  {:>col_width$.2}", pct(primary, g, label)));
        }
        out.push_str("  |");
        for g in groups {
            out.push_str(&format!("  {:>col_width$.2}", pct(secondary, g, label)));
        }
        out.push('\n');
    };

    for (category, subclasses) in CATEGORY_LAYOUT {
        let name = if subclasses.is_empty() {
            category.display_name().to_string()
        } else {
            format!("{} (overall)", category.display_name())
        };
        push_row(name, cat_primary, cat_secondary, category.token());
        for subclass in subclasses {
            push_row(
                format!("  {}", subclass.display_name()),
                sub_primary,
                sub_secondary,
                subclass.token(),
            );
        }
    }
    out
}

/// Top co-occurring label pairs with their share of toxic messages.
pub fn render_cooccurrence_summary(matrix: &CooccurrenceMatrix, top: usize) -> String {
    let mut pairs: Vec<(&(String, String), &u64)> = matrix.cells.iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let level = match matrix.level {
        Level::Category => "category",
        Level::Subclass => "subclass",
    };
    let mut out = format!("Most frequent primary/secondary co-occurrences ({level} level)\n");
    for ((primary, secondary), count) in pairs.into_iter().take(top) {
        out.push_str(&format!(
            "  {primary} with {secondary}: {:.2}% of toxic messages ({} messages)\n",
            matrix.percent_of_toxic(*count),
            thousands(*count),
        ));
    }
    out.push_str("Share of toxic messages containing each label:\n");
    for (label, count) in matrix.contains_counts() {
        out.push_str(&format!(
            "  {label}: {:.2}%\n",
            matrix.percent_of_toxic(count)
        ));
    }
    out
}

pub fn render_high_low(report: &HighLowReport) -> String {
    let mut out = format!(
        "High/low toxicity comparison (split at mean per-stream rate {:.4}%; {} high / {} low streams; {} zero-toxic streams excluded)\n",
        100.0 * report.mean_rate,
        report.high_streams,
        report.low_streams,
        report.excluded_zero_toxic,
    );
    for row in &report.rows {
        let marker = if row.significant { "*" } else { " " };
        let side = match row.higher_in {
            crate::analysis::HighLowSide::High => "higher in high-toxicity streams",
            crate::analysis::HighLowSide::Low => "higher in low-toxicity streams",
            crate::analysis::HighLowSide::Equal => "equal between sides",
        };
        out.push_str(&format!(
            " {marker}{:<28} {} via {}; {side}\n",
            row.subclass.display_name(),
            format_stat_line(&row.test),
            row.test.method,
        ));
    }
    out
}

/// Up to `per_class` example messages per subclass, as classified.
pub fn render_examples(examples: &BTreeMap<Subclass, Vec<String>>, per_class: usize) -> String {
    let mut out = String::from("Exemplary toxic messages per subclass\n");
    for subclass in Subclass::ALL {
        let Some(texts) = examples.get(&subclass) else {
            continue;
        };
        out.push_str(&format!(
            "{} / {}:\n",
            subclass.category().display_name(),
            subclass.display_name()
        ));
        for text in texts.iter().take(per_class) {
            out.push_str(&format!("  - {text}\n"));
        }
    }
    out
}

pub fn render_pairwise(report: &PairwiseReport) -> String {
    let mut out = format!(
        "Pairwise subclass-distribution comparisons by {} ({}, {} permutations each; {} zero-toxic streams excluded)\n",
        report.unit.token(),
        report.metric.tag(),
        report
            .rows
            .first()
            .map(|r| r.permanova.n_permutations)
            .unwrap_or(0),
        report.excluded_zero_toxic_streams,
    );
    for row in &report.rows {
        let caveat = if row.dispersion_caveat {
            "  [dispersion caveat: may reflect unequal variability]"
        } else {
            ""
        };
        out.push_str(&format!(
            "  {} vs {}: PERMANOVA F={:.2} {}; PERMDISP F={:.2} {}{caveat}\n",
            row.unit_a,
            row.unit_b,
            row.permanova.statistic,
            format_p(row.permanova.p_value),
            row.permdisp.statistic,
            format_p(row.permdisp.p_value),
        ));
    }
    out
}
