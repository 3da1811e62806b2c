//! Subcommand implementations. Each stage reads what previous stages wrote,
//! produces its artifacts, and updates the run manifest; no stage implicitly
//! runs another.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use chatox_core::analysis::{
    agreement::{
        agreement_sample, agreement_score, read_key_file, read_rater_file, write_key_file,
        write_rater_file,
    },
    benchmark::{f1_benchmark, load_benchmark_dataset},
    cooccurrence, high_low_comparison, label_prevalence, pairwise_distribution_tests,
    toxicity_ratio, AnalysisError, GroupBy, LabeledCorpusView, Level, PairwiseConfig, Slot, Unit,
};
use chatox_core::classify::{
    classify_corpus, commit_prelabels, Backend, HttpBackend, LabelStore, RecordingBackend,
    ReplayBackend,
};
use chatox_core::digest::digest16;
use chatox_core::ingest::{
    load_corpus, load_saved_corpus, save_corpus, Corpus,
};
use chatox_core::prelabel::{apply_prelabels, top_frequent_messages, PreLabelRuleSet};
use chatox_core::report;

use crate::config::{BackendKind, RunConfig};
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn load_normalized_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    let dir = config.corpus_dir();
    if !dir.join("corpus.jsonl").exists() {
        return Err(CliError::MissingInput(format!(
            "no normalized corpus at '{}'; run `chatox ingest <manifest>` first",
            dir.display()
        )));
    }
    Ok(load_saved_corpus(&dir)?)
}

fn open_existing_store(config: &RunConfig) -> Result<LabelStore, CliError> {
    let path = config.store_path();
    if !path.exists() {
        return Err(CliError::MissingInput(format!(
            "no label store at '{}'; run `chatox classify` first",
            path.display()
        )));
    }
    Ok(LabelStore::open(&path)?)
}

/// Digest over the normalized corpus files; the identity of the data a run
/// analyzed.
fn corpus_digest(config: &RunConfig) -> Result<String, CliError> {
    let dir = config.corpus_dir();
    let corpus = std::fs::read(dir.join("corpus.jsonl"))?;
    let streams = std::fs::read(dir.join("streams.jsonl"))?;
    Ok(digest16(&[&streams, &corpus]))
}

fn prelabel_rules(config: &RunConfig) -> Result<PreLabelRuleSet, CliError> {
    let allowlist = match &config.prelabel.allowlist_path {
        Some(path) => PreLabelRuleSet::load_list_file(&config.resolve(path))?,
        None => chatox_core::prelabel::DEFAULT_ALLOWLIST
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let bots = config.prelabel.bots.clone().unwrap_or_else(|| {
        chatox_core::prelabel::DEFAULT_BOTS
            .iter()
            .map(|s| s.to_string())
            .collect()
    });
    Ok(PreLabelRuleSet::new(allowlist, bots))
}

fn build_backend(config: &RunConfig) -> Result<Box<dyn Backend>, CliError> {
    match config.backend.kind {
        BackendKind::Replay => {
            let path = config.resolve(config.backend.replay_log.as_ref().expect("validated"));
            if !path.exists() {
                return Err(CliError::MissingInput(format!(
                    "replay log '{}' does not exist",
                    path.display()
                )));
            }
            Ok(Box::new(ReplayBackend::from_log(&path)?))
        }
        BackendKind::Http => {
            let http = HttpBackend::new(
                config.backend.url.clone(),
                config.backend.model.clone(),
                RunConfig::api_key(),
                config.classify.temperature,
                Duration::from_secs_f64(config.backend.timeout_s),
            )?;
            match &config.backend.record_log {
                Some(log) => Ok(Box::new(RecordingBackend::create(
                    http,
                    &config.resolve(log),
                )?)),
                None => Ok(Box::new(http)),
            }
        }
    }
}

fn manifest(config: &RunConfig) -> RunManifest {
    RunManifest::load_or_new(&config.reports_dir(), TOOL_VERSION, &config.config_digest)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialization: {e}")))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn write_records(path: &Path, records: &[Value]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    report::write_jsonl(&mut out, records)?;
    out.flush()?;
    Ok(())
}

pub fn cmd_ingest(config: &RunConfig, manifest_path: &Path) -> Result<(), CliError> {
    let (corpus, ingest_report) = load_corpus(manifest_path, &config.genre_overrides())?;
    save_corpus(&corpus, &config.corpus_dir())?;
    let summary = corpus.summary();

    let mut run_manifest = manifest(config);
    run_manifest.corpus_digest = Some(corpus_digest(config)?);
    run_manifest.record_stage(
        "ingest",
        json!({
            "streams": summary.streams,
            "messages": summary.messages,
            "hours": summary.hours,
            "skipped_comments": ingest_report.skipped_comments,
            "clamped_offsets": ingest_report.clamped_offsets,
        }),
    );
    run_manifest.save(&config.reports_dir())?;

    print!("{}", report::render_corpus_summary(&summary));
    if ingest_report.skipped_comments > 0 {
        println!(
            "warning: skipped {} structurally broken comment(s)",
            ingest_report.skipped_comments
        );
    }
    Ok(())
}

pub fn cmd_prelabel(config: &RunConfig, top: usize) -> Result<(), CliError> {
    let corpus = load_normalized_corpus(config)?;
    let rules = prelabel_rules(config)?;

    let candidates = top_frequent_messages(&corpus, top.max(1));
    let mut body = String::from("# rank\tcount\ttext\n");
    for (rank, (text, count)) in candidates.iter().enumerate() {
        body.push_str(&format!("{}\t{count}\t{text}\n", rank + 1));
    }
    let candidates_path = config.reports_dir().join("allowlist_candidates.tsv");
    write_text(&candidates_path, &body)?;

    let assignment = apply_prelabels(&corpus, &rules);
    let mut store = LabelStore::open(&config.store_path())?;
    let written = commit_prelabels(&corpus, &assignment, &mut store)?;

    let counts = json!({
        "allowlisted": assignment.allowlisted,
        "bots": assignment.bots,
        "needs_classification": assignment.needs_classification,
        "records_written": written,
    });
    write_json(&config.reports_dir().join("prelabel_summary.json"), &counts)?;
    let mut run_manifest = manifest(config);
    run_manifest.record_stage("prelabel", counts);
    run_manifest.save(&config.reports_dir())?;

    println!(
        "prelabel: {} allowlisted, {} bot, {} need classification ({} new records); candidates at {}",
        assignment.allowlisted,
        assignment.bots,
        assignment.needs_classification,
        written,
        candidates_path.display()
    );
    Ok(())
}

pub fn cmd_classify(config: &RunConfig) -> Result<(), CliError> {
    let corpus = load_normalized_corpus(config)?;
    let rules = prelabel_rules(config)?;
    let assignment = apply_prelabels(&corpus, &rules);
    let backend = build_backend(config)?;
    let mut store = LabelStore::open(&config.store_path())?;
    let summary = classify_corpus(
        &corpus,
        &assignment,
        backend.as_ref(),
        &mut store,
        &config.classify_config(),
    )?;

    let counts = serde_json::to_value(&summary)
        .map_err(|e| CliError::Data(format!("summary serialization: {e}")))?;
    write_json(&config.reports_dir().join("classify_summary.json"), &counts)?;
    let mut run_manifest = manifest(config);
    run_manifest.corpus_digest = Some(corpus_digest(config)?);
    run_manifest.record_stage("classify", counts);
    run_manifest.save(&config.reports_dir())?;

    println!(
        "classify: {} toxic ({:.2}%), {} non-toxic, {} pre-labeled, {} bot, {} invalid ({:.2}%); {} requests issued, {} already labeled",
        summary.toxic,
        100.0 * summary.toxic_rate,
        summary.non_toxic,
        summary.pre_non_toxic,
        summary.bot,
        summary.invalid,
        100.0 * summary.invalid_rate,
        summary.requests_issued,
        summary.already_labeled,
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeBy {
    Overall,
    Game,
    Genre,
    Stream,
}

impl AnalyzeBy {
    fn token(self) -> &'static str {
        match self {
            AnalyzeBy::Overall => "overall",
            AnalyzeBy::Game => "game",
            AnalyzeBy::Genre => "genre",
            AnalyzeBy::Stream => "stream",
        }
    }
}

fn header_record(config: &RunConfig) -> Result<Value, CliError> {
    Ok(report::run_header(
        &config.config_digest,
        &corpus_digest(config)?,
        TOOL_VERSION,
        config.stats.seed,
    ))
}

/// Grouped prevalence records for both levels and both single slots.
fn prevalence_block(
    view: &LabeledCorpusView<'_>,
    group_by: GroupBy,
    records: &mut Vec<Value>,
) -> [report::PrevalenceMap; 4] {
    let cat_primary = label_prevalence(view, Level::Category, Slot::Primary, group_by);
    let cat_secondary = label_prevalence(view, Level::Category, Slot::Secondary, group_by);
    let sub_primary = label_prevalence(view, Level::Subclass, Slot::Primary, group_by);
    let sub_secondary = label_prevalence(view, Level::Subclass, Slot::Secondary, group_by);
    records.extend(report::prevalence_records(
        Level::Category,
        Slot::Primary,
        group_by,
        &cat_primary,
    ));
    records.extend(report::prevalence_records(
        Level::Category,
        Slot::Secondary,
        group_by,
        &cat_secondary,
    ));
    records.extend(report::prevalence_records(
        Level::Subclass,
        Slot::Primary,
        group_by,
        &sub_primary,
    ));
    records.extend(report::prevalence_records(
        Level::Subclass,
        Slot::Secondary,
        group_by,
        &sub_secondary,
    ));
    [cat_primary, cat_secondary, sub_primary, sub_secondary]
}

pub fn cmd_analyze(config: &RunConfig, by: AnalyzeBy) -> Result<(), CliError> {
    let corpus = load_normalized_corpus(config)?;
    let store = open_existing_store(config)?;
    let view = LabeledCorpusView::new(&corpus, &store)?;
    let metric = config.metric()?;

    let mut records = vec![header_record(config)?];
    let mut human = String::new();

    match by {
        AnalyzeBy::Overall => {
            let ratios = toxicity_ratio(&view, GroupBy::All);
            records.extend(report::ratio_records(GroupBy::All, &ratios));
            human.push_str(&report::render_corpus_summary(&corpus.summary()));
            human.push_str(&report::render_ratio_table("Overall toxicity", &ratios));
            human.push('\n');

            let [cat_p, cat_s, sub_p, sub_s] =
                prevalence_block(&view, GroupBy::All, &mut records);
            let combined = label_prevalence(&view, Level::Category, Slot::Combined, GroupBy::All);
            records.extend(report::prevalence_records(
                Level::Category,
                Slot::Combined,
                GroupBy::All,
                &combined,
            ));
            human.push_str(&report::render_prevalence_table(
                &["all".to_string()],
                &cat_p,
                &cat_s,
                &sub_p,
                &sub_s,
            ));
            human.push('\n');

            for level in [Level::Subclass, Level::Category] {
                let matrix = cooccurrence(&view, level);
                records.extend(report::cooccurrence_records(&matrix));
                human.push_str(&report::render_cooccurrence_summary(&matrix, 5));
                human.push('\n');
            }

            match high_low_comparison(&view, config.stats.alpha) {
                Ok(high_low) => {
                    records.extend(report::high_low_records(&high_low));
                    human.push_str(&report::render_high_low(&high_low));
                }
                Err(AnalysisError::DegenerateSplit { high, low }) => {
                    records.push(json!({
                        "kind": "high_low_skipped",
                        "reason": format!("degenerate split: {high} high / {low} low streams"),
                    }));
                    human.push_str(&format!(
                        "High/low comparison skipped: degenerate split ({high} high / {low} low streams)\n"
                    ));
                }
                Err(e) => return Err(e.into()),
            }
        }
        AnalyzeBy::Game | AnalyzeBy::Genre => {
            let (group_by, unit) = match by {
                AnalyzeBy::Game => (GroupBy::Game, Unit::Game),
                _ => (GroupBy::Genre, Unit::Genre),
            };
            let ratios = toxicity_ratio(&view, group_by);
            records.extend(report::ratio_records(group_by, &ratios));
            human.push_str(&report::render_ratio_table(
                &format!("Relative amount of toxic chat messages per {}", unit.token()),
                &ratios,
            ));
            human.push('\n');

            let [cat_p, cat_s, sub_p, sub_s] = prevalence_block(&view, group_by, &mut records);
            let groups: Vec<String> = ratios.keys().cloned().collect();
            human.push_str(&report::render_prevalence_table(
                &groups, &cat_p, &cat_s, &sub_p, &sub_s,
            ));
            human.push('\n');

            let pairwise_cfg = PairwiseConfig {
                metric,
                n_perm: config.stats.n_perm,
                seed: config.stats.seed,
                alpha: config.stats.alpha,
            };
            match pairwise_distribution_tests(&view, unit, &pairwise_cfg) {
                Ok(pairwise) => {
                    records.extend(report::pairwise_records(&pairwise));
                    human.push_str(&report::render_pairwise(&pairwise));
                }
                Err(AnalysisError::UnitTooSmall { unit, streams }) => {
                    records.push(json!({
                        "kind": "pairwise_skipped",
                        "reason": format!(
                            "unit '{unit}' has {streams} stream(s) with toxic messages; need at least 2"
                        ),
                    }));
                    human.push_str(&format!(
                        "Pairwise comparisons skipped: unit '{unit}' has only {streams} usable stream(s)\n"
                    ));
                }
                Err(e) => return Err(e.into()),
            }
        }
        AnalyzeBy::Stream => {
            let ratios = toxicity_ratio(&view, GroupBy::Stream);
            records.extend(report::ratio_records(GroupBy::Stream, &ratios));
            human.push_str(&report::render_ratio_table(
                "Relative amount of toxic chat messages per stream",
                &ratios,
            ));
        }
    }

    let base = config.reports_dir();
    let jsonl_path = base.join(format!("analysis_{}.jsonl", by.token()));
    write_records(&jsonl_path, &records)?;
    write_text(&base.join(format!("analysis_{}.txt", by.token())), &human)?;

    let mut run_manifest = manifest(config);
    run_manifest.corpus_digest = Some(corpus_digest(config)?);
    run_manifest.record_stage(
        &format!("analyze_{}", by.token()),
        json!({ "records": records.len() }),
    );
    run_manifest.save(&config.reports_dir())?;

    println!(
        "analyze --by {}: {} records -> {}",
        by.token(),
        records.len(),
        jsonl_path.display()
    );
    Ok(())
}

pub fn cmd_agreement_sample(
    config: &RunConfig,
    n_toxic: usize,
    n_nontoxic: usize,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = load_normalized_corpus(config)?;
    let store = open_existing_store(config)?;
    let view = LabeledCorpusView::new(&corpus, &store)?;
    let bundle = agreement_sample(
        &view,
        n_toxic,
        n_nontoxic,
        config.stats.seed,
        config.classify.window_s,
        config.classify.context_cap,
    )?;

    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.reports_dir().join("agreement"));
    std::fs::create_dir_all(&dir)?;
    let rater_path = dir.join("rater_sheet.tsv");
    let key_path = dir.join("answer_key.tsv");
    let mut rater_file = std::io::BufWriter::new(std::fs::File::create(&rater_path)?);
    write_rater_file(&bundle, &mut rater_file)?;
    rater_file.flush()?;
    let mut key_file = std::io::BufWriter::new(std::fs::File::create(&key_path)?);
    write_key_file(&bundle, &mut key_file)?;
    key_file.flush()?;

    let mut run_manifest = manifest(config);
    run_manifest.record_stage(
        "agreement_sample",
        json!({
            "toxic": n_toxic,
            "nontoxic": n_nontoxic,
            "seed": config.stats.seed,
        }),
    );
    run_manifest.save(&config.reports_dir())?;

    println!(
        "agreement sample: {} rows -> {} (key: {})",
        bundle.rows.len(),
        rater_path.display(),
        key_path.display()
    );
    Ok(())
}

pub fn cmd_agreement_score(
    config: &RunConfig,
    key_path: &Path,
    rater_paths: &[PathBuf],
) -> Result<(), CliError> {
    if rater_paths.is_empty() {
        return Err(CliError::Config("at least one rater file is required".into()));
    }
    let key = read_key_file(key_path)?;
    let mut raters = Vec::with_capacity(rater_paths.len());
    for path in rater_paths {
        raters.push(read_rater_file(path)?);
    }
    let agreement = agreement_score(&key, &raters)?;

    let mut records = vec![header_record(config).unwrap_or_else(|_| {
        report::run_header(&config.config_digest, "", TOOL_VERSION, config.stats.seed)
    })];
    records.push(
        serde_json::to_value(&agreement)
            .map(|v| json!({ "kind": "agreement_report", "report": v }))
            .map_err(|e| CliError::Data(format!("serialization: {e}")))?,
    );
    write_records(&config.reports_dir().join("agreement_report.jsonl"), &records)?;

    let fmt_mean = |m: Option<f64>| m.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
    println!(
        "agreement: model-vs-rater mean kappa {} ({}); inter-rater mean kappa {}",
        fmt_mean(agreement.mean_model_kappa),
        agreement
            .raters
            .iter()
            .map(|r| r
                .binary
                .as_ref()
                .map(|k| format!("{:.2}", k.kappa))
                .unwrap_or_else(|| "n/a".into()))
            .collect::<Vec<_>>()
            .join(", "),
        fmt_mean(agreement.mean_inter_rater_kappa),
    );
    if let Some(top) = agreement.confusions.first() {
        println!(
            "most frequent subclass disagreement: model={} rater={} ({:.1}% of disagreements)",
            top.model.token(),
            top.rater.token(),
            100.0 * top.share
        );
    }

    let mut run_manifest = manifest(config);
    run_manifest.record_stage(
        "agreement_score",
        json!({
            "raters": rater_paths.len(),
            "mean_model_kappa": agreement.mean_model_kappa,
            "mean_inter_rater_kappa": agreement.mean_inter_rater_kappa,
        }),
    );
    run_manifest.save(&config.reports_dir())?;
    Ok(())
}

pub fn cmd_benchmark(config: &RunConfig, dataset_path: &Path) -> Result<(), CliError> {
    let dataset = load_benchmark_dataset(dataset_path)
        .map_err(|e| CliError::Data(format!("benchmark dataset: {e}")))?;
    if dataset.is_empty() {
        return Err(CliError::Data("benchmark dataset is empty".into()));
    }
    let backend = build_backend(config)?;
    let f1 = f1_benchmark(&dataset, backend.as_ref(), &config.classify_config())?;

    let value = serde_json::to_value(&f1)
        .map_err(|e| CliError::Data(format!("serialization: {e}")))?;
    write_json(&config.reports_dir().join("benchmark_report.json"), &value)?;
    let mut run_manifest = manifest(config);
    run_manifest.record_stage("benchmark", value);
    run_manifest.save(&config.reports_dir())?;

    println!(
        "benchmark: F1 {:.4} (precision {:.4}, recall {:.4}) over {} items; {} invalid responses",
        f1.f1, f1.precision, f1.recall, f1.total, f1.invalid
    );
    Ok(())
}

pub fn cmd_report(config: &RunConfig) -> Result<(), CliError> {
    let corpus = load_normalized_corpus(config)?;
    let store = open_existing_store(config)?;
    let view = LabeledCorpusView::new(&corpus, &store)?;

    let mut body = String::new();
    body.push_str(&report::render_corpus_summary(&corpus.summary()));
    body.push('\n');

    let by_game = toxicity_ratio(&view, GroupBy::Game);
    body.push_str(&report::render_ratio_table(
        "Relative amount of toxic chat messages per game (%)",
        &by_game,
    ));
    body.push('\n');

    let by_genre = toxicity_ratio(&view, GroupBy::Genre);
    body.push_str(&report::render_ratio_table(
        "Relative amount of toxic chat messages per genre (%)",
        &by_genre,
    ));
    body.push('\n');

    let cat_p = label_prevalence(&view, Level::Category, Slot::Primary, GroupBy::Genre);
    let cat_s = label_prevalence(&view, Level::Category, Slot::Secondary, GroupBy::Genre);
    let sub_p = label_prevalence(&view, Level::Subclass, Slot::Primary, GroupBy::Genre);
    let sub_s = label_prevalence(&view, Level::Subclass, Slot::Secondary, GroupBy::Genre);
    let genres: Vec<String> = by_genre.keys().cloned().collect();
    if !genres.is_empty() {
        body.push_str("Primary and secondary toxicity label prevalence (%) among toxic messages by genre\n");
        body.push_str(&report::render_prevalence_table(
            &genres, &cat_p, &cat_s, &sub_p, &sub_s,
        ));
        body.push('\n');
    }

    for level in [Level::Subclass, Level::Category] {
        let matrix = cooccurrence(&view, level);
        body.push_str(&report::render_cooccurrence_summary(&matrix, 5));
        body.push('\n');
    }

    // Up to two example messages per subclass, in corpus order.
    let mut examples: std::collections::BTreeMap<chatox_core::taxonomy::Subclass, Vec<String>> =
        std::collections::BTreeMap::new();
    for (message, label) in corpus.messages().iter().zip(view.labels()) {
        if let (chatox_core::classify::LabelStatus::Toxic, Some(primary)) =
            (label.status, label.primary)
        {
            let slot = examples.entry(primary).or_default();
            if slot.len() < 2 {
                slot.push(message.text.clone());
            }
        }
    }
    body.push_str(&report::render_examples(&examples, 2));
    body.push('\n');

    let path = config.reports_dir().join("report.txt");
    write_text(&path, &body)?;

    let mut run_manifest = manifest(config);
    run_manifest.corpus_digest = Some(corpus_digest(config)?);
    run_manifest.record_stage("report", json!({ "path": path.display().to_string() }));
    run_manifest.save(&config.reports_dir())?;

    print!("{body}");
    println!("report written to {}", path.display());
    Ok(())
}
