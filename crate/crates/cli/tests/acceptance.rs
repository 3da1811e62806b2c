//! Acceptance suite: one test per criterion, each printing a PASS line when
//! it completes. Oracles here are written from the definitions — centroid
//! sums of squares over raw coordinates, brute-force enumeration of label
//! assignments — and never call the implementation paths they check.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chatox_cli::{
    cmd_analyze, cmd_classify, cmd_ingest, cmd_prelabel, cmd_report, AnalyzeBy, RunConfig,
};
use chatox_core::analysis::{
    agreement::{agreement_sample, agreement_score, RaterRow},
    benchmark::{f1_benchmark, BenchmarkItem},
    cooccurrence, label_prevalence, toxicity_ratio, GroupBy, LabeledCorpusView, Level, Slot,
};
use chatox_core::classify::{
    build_context, classify_corpus, render_prompt, Backend, BackendError, ClassifyConfig,
    LabelStore, MockBackend, PromptPayload, RecordingBackend, Stage,
};
use chatox_core::ingest::{ChatMessage, Corpus, StreamMeta};
use chatox_core::prelabel::{apply_prelabels, PreLabelRuleSet};
use chatox_core::taxonomy::Subclass;
use chatox_stats::{
    anova_oneway, cohen_kappa, distance_matrix, pcoa, permanova, permdisp, welch_t, Metric,
    PermScheme,
};

fn pass(criterion: &str) {
    println!("acceptance {criterion}: PASS");
}

// ---------------------------------------------------------------------------
// Criterion 1: statistic oracles
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_statistic_oracles() {
    let start = Instant::now();

    // 2x2 kappa: po = 0.60, pe = 0.54, kappa = 3/23.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (count, (x, y)) in [(45, (1, 1)), (15, (1, 0)), (25, (0, 1)), (15, (0, 0))] {
        for _ in 0..count {
            a.push(x);
            b.push(y);
        }
    }
    let kappa = cohen_kappa(&a, &b).unwrap();
    assert!((kappa.kappa - 3.0 / 23.0).abs() < 1e-12);
    assert!((kappa.observed_agreement - 0.60).abs() < 1e-12);
    assert!((kappa.expected_agreement - 0.54).abs() < 1e-12);

    let f = anova_oneway(&[
        vec![1.0, 2.0, 3.0],
        vec![2.0, 3.0, 4.0],
        vec![3.0, 4.0, 5.0],
    ])
    .unwrap();
    assert!((f.statistic - 3.0).abs() < 1e-12);
    assert!((f.df[0] - 2.0).abs() < 1e-12 && (f.df[1] - 6.0).abs() < 1e-12);

    let t = welch_t(
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[2.0, 3.0, 4.0, 5.0, 6.0],
    )
    .unwrap();
    assert!((t.statistic - -1.0).abs() < 1e-12);
    assert!((t.df[0] - 8.0).abs() < 1e-12);

    let d = distance_matrix(&[vec![1.0, 1.0], vec![1.0, 3.0]], Metric::BrayCurtis).unwrap();
    assert_eq!(d.get(0, 1), 1.0 / 3.0);

    assert!(start.elapsed() < Duration::from_secs(1), "runtime budget");
    pass("01 statistic oracles");
}

// ---------------------------------------------------------------------------
// Criterion 2: permutation exactness against a brute-force enumerator
// ---------------------------------------------------------------------------

struct Fixture {
    name: &'static str,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "separated-1d",
            points: [0.0, 0.0, 0.0, 10.0, 10.0, 10.0].iter().map(|&x| vec![x]).collect(),
            labels: vec![0, 0, 0, 1, 1, 1],
        },
        Fixture {
            name: "generic-1d",
            points: [0.31, 1.72, 2.93, 3.84, 5.17, 6.46].iter().map(|&x| vec![x]).collect(),
            labels: vec![0, 0, 0, 1, 1, 1],
        },
        Fixture {
            name: "generic-2d",
            points: vec![
                vec![0.1, 0.2],
                vec![0.9, -0.3],
                vec![0.4, 1.1],
                vec![-0.6, 0.5],
                vec![2.2, 1.9],
                vec![3.1, 2.4],
                vec![2.7, 3.3],
                vec![1.8, 2.8],
            ],
            labels: vec![0, 0, 0, 0, 1, 1, 1, 1],
        },
        Fixture {
            name: "three-groups-2d",
            points: vec![
                vec![0.0, 0.1],
                vec![0.5, -0.2],
                vec![4.1, 3.9],
                vec![4.8, 4.4],
                vec![5.2, 3.6],
                vec![-3.9, 2.1],
                vec![-4.4, 1.7],
                vec![-3.1, 2.9],
            ],
            labels: vec![0, 0, 1, 1, 1, 2, 2, 2],
        },
        Fixture {
            name: "equal-centroids-unequal-spread",
            points: [-0.11, 0.11, -0.04, 0.04, -5.03, 4.97, -2.51, 2.57]
                .iter()
                .map(|&x| vec![x])
                .collect(),
            labels: vec![0, 0, 0, 0, 1, 1, 1, 1],
        },
    ]
}

fn sum_sorted(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn centroid(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for &i in members {
        for (axis, v) in c.iter_mut().enumerate() {
            *v += points[i][axis];
        }
    }
    for v in c.iter_mut() {
        *v /= members.len() as f64;
    }
    c
}

fn sq_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn members_by_group(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); k];
    for (i, &g) in labels.iter().enumerate() {
        m[g].push(i);
    }
    m
}

fn f_from_ss(ssb: f64, ssw: f64, k: usize, n: usize) -> f64 {
    if ssb == 0.0 {
        0.0
    } else if ssw == 0.0 {
        f64::INFINITY
    } else {
        (ssb / (k - 1) as f64) / (ssw / (n - k) as f64)
    }
}

fn oracle_location_f(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let all: Vec<usize> = (0..n).collect();
    let grand = centroid(points, &all);
    let groups = members_by_group(labels, k);
    let ssb = sum_sorted(
        groups
            .iter()
            .map(|m| m.len() as f64 * sq_norm(&centroid(points, m), &grand)),
    );
    let ssw = sum_sorted(groups.iter().map(|m| {
        let c = centroid(points, m);
        m.iter().map(|&i| sq_norm(&points[i], &c)).sum::<f64>()
    }));
    f_from_ss(ssb, ssw, k, n)
}

fn oracle_anova_f(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let n = values.len();
    let groups = members_by_group(labels, k);
    let grand = values.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = groups
        .iter()
        .map(|m| m.iter().map(|&i| values[i]).sum::<f64>() / m.len() as f64)
        .collect();
    let ssb = sum_sorted(
        groups
            .iter()
            .zip(&means)
            .map(|(m, mu)| m.len() as f64 * (mu - grand).powi(2)),
    );
    let ssw = sum_sorted(
        groups
            .iter()
            .zip(&means)
            .map(|(m, mu)| m.iter().map(|&i| (values[i] - mu).powi(2)).sum::<f64>()),
    );
    f_from_ss(ssb, ssw, k, n)
}

fn all_assignments(labels: &[usize]) -> Vec<Vec<usize>> {
    fn permute(current: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        if rest.is_empty() {
            out.insert(current.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            current.push(v);
            permute(current, rest, out);
            current.pop();
            rest.insert(i, v);
        }
    }
    let mut out = BTreeSet::new();
    permute(&mut Vec::new(), &mut labels.to_vec(), &mut out);
    out.into_iter().collect()
}

#[test]
fn criterion_02_permutation_exactness() {
    let start = Instant::now();
    for fx in fixtures() {
        let k = fx.labels.iter().copied().max().unwrap() + 1;
        let assignments = all_assignments(&fx.labels);
        let d = distance_matrix(&fx.points, Metric::Euclidean).unwrap();

        // PERMANOVA: oracle p from centroid-route F over every assignment.
        let observed = oracle_location_f(&fx.points, &fx.labels, k);
        let exceed = assignments
            .iter()
            .filter(|a| oracle_location_f(&fx.points, a, k) >= observed)
            .count();
        let oracle_p = exceed as f64 / assignments.len() as f64;
        let exhaustive = permanova(&d, &fx.labels, PermScheme::Exhaustive).unwrap();
        assert_eq!(exhaustive.p_value, oracle_p, "{}: permanova exact p", fx.name);
        assert_eq!(exhaustive.n_permutations, assignments.len() as u64, "{}", fx.name);

        let mc = permanova(
            &d,
            &fx.labels,
            PermScheme::MonteCarlo { n_perm: 9999, seed: 42 },
        )
        .unwrap();
        assert!(
            (mc.p_value - oracle_p).abs() <= 0.02,
            "{}: permanova MC {} vs exact {}",
            fx.name,
            mc.p_value,
            oracle_p
        );

        // PERMDISP: residual distances fixed by the observed grouping.
        let groups = members_by_group(&fx.labels, k);
        let z: Vec<f64> = (0..fx.points.len())
            .map(|i| sq_norm(&fx.points[i], &centroid(&fx.points, &groups[fx.labels[i]])).sqrt())
            .collect();
        let observed_disp = oracle_anova_f(&z, &fx.labels, k);
        let exceed = assignments
            .iter()
            .filter(|a| oracle_anova_f(&z, a, k) >= observed_disp)
            .count();
        let oracle_disp_p = exceed as f64 / assignments.len() as f64;
        let exhaustive_disp = permdisp(&d, &fx.labels, PermScheme::Exhaustive).unwrap();
        assert_eq!(
            exhaustive_disp.p_value, oracle_disp_p,
            "{}: permdisp exact p",
            fx.name
        );

        let mc_disp = permdisp(
            &d,
            &fx.labels,
            PermScheme::MonteCarlo { n_perm: 9999, seed: 42 },
        )
        .unwrap();
        assert!(
            (mc_disp.p_value - oracle_disp_p).abs() <= 0.02,
            "{}: permdisp MC {} vs exact {}",
            fx.name,
            mc_disp.p_value,
            oracle_disp_p
        );
    }
    assert!(start.elapsed() < Duration::from_secs(30), "runtime budget");
    pass("02 permutation exactness");
}

// ---------------------------------------------------------------------------
// Criterion 3: PERMANOVA pseudo-F equals classical one-way F on 1-D data
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_anova_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    while checked < 100 {
        let k = rng.gen_range(2..=4);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let size = rng.gen_range(2..=7);
                let center = rng.gen_range(-4.0..4.0);
                (0..size).map(|_| center + rng.gen_range(-2.0..2.0)).collect()
            })
            .collect();
        let classical = anova_oneway(&groups).unwrap();
        if !classical.statistic.is_finite() {
            continue;
        }
        let rows: Vec<Vec<f64>> = groups.iter().flatten().map(|&x| vec![x]).collect();
        let labels: Vec<usize> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, v)| std::iter::repeat_n(g, v.len()))
            .collect();
        let d = distance_matrix(&rows, Metric::Euclidean).unwrap();
        let pseudo = permanova(&d, &labels, PermScheme::MonteCarlo { n_perm: 1, seed: 0 })
            .unwrap()
            .statistic;
        assert!(
            (pseudo - classical.statistic).abs() <= 1e-9 * classical.statistic.abs().max(1.0),
            "fixture {checked}: pseudo-F {pseudo} vs classical {}",
            classical.statistic
        );
        checked += 1;
    }
    pass("03 ANOVA equivalence (100 random 1-D fixtures)");
}

// ---------------------------------------------------------------------------
// Criterion 4: PCoA reconstructs Euclidean geometry
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_pcoa_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..50 {
        let n = rng.gen_range(2..=20);
        let dim = rng.gen_range(1..=5);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let d = distance_matrix(&points, Metric::Euclidean).unwrap();
        let ord = pcoa(&d).unwrap();
        for i in 0..n {
            for j in 0..n {
                let got = ord.reconstructed_distance(i, j);
                assert!(
                    (got - d.get(i, j)).abs() < 1e-9,
                    "case {case} pair ({i},{j}): {got} vs {}",
                    d.get(i, j)
                );
            }
        }
    }
    pass("04 PCoA fidelity (50 random Euclidean point sets)");
}

// ---------------------------------------------------------------------------
// Planted-truth corpus shared by criteria 5, 6, and 8
// ---------------------------------------------------------------------------

type ToxMix = &'static [(Subclass, Option<Subclass>, u64)];

struct GamePlan {
    game: &'static str,
    mix: ToxMix,
}

/// Two streams per game, 1,000 messages per stream (10,000 total).
/// Streams 0 and 5 carry three invalid plants each: 6 total = 0.06%.
const STREAM_TOTAL: u64 = 1000;
const ALLOW_PER_STREAM: u64 = 100;
const BOT_PER_STREAM: u64 = 50;

fn game_plans() -> Vec<GamePlan> {
    vec![
        GamePlan {
            game: "Dota 2",
            mix: &[
                (Subclass::Bullying, Some(Subclass::Swearing), 30),
                (Subclass::Aggression, None, 10),
            ],
        },
        GamePlan {
            game: "League of Legends",
            mix: &[
                (Subclass::Bullying, Some(Subclass::Swearing), 20),
                (Subclass::Misogyny, Some(Subclass::Bullying), 5),
            ],
        },
        GamePlan {
            game: "Counter-Strike 2",
            mix: &[
                (Subclass::Aggression, Some(Subclass::Swearing), 15),
                (Subclass::RaceEthnicityReligion, None, 5),
            ],
        },
        GamePlan {
            game: "Valorant",
            mix: &[
                (Subclass::SexBasedTerms, Some(Subclass::Swearing), 8),
                (Subclass::Bullying, None, 16),
            ],
        },
        GamePlan {
            game: "Minecraft",
            mix: &[(Subclass::Swearing, None, 7)],
        },
    ]
}

fn planted_corpus() -> Corpus {
    let plans = game_plans();
    let mut parts = Vec::new();
    for stream_idx in 0..10usize {
        let plan = &plans[stream_idx / 2];
        let stream_id = format!("stream{stream_idx}");
        let invalid_here: u64 = if stream_idx == 0 || stream_idx == 5 { 3 } else { 0 };
        let toxic_here: u64 = plan.mix.iter().map(|&(_, _, c)| c).sum();
        let nontoxic_here =
            STREAM_TOTAL - ALLOW_PER_STREAM - BOT_PER_STREAM - invalid_here - toxic_here;

        let mut texts: Vec<(String, String)> = Vec::with_capacity(STREAM_TOTAL as usize);
        for i in 0..ALLOW_PER_STREAM {
            texts.push((format!("viewer{i}"), "gg".to_string()));
        }
        for i in 0..BOT_PER_STREAM {
            texts.push(("Nightbot".to_string(), format!("timer message {i}")));
        }
        for i in 0..invalid_here {
            texts.push((format!("viewer{i}"), format!("plant:invalid filler {i}")));
        }
        for &(primary, secondary, count) in plan.mix {
            let secondary_token = secondary.map(|s| s.token()).unwrap_or("none");
            for i in 0..count {
                texts.push((
                    format!("viewer{i}"),
                    format!("plant:toxic:{}:{} filler {i}", primary.token(), secondary_token),
                ));
            }
        }
        for i in 0..nontoxic_here {
            texts.push((format!("viewer{i}"), format!("plant:nontoxic filler {i}")));
        }
        assert_eq!(texts.len() as u64, STREAM_TOTAL);

        // Deterministic interleave so plants are spread through the stream.
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + stream_idx as u64);
        use rand::seq::SliceRandom;
        texts.shuffle(&mut rng);

        let meta = StreamMeta {
            stream_id: stream_id.clone(),
            streamer: format!("streamer{stream_idx}"),
            game: plan.game.to_string(),
            genre: chatox_core::ingest::genre_of(plan.game),
            started_at: None,
            duration_s: STREAM_TOTAL as f64 * 3.0,
        };
        let messages: Vec<ChatMessage> = texts
            .into_iter()
            .enumerate()
            .map(|(i, (user, text))| {
                ChatMessage::new(&stream_id, i as u32, i as f64 * 3.0, user, text)
            })
            .collect();
        parts.push((meta, messages));
    }
    Corpus::from_streams(parts).unwrap()
}

fn target_text(payload: &PromptPayload) -> String {
    let line = payload.user_content.lines().last().unwrap_or("");
    line.split_once(": ")
        .map(|(_, t)| t.to_string())
        .unwrap_or_else(|| line.to_string())
}

fn planted_backend() -> MockBackend {
    MockBackend::with_responder(|payload| {
        let text = target_text(payload);
        let directive: Vec<String> = text
            .split_whitespace()
            .next()
            .unwrap_or("")
            .split(':')
            .map(str::to_string)
            .collect();
        match payload.stage {
            Stage::Binary => Ok(match directive.get(1).map(String::as_str) {
                Some("toxic") => "yes".to_string(),
                Some("invalid") => "I cannot determine this.".to_string(),
                _ => "no".to_string(),
            }),
            Stage::Subclass => {
                let primary = directive.get(2).cloned().unwrap_or_else(|| "bullying".into());
                let secondary = directive.get(3).cloned().unwrap_or_else(|| "none".into());
                Ok(format!("primary: {primary}; secondary: {secondary}"))
            }
        }
    })
}

fn fast_cfg() -> ClassifyConfig {
    ClassifyConfig {
        max_in_flight: 8,
        backoff_base: Duration::from_millis(1),
        ..ClassifyConfig::default()
    }
}

fn classify_planted(corpus: &Corpus, backend: &dyn Backend, dir: &Path) -> LabelStore {
    let assignment = apply_prelabels(corpus, &PreLabelRuleSet::defaults());
    let mut store = LabelStore::open(&dir.join("labels.jsonl")).unwrap();
    classify_corpus(corpus, &assignment, backend, &mut store, &fast_cfg()).unwrap();
    store
}

// ---------------------------------------------------------------------------
// Criterion 5: planted-truth end-to-end recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_planted_truth_end_to_end() {
    let corpus = planted_corpus();
    assert!(corpus.stream_count() >= 10);
    assert!(corpus.message_count() >= 10_000);
    let dir = tempfile::tempdir().unwrap();
    let backend = planted_backend();
    let store = classify_planted(&corpus, &backend, dir.path());
    let view = LabeledCorpusView::new(&corpus, &store).unwrap();

    // Per-game ratios: integer-count exact.
    let by_game = toxicity_ratio(&view, GroupBy::Game);
    let mut expected_game_toxic: BTreeMap<&str, u64> = BTreeMap::new();
    for plan in game_plans() {
        let toxic: u64 = plan.mix.iter().map(|&(_, _, c)| c).sum();
        expected_game_toxic.insert(plan.game, 2 * toxic);
    }
    for (game, expected_toxic) in &expected_game_toxic {
        let entry = &by_game[*game];
        assert_eq!(entry.toxic, *expected_toxic, "{game} toxic count");
        assert_eq!(entry.total, 2 * STREAM_TOTAL, "{game} total");
        assert_eq!(entry.ratio, *expected_toxic as f64 / (2 * STREAM_TOTAL) as f64);
    }

    // Genre ratios satisfy the weighted-mean identity exactly.
    let by_genre = toxicity_ratio(&view, GroupBy::Genre);
    let moba = &by_genre["moba"];
    assert_eq!(
        moba.toxic,
        expected_game_toxic["Dota 2"] + expected_game_toxic["League of Legends"]
    );
    assert_eq!(moba.total, 4 * STREAM_TOTAL);
    let weighted = (by_game["Dota 2"].total as f64 * by_game["Dota 2"].ratio
        + by_game["League of Legends"].total as f64 * by_game["League of Legends"].ratio)
        / moba.total as f64;
    assert_eq!(weighted, moba.ratio, "weighted-mean identity");
    let shooter = &by_genre["mp_shooter"];
    assert_eq!(
        shooter.toxic,
        expected_game_toxic["Counter-Strike 2"] + expected_game_toxic["Valorant"]
    );
    assert!(!by_genre.contains_key("sp_shooter"), "no SP shooter planted");

    // Prevalence: planted primary counts per game, exactly.
    let prevalence = label_prevalence(&view, Level::Subclass, Slot::Primary, GroupBy::Game);
    for plan in game_plans() {
        let game_toxic = expected_game_toxic[plan.game];
        let mut per_subclass: BTreeMap<Subclass, u64> = BTreeMap::new();
        for &(primary, _, count) in plan.mix {
            *per_subclass.entry(primary).or_insert(0) += 2 * count;
        }
        for subclass in Subclass::ALL {
            let entry = &prevalence[&(plan.game.to_string(), subclass.token().to_string())];
            let expected = per_subclass.get(&subclass).copied().unwrap_or(0);
            assert_eq!(entry.count, expected, "{} {}", plan.game, subclass);
            assert_eq!(entry.toxic_total, game_toxic);
            assert_eq!(entry.percent, 100.0 * expected as f64 / game_toxic as f64);
        }
    }

    // Co-occurrence cells: planted pair counts, exactly.
    let matrix = cooccurrence(&view, Level::Subclass);
    let mut expected_cells: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut expected_primary_only: BTreeMap<String, u64> = BTreeMap::new();
    let mut expected_toxic_total = 0u64;
    for plan in game_plans() {
        for &(primary, secondary, count) in plan.mix {
            expected_toxic_total += 2 * count;
            match secondary {
                Some(s) => {
                    *expected_cells
                        .entry((primary.token().into(), s.token().into()))
                        .or_insert(0) += 2 * count;
                }
                None => {
                    *expected_primary_only.entry(primary.token().into()).or_insert(0) += 2 * count;
                }
            }
        }
    }
    assert_eq!(matrix.cells, expected_cells);
    assert_eq!(matrix.primary_only, expected_primary_only);
    assert_eq!(matrix.toxic_total, expected_toxic_total);
    assert_eq!(matrix.cell_total() + matrix.primary_only_total(), matrix.toxic_total);

    pass("05 planted-truth end-to-end");
}

// ---------------------------------------------------------------------------
// Criterion 6: pipeline invariants
// ---------------------------------------------------------------------------

/// Fails every request after the first `limit` have been answered.
struct FailingBackend {
    inner: MockBackend,
    answered: AtomicUsize,
    limit: usize,
}

impl Backend for FailingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError> {
        if self.answered.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(BackendError::Http {
                status: Some(503),
                detail: "injected outage".into(),
            });
        }
        self.inner.send(payload)
    }
}

#[test]
fn criterion_06_pipeline_invariants() {
    let corpus = planted_corpus();
    let assignment = apply_prelabels(&corpus, &PreLabelRuleSet::defaults());
    let dir = tempfile::tempdir().unwrap();

    let backend = planted_backend();
    let full_path = dir.path().join("full.jsonl");
    let mut store = LabelStore::open(&full_path).unwrap();
    let summary =
        classify_corpus(&corpus, &assignment, &backend, &mut store, &fast_cfg()).unwrap();
    drop(store);

    // No allowlisted or bot message ever reached the backend.
    let captured = backend.captured();
    for c in &captured {
        let text = target_text(&c.payload);
        assert_ne!(text.trim().to_lowercase(), "gg", "allowlisted text sent to backend");
        assert!(!text.starts_with("timer message"), "bot text sent to backend");
    }
    let needs = assignment.needs_classification;
    let planted_toxic: u64 = game_plans()
        .iter()
        .flat_map(|p| p.mix.iter().map(|&(_, _, c)| c * 2))
        .sum();
    let stage1 = captured.iter().filter(|c| c.payload.stage == Stage::Binary).count() as u64;
    let stage2 = captured.iter().filter(|c| c.payload.stage == Stage::Subclass).count() as u64;
    assert_eq!(stage1, needs, "one binary request per unlabeled message");
    assert_eq!(stage2, planted_toxic, "stage 2 only for stage-1 toxic verdicts");

    // Injected invalid rate recovered exactly: 6 of 10,000 = 0.06%.
    assert_eq!(summary.invalid, 6);
    assert_eq!(summary.total_messages, 10_000);
    assert_eq!(summary.invalid_rate, 6.0 / 10_000.0);
    assert!((100.0 * summary.invalid_rate - 0.06).abs() < 1e-12);

    // Invalid labels are excluded from toxicity numerators.
    let store = LabelStore::open(&full_path).unwrap();
    let view = LabeledCorpusView::new(&corpus, &store).unwrap();
    let overall = &toxicity_ratio(&view, GroupBy::All)["all"];
    assert_eq!(overall.toxic, planted_toxic);
    assert_eq!(overall.total, 10_000);
    drop(store);

    // Kill-and-resume reproduces the uninterrupted store byte for byte.
    let resumed_path = dir.path().join("resumed.jsonl");
    let failing = FailingBackend {
        inner: planted_backend(),
        answered: AtomicUsize::new(0),
        limit: 2_500,
    };
    let mut store = LabelStore::open(&resumed_path).unwrap();
    let cfg = ClassifyConfig { max_retries: 0, ..fast_cfg() };
    classify_corpus(&corpus, &assignment, &failing, &mut store, &cfg).unwrap_err();
    drop(store);
    let mut store = LabelStore::open(&resumed_path).unwrap();
    let resumed_summary =
        classify_corpus(&corpus, &assignment, &planted_backend(), &mut store, &fast_cfg())
            .unwrap();
    drop(store);
    assert_eq!(
        std::fs::read(&full_path).unwrap(),
        std::fs::read(&resumed_path).unwrap(),
        "resumed store differs from uninterrupted store"
    );
    assert!(resumed_summary.requests_issued < summary.requests_issued);

    pass("06 pipeline invariants");
}

// ---------------------------------------------------------------------------
// Criterion 7: context correctness over random streams
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_context_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut parts = Vec::new();
    for stream_idx in 0..25usize {
        let stream_id = format!("r{stream_idx}");
        let n = rng.gen_range(5..=90);
        let bursty = stream_idx % 4 == 0;
        let mut offsets: Vec<f64> = (0..n)
            .map(|_| {
                if bursty {
                    // Dense burst: force the 50-message cap.
                    rng.gen_range(0.0..6.0)
                } else {
                    rng.gen_range(0.0..120.0)
                }
            })
            .collect();
        offsets.sort_by(f64::total_cmp);
        let messages: Vec<ChatMessage> = offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                ChatMessage::new(
                    &stream_id,
                    i as u32,
                    o,
                    format!("u{i}"),
                    format!("w{stream_idx}_{i}"),
                )
            })
            .collect();
        let meta = StreamMeta {
            stream_id: stream_id.clone(),
            streamer: stream_id.clone(),
            game: "Dota 2".into(),
            genre: None,
            started_at: None,
            duration_s: 120.0,
        };
        parts.push((meta, messages));
    }
    let big_burst: Vec<ChatMessage> = (0..80)
        .map(|i| {
            ChatMessage::new("burst", i, 2.0 + i as f64 * 0.05, format!("u{i}"), format!("wb_{i}"))
        })
        .collect();
    parts.push((
        StreamMeta {
            stream_id: "burst".into(),
            streamer: "burst".into(),
            game: "Dota 2".into(),
            genre: None,
            started_at: None,
            duration_s: 10.0,
        },
        big_burst,
    ));
    let corpus = Corpus::from_streams(parts).unwrap();

    let assignment = apply_prelabels(&corpus, &PreLabelRuleSet::defaults());
    let backend = MockBackend::with_responder(|_| Ok("no".into()));
    let dir = tempfile::tempdir().unwrap();
    let mut store = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
    let cfg = fast_cfg();
    classify_corpus(&corpus, &assignment, &backend, &mut store, &cfg).unwrap();

    let mut text_to_location: HashMap<String, (usize, usize)> = HashMap::new();
    for (global, m) in corpus.messages().iter().enumerate() {
        text_to_location.insert(m.text.clone(), corpus.locate(global));
    }

    let captured = backend.captured();
    assert_eq!(captured.len(), corpus.message_count());
    let mut cap_hit = false;
    for c in &captured {
        let text = target_text(&c.payload);
        let (stream_idx, local) = text_to_location[&text];
        let stream = corpus.messages_of(stream_idx);
        let target = &stream[local];

        // Oracle: exactly the messages with offset in [t-10, t), most recent
        // 50 when more qualify.
        let mut expected: Vec<(String, String)> = stream[..local]
            .iter()
            .filter(|m| m.offset_s >= target.offset_s - cfg.window_s && m.offset_s < target.offset_s)
            .map(|m| (m.user.clone(), m.text.clone()))
            .collect();
        if expected.len() > cfg.context_cap {
            expected = expected.split_off(expected.len() - cfg.context_cap);
            cap_hit = true;
        }
        let expected_ctx = chatox_core::classify::Context { messages: expected };
        let expected_payload = render_prompt(target, &expected_ctx, Stage::Binary);
        assert_eq!(c.payload, expected_payload, "context mismatch for {text}");
    }
    assert!(cap_hit, "fixture never exercised the 50-message cap");

    // The builder agrees with the oracle on every (stream, target) pair too.
    for stream_idx in 0..corpus.stream_count() {
        let stream = corpus.messages_of(stream_idx);
        for local in 0..stream.len() {
            let target = &stream[local];
            let got = build_context(stream, local, cfg.window_s, cfg.context_cap);
            let mut expected: Vec<(String, String)> = stream[..local]
                .iter()
                .filter(|m| {
                    m.offset_s >= target.offset_s - cfg.window_s && m.offset_s < target.offset_s
                })
                .map(|m| (m.user.clone(), m.text.clone()))
                .collect();
            if expected.len() > cfg.context_cap {
                expected = expected.split_off(expected.len() - cfg.context_cap);
            }
            assert_eq!(got.messages, expected);
        }
    }

    pass("07 context correctness");
}

// ---------------------------------------------------------------------------
// Criterion 8: agreement harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_agreement_harness() {
    let corpus = planted_corpus();
    let dir = tempfile::tempdir().unwrap();
    let backend = planted_backend();
    let store = classify_planted(&corpus, &backend, dir.path());
    let view = LabeledCorpusView::new(&corpus, &store).unwrap();

    let bundle = agreement_sample(&view, 50, 50, 42, 10.0, 50).unwrap();
    assert_eq!(bundle.rows.len(), 100);
    assert_eq!(bundle.key.iter().filter(|k| k.toxic).count(), 50);

    // Feeding the key back as a rater scores kappa 1.0.
    let echo: Vec<RaterRow> = bundle
        .key
        .iter()
        .map(|k| RaterRow {
            sample_id: k.sample_id,
            toxic: k.toxic,
            subclass: k.primary,
        })
        .collect();
    let report = agreement_score(&bundle.key, &[echo]).unwrap();
    assert!((report.raters[0].binary.as_ref().unwrap().kappa - 1.0).abs() < 1e-12);

    // Three synthetic raters built to score kappa 0.44, 0.46, 0.70 against
    // the balanced key: with pe = 1/2, kappa = 1 - disagreements/50.
    let synthetic_rater = |disagreements: usize| -> Vec<RaterRow> {
        let flip_toxic = disagreements / 2;
        let flip_nontoxic = disagreements - flip_toxic;
        let (mut flipped_toxic, mut flipped_nontoxic) = (0, 0);
        bundle
            .key
            .iter()
            .map(|k| {
                let toxic = if k.toxic && flipped_toxic < flip_toxic {
                    flipped_toxic += 1;
                    false
                } else if !k.toxic && flipped_nontoxic < flip_nontoxic {
                    flipped_nontoxic += 1;
                    true
                } else {
                    k.toxic
                };
                RaterRow {
                    sample_id: k.sample_id,
                    toxic,
                    subclass: k.primary,
                }
            })
            .collect()
    };
    // kappa = 1 - f/50: f = 28 -> 0.44, f = 27 -> 0.46, f = 15 -> 0.70.
    let raters = [synthetic_rater(28), synthetic_rater(27), synthetic_rater(15)];
    let report = agreement_score(&bundle.key, &raters).unwrap();
    let kappas: Vec<f64> = report
        .raters
        .iter()
        .map(|r| r.binary.as_ref().unwrap().kappa)
        .collect();
    for (got, want) in kappas.iter().zip([0.44, 0.46, 0.70]) {
        assert!((got - want).abs() < 1e-12, "kappa {got} vs {want}");
    }
    let mean = report.mean_model_kappa.unwrap();
    assert_eq!(format!("{mean:.2}"), "0.53", "mean of (0.44, 0.46, 0.70)");
    assert_eq!(report.pairs.len(), 3, "all pairwise inter-rater kappas");

    pass("08 agreement harness");
}

// ---------------------------------------------------------------------------
// Criterion 9: benchmark harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_benchmark_harness() {
    let oracle_set: Vec<BenchmarkItem> = (0..120)
        .map(|i| BenchmarkItem {
            text: format!("{} sample {i}", if i % 3 == 0 { "BADWORD" } else { "fine" }),
            toxic: i % 3 == 0,
        })
        .collect();
    let oracle = MockBackend::with_responder(|p| {
        Ok(if target_text(p).contains("BADWORD") {
            "yes".into()
        } else {
            "no".into()
        })
    });
    let report = f1_benchmark(&oracle_set, &oracle, &fast_cfg()).unwrap();
    assert_eq!(report.f1, 1.0);
    assert_eq!(report.invalid, 0);

    let balanced: Vec<BenchmarkItem> = (0..200)
        .map(|i| BenchmarkItem {
            text: format!("item {i}"),
            toxic: i < 100,
        })
        .collect();
    assert_eq!(balanced.len(), 200);
    let always_toxic = MockBackend::with_responder(|_| Ok("yes".into()));
    let report = f1_benchmark(&balanced, &always_toxic, &fast_cfg()).unwrap();
    assert_eq!(report.precision, 0.5);
    assert_eq!(report.recall, 1.0);
    assert!((report.f1 - 2.0 / 3.0).abs() < 1e-12);

    pass("09 benchmark harness");
}

/// Optional external check, not gating: point a real chat-completion backend
/// at the TextDetox English subset and compare to the reported F1.
///
/// Run with:
///   CHATOX_BENCH_URL=... CHATOX_BENCH_MODEL=... CHATOX_BENCH_DATASET=path \
///   cargo test -p chatox-cli --test acceptance -- --ignored external
#[test]
#[ignore = "requires a live model backend and the TextDetox dataset"]
fn criterion_09_external_textdetox_check() {
    let url = std::env::var("CHATOX_BENCH_URL").expect("CHATOX_BENCH_URL");
    let model = std::env::var("CHATOX_BENCH_MODEL").unwrap_or_else(|_| "phi4".into());
    let dataset_path = std::env::var("CHATOX_BENCH_DATASET").expect("CHATOX_BENCH_DATASET");
    let dataset =
        chatox_core::analysis::benchmark::load_benchmark_dataset(Path::new(&dataset_path))
            .unwrap();
    let backend = chatox_core::classify::HttpBackend::new(
        url,
        model,
        std::env::var("BACKEND_API_KEY").ok(),
        0.0,
        Duration::from_secs(60),
    )
    .unwrap();
    let report = f1_benchmark(&dataset, &backend, &fast_cfg()).unwrap();
    println!("external TextDetox F1: {:.4}", report.f1);
    assert!((report.f1 - 0.945).abs() <= 0.02);
}

// ---------------------------------------------------------------------------
// Criterion 10: full-run determinism with the replay backend
// ---------------------------------------------------------------------------

/// Deterministic message mix for one determinism-run dump file.
fn determinism_lines(rng: &mut ChaCha8Rng) -> Vec<(String, String)> {
    (0..40)
        .map(|i| {
            let roll: f64 = rng.gen();
            let text = if roll < 0.1 {
                "gg".to_string()
            } else if roll < 0.3 {
                format!("plant:toxic:bullying:profanity line{i}")
            } else if roll < 0.35 {
                format!("plant:toxic:aggression:none line{i}")
            } else {
                format!("plant:nontoxic line{i}")
            };
            (format!("u{i}"), text)
        })
        .collect()
}

/// Writes the dump files and manifest for a determinism run into `base`.
fn write_determinism_inputs(base: &Path) {
    std::fs::create_dir_all(base).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut manifest = String::new();
    for (idx, game) in ["Dota 2", "Dota 2", "Valorant", "Valorant"].iter().enumerate() {
        let lines = determinism_lines(&mut rng);
        let file = format!("dump{idx}.json");
        write_dump_file(&base.join(&file), &format!("v{idx}"), game, &lines);
        manifest.push_str(&format!(
            "{{\"path\": \"{file}\", \"streamer\": \"st{idx}\", \"game\": \"{game}\"}}\n"
        ));
    }
    std::fs::write(base.join("manifest.jsonl"), manifest).unwrap();
}

fn write_dump_file(path: &Path, video_id: &str, game: &str, lines: &[(String, String)]) {
    let comments: Vec<String> = lines
        .iter()
        .enumerate()
        .map(|(i, (user, text))| {
            format!(
                r#"{{"content_offset_seconds": {}, "commenter": {{"display_name": "{user}"}}, "message": {{"body": "{text}"}}}}"#,
                i as f64 * 2.0
            )
        })
        .collect();
    std::fs::write(
        path,
        format!(
            r#"{{"streamer": {{"name": "s"}}, "video": {{"id": "{video_id}", "game": "{game}", "length": 600.0}}, "comments": [{}]}}"#,
            comments.join(",")
        ),
    )
    .unwrap();
}

/// Builds one self-contained run directory: dumps, manifest, config, and the
/// shared replay log (copied in), then runs the whole pipeline through the
/// CLI command functions.
fn full_pipeline_run(base: &Path, replay_log: &Path) -> Vec<(String, Vec<u8>)> {
    write_determinism_inputs(base);
    std::fs::copy(replay_log, base.join("requests.jsonl")).unwrap();
    std::fs::write(
        base.join("chatox.toml"),
        r#"
[backend]
kind = "replay"
replay_log = "requests.jsonl"

[stats]
n_perm = 999
seed = 42

[paths]
corpus = "runs/corpus"
store = "runs/labels.jsonl"
reports = "runs/reports"
"#,
    )
    .unwrap();

    let config = RunConfig::load(&base.join("chatox.toml")).unwrap();
    cmd_ingest(&config, &base.join("manifest.jsonl")).unwrap();
    cmd_prelabel(&config, 50).unwrap();
    cmd_classify(&config).unwrap();
    for by in [AnalyzeBy::Overall, AnalyzeBy::Game, AnalyzeBy::Genre, AnalyzeBy::Stream] {
        cmd_analyze(&config, by).unwrap();
    }
    cmd_report(&config).unwrap();

    let reports = config.reports_dir();
    let mut artifacts = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    for path in names {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name == "run_manifest.json" {
            // The manifest carries wall-clock timestamps on purpose.
            continue;
        }
        artifacts.push((name, std::fs::read(&path).unwrap()));
    }
    artifacts.push((
        "labels.jsonl".into(),
        std::fs::read(config.store_path()).unwrap(),
    ));
    artifacts.push((
        "corpus.jsonl".into(),
        std::fs::read(config.corpus_dir().join("corpus.jsonl")).unwrap(),
    ));
    artifacts
}

#[test]
fn criterion_10_replay_determinism() {
    let dir = tempfile::tempdir().unwrap();

    // Bootstrap: record the replay log by classifying the same corpus once
    // against the scripted mock. The log then answers every later run.
    let log_path = dir.path().join("requests.jsonl");
    {
        let record_dir = dir.path().join("record");
        write_determinism_inputs(&record_dir);
        std::fs::write(
            record_dir.join("chatox.toml"),
            "[paths]\ncorpus = \"runs/corpus\"\nstore = \"runs/labels.jsonl\"\nreports = \"runs/reports\"\n",
        )
        .unwrap();
        let config = RunConfig::load(&record_dir.join("chatox.toml")).unwrap();
        cmd_ingest(&config, &record_dir.join("manifest.jsonl")).unwrap();
        let corpus = chatox_core::ingest::load_saved_corpus(&config.corpus_dir()).unwrap();
        let assignment = apply_prelabels(&corpus, &PreLabelRuleSet::defaults());
        let recorder = RecordingBackend::create(planted_backend(), &log_path).unwrap();
        let mut throwaway = LabelStore::open(&record_dir.join("bootstrap-labels.jsonl")).unwrap();
        classify_corpus(&corpus, &assignment, &recorder, &mut throwaway, &fast_cfg()).unwrap();
    }

    let run1 = full_pipeline_run(&dir.path().join("run1"), &log_path);
    let run2 = full_pipeline_run(&dir.path().join("run2"), &log_path);

    assert_eq!(run1.len(), run2.len());
    let mut compared = 0;
    for ((name1, bytes1), (name2, bytes2)) in run1.iter().zip(run2.iter()) {
        assert_eq!(name1, name2);
        assert_eq!(bytes1, bytes2, "artifact {name1} differs between runs");
        compared += 1;
    }
    assert!(compared >= 10, "expected a full artifact set, got {compared}");
    let report_names: Vec<&String> = run1.iter().map(|(n, _)| n).collect();
    for expected in [
        "analysis_overall.jsonl",
        "analysis_game.jsonl",
        "analysis_genre.jsonl",
        "analysis_stream.jsonl",
        "report.txt",
        "labels.jsonl",
    ] {
        assert!(
            report_names.iter().any(|n| n.as_str() == expected),
            "missing artifact {expected}"
        );
    }

    pass("10 replay determinism");
}
