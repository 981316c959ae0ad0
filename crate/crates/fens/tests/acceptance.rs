//! Acceptance gate: one test per shipping criterion. Each test prints a
//! `[PASS]` line with the measured values (visible with --nocapture); the
//! reference pools are trained once and shared across criteria.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::LazyLock;

use ndarray::Array2;

use fens_core::corruption::{severity_sweep, CorruptionKind, SweepSettings};
use fens_core::dataset::{make_synthetic, split, SampleTable, SplitPair, SyntheticSpec};
use fens_core::ensemble::{
    aggregate_vote, bootstrap_curve, bootstrap_curve_exact, Aggregation, PredictionMatrix,
    SizeCurve,
};
use fens_core::learners::{
    mlp_gradient_check, mlp_init, mlp_train, tree_train, MLPConfig, Prediction, TrainedModel,
    TrajectoryLog, TreeConfig,
};
use fens_core::metrics::{
    accuracy, compute_group_report, l1_trajectory_distance, mean_pairwise_churn, pearson,
    per_class_accuracy, relative_gain, select_top_bottom, subset_accuracy, trajectory_variance,
    GroupReport, GroupSpec, ReportInputs,
};
use fens_core::rng::{derive_bundle, mix, tags, AblationMode, Stream};

const REFERENCE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SIZES: [usize; 6] = [1, 2, 5, 10, 15, 20];
const POOL: usize = 20;
/// Group size: 4 of 20 classes, matching the 10..20% proportion the class
/// groups are meant to isolate.
const K: usize = 4;
const N_PAIRS: usize = 100;
const N_SAMPLES: usize = 100;

/// Seed of the one fixed table every reference seed shares. The seed sweep
/// varies training stochasticity and bootstrap draws on that table, so
/// seed-to-seed spread reflects the pool, not dataset geometry.
const TABLE_SEED: u64 = 2;

/// Twenty-class table with graded per-class noise and a rare noisy half.
/// Rarity keeps the noisy half's boundaries under-determined, so they
/// genuinely depend on the training stochasticity the pool varies, while
/// their clusters stay tight enough that input corruption still bites.
fn reference_spec() -> SyntheticSpec {
    let class_count = 20;
    let half = class_count / 2;
    SyntheticSpec {
        class_count,
        per_class_count: (0..class_count)
            .map(|c| if c < half { 120 } else { 36 })
            .collect(),
        per_class_noise: (0..class_count)
            .map(|c| {
                if c < half {
                    0.2 + 0.8 * c as f64 / (half - 1) as f64
                } else {
                    1.4 + 0.4 * (c - half) as f64 / (half - 1) as f64
                }
            })
            .collect(),
        feature_dim: 12,
        cluster_separation: 2.2,
        seed: mix(TABLE_SEED, tags::DATASET, 0),
    }
}

struct Reference {
    seed: u64,
    pair: SplitPair,
    matrix: PredictionMatrix,
    models: Vec<TrainedModel>,
    groups: GroupSpec,
    report: GroupReport,
    curve: SizeCurve,
    base_top: f64,
    base_bottom: f64,
}

fn build_reference(seed: u64) -> Reference {
    let table = make_synthetic(&reference_spec()).expect("reference table");
    let pair = split(&table, 0.50, TABLE_SEED).expect("reference split");
    let config = MLPConfig::with_dims(pair.train.dim(), pair.train.class_count());

    let mut predictions = Vec::with_capacity(POOL);
    let mut models = Vec::with_capacity(POOL);
    for member in 0..POOL {
        let bundle = derive_bundle(seed, member, AblationMode::AllSources);
        let model = mlp_init(&config, &mut bundle.init_stream()).expect("init");
        let (model, _) = mlp_train(
            model,
            &pair.train,
            &pair.test,
            &mut bundle.batch_order_stream(),
            &mut bundle.augmentation_stream(),
        )
        .expect("train");
        let labels = model.predict_labels(pair.test.features()).expect("predict");
        predictions.push(Prediction {
            labels,
            scores: None,
        });
        models.push(TrainedModel::Mlp(model));
    }
    let ids = (0..POOL).map(|i| format!("member_{i}")).collect();
    let matrix = PredictionMatrix::from_predictions(&predictions, ids, pair.test.class_count())
        .expect("matrix");

    let truth = pair.test.labels();
    let base = matrix.member_labels(0).expect("base");
    let per_class =
        per_class_accuracy(base, truth, pair.test.class_count()).expect("per-class accuracy");
    let groups = select_top_bottom(&per_class, K).expect("groups");
    let subsets = groups.example_subsets(truth).expect("subsets");
    let base_top = subset_accuracy(base, truth, &subsets[0].1).expect("base top");
    let base_bottom = subset_accuracy(base, truth, &subsets[1].1).expect("base bottom");

    let report = compute_group_report(ReportInputs {
        matrix: &matrix,
        truth,
        base_member: 0,
        groups: &groups,
        n_pairs: N_PAIRS,
        seed,
        aggregation: Aggregation::Vote,
    })
    .expect("group report");
    let curve = bootstrap_curve(
        &matrix,
        truth,
        0,
        &SIZES,
        N_SAMPLES,
        seed,
        Some(&groups),
        Aggregation::Vote,
    )
    .expect("size curve");

    Reference {
        seed,
        pair,
        matrix,
        models,
        groups,
        report,
        curve,
        base_top,
        base_bottom,
    }
}

static REFERENCE: LazyLock<Vec<Reference>> =
    LazyLock::new(|| REFERENCE_SEEDS.iter().map(|&s| build_reference(s)).collect());

fn group_track<'a>(curve: &'a SizeCurve, name: &str) -> &'a [f64] {
    &curve
        .groups
        .iter()
        .find(|g| g.name == name)
        .unwrap_or_else(|| panic!("curve lacks group {name}"))
        .mean
}

fn size_index(size: usize) -> usize {
    SIZES.iter().position(|&s| s == size).expect("known size")
}

#[test]
fn a01_pairwise_churn_matches_the_exhaustive_oracle() {
    let mut gen = Stream::new(0xA1);
    let mut worst = 0.0f64;
    for m in 2usize..=5 {
        for n in 1usize..=50 {
            let c = 6;
            let labels: Vec<Vec<usize>> = (0..m)
                .map(|_| (0..n).map(|_| gen.next_index(c)).collect())
                .collect();
            let ids = (0..m).map(|i| format!("m{i}")).collect();
            let matrix = PredictionMatrix::new(labels.clone(), None, ids, c).unwrap();

            let mut total = 0.0;
            let mut pairs = 0usize;
            for a in 0..m {
                for b in (a + 1)..m {
                    let differ = labels[a]
                        .iter()
                        .zip(&labels[b])
                        .filter(|(x, y)| x != y)
                        .count();
                    total += differ as f64 / n as f64;
                    pairs += 1;
                }
            }
            let oracle = total / pairs as f64;
            let got = mean_pairwise_churn(&matrix, pairs, 11, None).unwrap();
            worst = worst.max((got - oracle).abs());
        }
    }
    assert!(worst <= 1e-12, "worst deviation {worst:e}");
    println!("[PASS] 01 churn oracle: max |sampled - exhaustive| = {worst:.2e} over M <= 5, N <= 50");
}

#[test]
fn a02_gradient_check_on_the_probe_network() {
    let config = MLPConfig {
        layer_sizes: vec![2, 4, 3],
        ..MLPConfig::with_dims(2, 3)
    };
    let mut gen = Stream::new(0xA2);
    let features =
        Array2::from_shape_fn((4, 2), |_| gen.next_normal());
    let labels = vec![0, 1, 2, 1];
    let report =
        mlp_gradient_check(&config, &features, &labels, &mut Stream::new(0xA2B)).unwrap();
    assert!(
        report.max_relative_error < 1e-5,
        "max relative error {:e}",
        report.max_relative_error
    );
    println!(
        "[PASS] 02 gradient check: max relative error {:.2e} on the [2,4,3] probe",
        report.max_relative_error
    );
}

#[test]
fn a03_frozen_randomness_collapses_every_diversity_metric() {
    let spec = SyntheticSpec {
        class_count: 3,
        per_class_count: vec![30; 3],
        per_class_noise: vec![1.0; 3],
        feature_dim: 4,
        cluster_separation: 2.5,
        seed: 0xA3,
    };
    let table = make_synthetic(&spec).unwrap();
    let pair = split(&table, 0.25, 3).unwrap();
    let config = MLPConfig {
        layer_sizes: vec![4, 16, 3],
        epochs: 10,
        batch_size: 32,
        ..MLPConfig::with_dims(4, 3)
    };

    let mut predictions = Vec::new();
    let mut logs: Vec<TrajectoryLog> = Vec::new();
    for member in 0..5 {
        let bundle = derive_bundle(9, member, AblationMode::None);
        let model = mlp_init(&config, &mut bundle.init_stream()).unwrap();
        let (model, log) = mlp_train(
            model,
            &pair.train,
            &pair.test,
            &mut bundle.batch_order_stream(),
            &mut bundle.augmentation_stream(),
        )
        .unwrap();
        predictions.push(Prediction {
            labels: model.predict_labels(pair.test.features()).unwrap(),
            scores: None,
        });
        logs.push(log);
    }
    let ids = (0..5).map(|i| format!("member_{i}")).collect();
    let matrix = PredictionMatrix::from_predictions(&predictions, ids, 3).unwrap();
    let truth = pair.test.labels();

    let churn = mean_pairwise_churn(&matrix, N_PAIRS, 5, None).unwrap();
    let l1 = l1_trajectory_distance(&logs).unwrap();
    let variance = trajectory_variance(&logs).unwrap();
    assert_eq!(churn, 0.0, "churn must vanish exactly");
    assert_eq!(l1, 0.0, "trajectory distance must vanish exactly");
    assert_eq!(variance, 0.0, "trajectory variance must vanish exactly");

    let base_acc = accuracy(matrix.member_labels(0).unwrap(), truth).unwrap();
    let curve = bootstrap_curve(
        &matrix,
        truth,
        0,
        &[1, 2, 3, 4, 5],
        40,
        8,
        None,
        Aggregation::Vote,
    )
    .unwrap();
    for (i, &size) in curve.sizes.iter().enumerate() {
        assert_eq!(curve.mean_acc[i], base_acc, "mean at size {size}");
        assert_eq!(curve.std_acc[i], 0.0, "std at size {size}");
    }
    println!(
        "[PASS] 03 zero-diversity collapse: churn 0, trajectory metrics 0, \
         ensemble accuracy pinned to base {base_acc} at all 5 sizes"
    );
}

#[test]
fn a04_bottom_group_gains_more_than_the_top_group() {
    let mut wins = 0;
    let mut detail = String::new();
    for r in REFERENCE.iter() {
        let ok = r.report.relative_gain_bottom > r.report.relative_gain_top
            && r.report.relative_gain_bottom >= 1.05;
        if ok {
            wins += 1;
        }
        detail.push_str(&format!(
            " seed {}: bottom {:.3} ({:.3}->{:.3}) top {:.3}{}",
            r.seed,
            r.report.relative_gain_bottom,
            r.base_bottom,
            r.report.bottom_acc,
            r.report.relative_gain_top,
            if ok { "" } else { " (miss)" }
        ));
    }
    assert!(wins >= 4, "only {wins}/5 seeds satisfied the ordering:{detail}");
    println!("[PASS] 04 fairness ordering: {wins}/5 seeds;{detail}");
}

#[test]
fn a05_bottom_group_churns_at_least_one_point_five_times_more() {
    let mut wins = 0;
    let mut detail = String::new();
    for r in REFERENCE.iter() {
        let ok = r.report.churn_bottom >= 1.5 * r.report.churn_top;
        if ok {
            wins += 1;
        }
        detail.push_str(&format!(
            " seed {}: bottom {:.3} top {:.3}{}",
            r.seed,
            r.report.churn_bottom,
            r.report.churn_top,
            if ok { "" } else { " (miss)" }
        ));
    }
    assert!(wins >= 4, "only {wins}/5 seeds had the churn gap:{detail}");
    println!("[PASS] 05 churn gap: {wins}/5 seeds;{detail}");
}

#[test]
fn a06_churn_correlates_with_relative_improvement() {
    let mut churns = Vec::new();
    let mut gains = Vec::new();
    for r in REFERENCE.iter() {
        churns.push(r.report.churn_top);
        gains.push(r.report.relative_gain_top);
        churns.push(r.report.churn_bottom);
        gains.push(r.report.relative_gain_bottom);
    }
    assert!(churns.len() >= 8, "need at least 8 points, have {}", churns.len());
    let r = pearson(&churns, &gains).unwrap();
    assert!(r >= 0.5, "Pearson r = {r:.3} over {} points", churns.len());
    println!(
        "[PASS] 06 churn-improvement correlation: r = {r:.3} over {} (config, group) points",
        churns.len()
    );
}

#[test]
fn a07_top_group_plateaus_faster_along_the_size_curve() {
    let (i5, i20) = (size_index(5), size_index(20));
    let mut wins = 0;
    let mut detail = String::new();
    for r in REFERENCE.iter() {
        let top = group_track(&r.curve, "top");
        let bottom = group_track(&r.curve, "bottom");
        let top_rise = top[i20] / r.base_top - top[i5] / r.base_top;
        let bottom_rise = bottom[i20] / r.base_bottom - bottom[i5] / r.base_bottom;
        let ok = top_rise < bottom_rise;
        if ok {
            wins += 1;
        }
        detail.push_str(&format!(
            " seed {}: top {:+.4} bottom {:+.4}{}",
            r.seed,
            top_rise,
            bottom_rise,
            if ok { "" } else { " (miss)" }
        ));
    }
    assert!(wins >= 4, "only {wins}/5 seeds plateaued correctly:{detail}");
    println!("[PASS] 07 plateau shape: {wins}/5 seeds;{detail}");
}

#[test]
fn a08_corruption_widens_the_bottom_group_gain() {
    let i20 = size_index(20);
    let mut wins = 0;
    let mut detail = String::new();
    for r in REFERENCE.iter() {
        let settings = SweepSettings {
            sizes: &SIZES,
            base_member: 0,
            n_samples: N_SAMPLES,
            bootstrap_seed: r.seed,
            corruption_seed: r.seed,
            groups: Some(&r.groups),
            aggregation: Aggregation::Vote,
        };
        let ids = r.matrix.member_ids().to_vec();
        let cells = severity_sweep(
            |table| {
                let predictions: Vec<Prediction> = r
                    .models
                    .iter()
                    .map(|m| m.predict(table))
                    .collect::<fens_core::Result<_>>()?;
                PredictionMatrix::from_predictions(&predictions, ids.clone(), 20)
            },
            &r.pair.test,
            &CorruptionKind::all(),
            &settings,
        )
        .unwrap();

        let clean = cells
            .iter()
            .find(|c| c.severity == 0)
            .expect("severity-0 cell");
        assert_eq!(
            clean.curve, r.curve,
            "seed {}: severity-0 alias must bit-equal the uncorrupted curve",
            r.seed
        );

        let bottom_pair = |severity: u8| -> (f64, f64) {
            let cell = cells
                .iter()
                .find(|c| c.severity == severity && c.kind == "mean")
                .expect("mean cell");
            let base = cell
                .base_group_acc
                .iter()
                .find(|(name, _)| name == "bottom")
                .expect("bottom base accuracy")
                .1;
            (base, group_track(&cell.curve, "bottom")[i20])
        };
        let bottom_gain = |severity: u8| -> f64 {
            let (base, ens) = bottom_pair(severity);
            relative_gain(ens, base).unwrap()
        };
        let (g1, g5) = (bottom_gain(1), bottom_gain(5));
        let ok = g5 >= g1;
        if ok {
            wins += 1;
        }
        detail.push_str(&format!(
            " seed {}: sev1 {:.3} sev5 {:.3}{}",
            r.seed,
            g1,
            g5,
            if ok { "" } else { " (miss)" }
        ));
    }
    assert!(wins >= 4, "only {wins}/5 seeds ordered the severities:{detail}");
    println!("[PASS] 08 severity ordering: {wins}/5 seeds; clean alias bit-equal on all 5;{detail}");
}

#[test]
fn a09_bootstrap_mean_matches_exact_pair_enumeration() {
    let (m, n, c) = (4usize, 60usize, 3usize);
    let mut gen = Stream::new(0xA9);
    let labels: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..n).map(|_| gen.next_index(c)).collect())
        .collect();
    let truth: Vec<usize> = (0..n).map(|_| gen.next_index(c)).collect();
    let ids = (0..m).map(|i| format!("m{i}")).collect();
    let matrix = PredictionMatrix::new(labels.clone(), None, ids, c).unwrap();

    // Exact oracle: a size-1 draw picks member j, the base joins, and a
    // two-way tie goes to the lower class label.
    let mut accs = Vec::with_capacity(m);
    for j in 0..m {
        let mut hits = 0usize;
        for i in 0..n {
            let (a, b) = (labels[0][i], labels[j][i]);
            let vote = if a == b { a } else { a.min(b) };
            if vote == truth[i] {
                hits += 1;
            }
        }
        accs.push(hits as f64 / n as f64);
    }
    let exact_mean = accs.iter().sum::<f64>() / m as f64;
    let exact_var = accs.iter().map(|a| (a - exact_mean).powi(2)).sum::<f64>() / m as f64;
    let standard_error = (exact_var / N_SAMPLES as f64).sqrt();

    let sampled = bootstrap_curve(
        &matrix,
        &truth,
        0,
        &[1],
        N_SAMPLES,
        21,
        None,
        Aggregation::Vote,
    )
    .unwrap();
    let deviation = (sampled.mean_acc[0] - exact_mean).abs();
    assert!(
        deviation <= 3.0 * standard_error + 1e-15,
        "sampled {} vs exact {exact_mean}, {deviation:e} > 3 x {standard_error:e}",
        sampled.mean_acc[0]
    );

    let enumerated = bootstrap_curve_exact(
        std::slice::from_ref(&matrix),
        &truth,
        0,
        &[1],
        None,
        Aggregation::Vote,
    )
    .unwrap();
    let exact_dev = (enumerated.mean_acc[0] - exact_mean).abs();
    assert!(exact_dev <= 1e-12, "enumeration off by {exact_dev:e}");
    assert_eq!(enumerated.samples_per_size, 0, "marker for enumeration mode");
    println!(
        "[PASS] 09 bootstrap oracle: sampled within {:.2} standard errors, enumeration within {exact_dev:.1e}",
        if standard_error > 0.0 { deviation / standard_error } else { 0.0 }
    );
}

/// One stratum of the subgroup table: `rows` rows sharing a label and a
/// subgroup membership.
struct Stratum {
    rows: usize,
    label: usize,
    minority: bool,
}

/// Binary table with a 6% minority subgroup. Ten feature columns carry the
/// label for everyone, flipped on an exact per-stratum row count (about 3%
/// of majority rows, about 30% of minority rows); the remaining columns are
/// balanced noise. Identical flip counts give the informative columns
/// identical root impurity, so each tree's feature permutation picks a
/// genuinely different split order and the flips it inherits decorrelate
/// across the pool.
fn subgroup_table(strata: &[Stratum], flips_of: impl Fn(&Stratum) -> usize, seed: u64) -> SampleTable {
    const DIM: usize = 12;
    const INFORMATIVE: usize = 10;
    let n: usize = strata.iter().map(|s| s.rows).sum();
    let mut stream = Stream::new(seed);
    let mut features = Array2::zeros((n, DIM));
    let mut labels = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut row0 = 0;
    for s in strata {
        for _ in 0..s.rows {
            labels.push(s.label);
            group.push(u32::from(s.minority));
        }
        for col in 0..DIM {
            let picked = stream.permutation(s.rows);
            let count = if col < INFORMATIVE { flips_of(s) } else { s.rows / 2 };
            let mut bits = vec![if col < INFORMATIVE { s.label } else { 0 }; s.rows];
            for &r in &picked[..count] {
                bits[r] = 1 - bits[r];
            }
            for (r, &bit) in bits.iter().enumerate() {
                features[(row0 + r, col)] = bit as f64;
            }
        }
        row0 += s.rows;
    }
    let names = (0..DIM).map(|j| format!("f{j}")).collect();
    SampleTable::new(
        features,
        labels,
        2,
        names,
        BTreeMap::from([(String::from("group"), group)]),
    )
    .unwrap()
}

/// Train and test tables for the imbalanced-attribute tree experiment.
/// Minority prevalence is exactly 6% overall (96 of 1600 rows).
fn subgroup_tables(seed: u64) -> (SampleTable, SampleTable) {
    let strata = |maj: usize, min: usize| {
        [
            Stratum { rows: maj, label: 0, minority: false },
            Stratum { rows: maj, label: 1, minority: false },
            Stratum { rows: min, label: 0, minority: true },
            Stratum { rows: min, label: 1, minority: true },
        ]
    };
    let flips = |maj: usize, min: usize| {
        move |s: &Stratum| if s.minority { min } else { maj }
    };
    let train = subgroup_table(
        &strata(282, 18),
        flips(9, 6),
        mix(seed, tags::DATASET, 1),
    );
    let test = subgroup_table(
        &strata(470, 30),
        flips(14, 8),
        mix(seed, tags::DATASET, 2),
    );
    (train, test)
}

#[test]
fn a10_tree_ensemble_lifts_the_minority_subgroup() {
    let mut wins = 0;
    let mut detail = String::new();
    for &seed in &REFERENCE_SEEDS {
        let (train, test) = subgroup_tables(seed);
        let config = TreeConfig { max_depth: 3, min_leaf: 1 };

        let mut predictions = Vec::new();
        for member in 0..10 {
            let bundle = derive_bundle(seed, member, AblationMode::AllSources);
            let model = tree_train(&train, &config, &mut bundle.init_stream()).unwrap();
            predictions.push(Prediction {
                labels: model.predict_labels(test.features()).unwrap(),
                scores: None,
            });
        }
        let ids = (0..10).map(|i| format!("member_{i}")).collect();
        let matrix = PredictionMatrix::from_predictions(&predictions, ids, 2).unwrap();
        let vote = aggregate_vote(&matrix, &(0..10).collect::<Vec<_>>()).unwrap();

        let truth = test.labels();
        let base = matrix.member_labels(0).unwrap();
        let minority_rows = test.subgroup_indices("group", 1).unwrap();
        let majority_rows = test.subgroup_indices("group", 0).unwrap();
        let base_minority = subset_accuracy(base, truth, &minority_rows).unwrap();
        let ensemble_minority = subset_accuracy(&vote, truth, &minority_rows).unwrap();
        let base_majority = subset_accuracy(base, truth, &majority_rows).unwrap();
        let ensemble_majority = subset_accuracy(&vote, truth, &majority_rows).unwrap();
        let gain_minority = relative_gain(ensemble_minority, base_minority).unwrap();
        let gain_majority = relative_gain(ensemble_majority, base_majority).unwrap();

        let ok = ensemble_minority >= base_minority && gain_minority >= gain_majority;
        if ok {
            wins += 1;
        }
        detail.push_str(&format!(
            " seed {seed}: minority {:.3}->{:.3} gain {:.3} vs majority gain {:.3}{}",
            base_minority,
            ensemble_minority,
            gain_minority,
            gain_majority,
            if ok { "" } else { " (miss)" }
        ));
    }
    assert!(wins >= 4, "only {wins}/5 seeds lifted the minority:{detail}");
    println!("[PASS] 10 tree subgroup improvement: {wins}/5 seeds;{detail}");
}

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1

[dataset]
kind = "synthetic"
class_count = 4
per_class_count = 30
noise_start = 0.3
noise_end = 1.5
feature_dim = 4
cluster_separation = 3.0

[learner]
kind = "mlp"
hidden = [8]
epochs = 6
batch_size = 32

[experiment]
pool_size = 4
modes = ["all_sources", "init"]
k = 1
sizes = [1, 2, 4]
n_samples = 30
n_pairs = 20
seed = 7
corruption_sweep = true
"#;

#[test]
fn a11_cold_runs_emit_byte_identical_metric_csvs() {
    let root = std::env::temp_dir().join(format!("fens-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let config = root.join("config.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();

    let snapshot = |out: &PathBuf| -> BTreeMap<String, Vec<u8>> {
        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(out).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            if name.ends_with(".csv") {
                files.insert(name, std::fs::read(&path).unwrap());
            }
        }
        files
    };

    let mut snapshots = Vec::new();
    for tag in ["cold_a", "cold_b"] {
        let out = root.join(tag);
        let output = Command::new(env!("CARGO_BIN_EXE_fens"))
            .args([
                "run",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env_remove("FENS_OUT")
            .output()
            .expect("binary runs");
        assert_eq!(
            output.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        snapshots.push(snapshot(&out));
    }
    let files = snapshots[0].len();
    assert!(files >= 6, "only {files} csv files emitted");
    assert_eq!(snapshots[0], snapshots[1], "cold runs must agree byte for byte");
    let _ = std::fs::remove_dir_all(&root);
    println!("[PASS] 11 determinism: two cold runs agree on all {files} csv files");
}
