//! Cross-module scenarios: trained pools feeding aggregation, churn, and
//! size-curve machinery end to end.

use fens_core::dataset::{make_synthetic, split, SampleTable, SplitPair, SyntheticSpec};
use fens_core::ensemble::{bootstrap_curve, Aggregation, PredictionMatrix};
use fens_core::learners::{
    mlp_init, mlp_train, tree_train, MLPConfig, MLPModel, TrainedModel, TrajectoryLog, TreeConfig,
};
use fens_core::metrics::{
    accuracy, churn, compute_group_report, l1_trajectory_distance, mean_pairwise_churn,
    per_class_accuracy, select_top_bottom, trajectory_variance, ReportInputs,
};
use fens_core::rng::{derive_bundle, AblationMode, Stream};

fn graded_spec(seed: u64) -> SyntheticSpec {
    let class_count = 6;
    let noise: Vec<f64> = (0..class_count)
        .map(|c| 0.3 + 2.2 * c as f64 / (class_count - 1) as f64)
        .collect();
    SyntheticSpec {
        class_count,
        per_class_count: vec![40; class_count],
        per_class_noise: noise,
        feature_dim: 5,
        cluster_separation: 3.0,
        seed,
    }
}

fn quick_mlp(dim: usize, classes: usize) -> MLPConfig {
    MLPConfig {
        layer_sizes: vec![dim, 16, classes],
        epochs: 12,
        batch_size: 32,
        ..MLPConfig::with_dims(dim, classes)
    }
}

fn train_pool(
    pair: &SplitPair,
    config: &MLPConfig,
    pool_size: usize,
    mode: AblationMode,
    seed: u64,
) -> (Vec<MLPModel>, Vec<TrajectoryLog>) {
    let mut models = Vec::with_capacity(pool_size);
    let mut logs = Vec::with_capacity(pool_size);
    for member in 0..pool_size {
        let bundle = derive_bundle(seed, member, mode);
        let model = mlp_init(config, &mut bundle.init_stream()).expect("init");
        let (model, log) = mlp_train(
            model,
            &pair.train,
            &pair.test,
            &mut bundle.batch_order_stream(),
            &mut bundle.augmentation_stream(),
        )
        .expect("train");
        models.push(model);
        logs.push(log);
    }
    (models, logs)
}

fn pool_matrix(models: &[MLPModel], test: &SampleTable) -> PredictionMatrix {
    let predictions: Vec<_> = models
        .iter()
        .map(|m| TrainedModel::Mlp(m.clone()).predict(test).expect("predict"))
        .collect();
    let ids = (0..models.len()).map(|i| format!("member_{i}")).collect();
    PredictionMatrix::from_predictions(&predictions, ids, models[0].class_count()).expect("matrix")
}

#[test]
fn sampled_pair_churn_matches_the_exhaustive_mean() {
    let mut gen = Stream::new(90);
    for &m in &[2usize, 3, 4, 5] {
        for &n in &[1usize, 7, 50] {
            let c = 4;
            let labels: Vec<Vec<usize>> = (0..m)
                .map(|_| (0..n).map(|_| gen.next_index(c)).collect())
                .collect();
            let ids = (0..m).map(|i| format!("m{i}")).collect();
            let matrix = PredictionMatrix::new(labels.clone(), None, ids, c).unwrap();

            let mut total = 0.0;
            let mut pairs = 0usize;
            for a in 0..m {
                for b in (a + 1)..m {
                    total += churn(&labels[a], &labels[b]).unwrap();
                    pairs += 1;
                }
            }
            let oracle = total / pairs as f64;
            // Asking for at least as many pairs as exist must evaluate all
            // of them, so the mean is exact.
            let got = mean_pairwise_churn(&matrix, pairs, 7, None).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-12,
                "M={m} N={n}: {got} vs {oracle}"
            );
            let more = mean_pairwise_churn(&matrix, pairs + 10, 99, None).unwrap();
            assert!((more - oracle).abs() <= 1e-12, "over-asking changed the mean");
        }
    }
}

#[test]
fn frozen_variation_pool_collapses_to_the_base_member() {
    let spec = SyntheticSpec {
        class_count: 3,
        per_class_count: vec![14; 3],
        per_class_noise: vec![1.2; 3],
        feature_dim: 3,
        cluster_separation: 2.0,
        seed: 11,
    };
    let table = make_synthetic(&spec).unwrap();
    let pair = split(&table, 0.25, 5).unwrap();
    let config = quick_mlp(3, 3);
    let (models, logs) = train_pool(&pair, &config, 3, AblationMode::None, 21);

    for m in &models[1..] {
        assert_eq!(m.flat_params(), models[0].flat_params(), "members must be clones");
    }
    let matrix = pool_matrix(&models, &pair.test);
    assert_eq!(mean_pairwise_churn(&matrix, 3, 7, None).unwrap(), 0.0);
    assert_eq!(l1_trajectory_distance(&logs).unwrap(), 0.0);
    assert_eq!(trajectory_variance(&logs).unwrap(), 0.0);

    let base_acc = accuracy(matrix.member_labels(0).unwrap(), pair.test.labels()).unwrap();
    let curve = bootstrap_curve(
        &matrix,
        pair.test.labels(),
        0,
        &[1, 2, 3],
        25,
        17,
        None,
        Aggregation::Vote,
    )
    .unwrap();
    for (i, &size) in curve.sizes.iter().enumerate() {
        assert_eq!(curve.mean_acc[i], base_acc, "size {size}");
        assert_eq!(curve.std_acc[i], 0.0, "size {size}");
    }
}

#[test]
fn graded_noise_orders_base_accuracy_by_class() {
    let table = make_synthetic(&graded_spec(31)).unwrap();
    let pair = split(&table, 0.25, 31).unwrap();
    let config = quick_mlp(5, 6);
    let (models, _) = train_pool(&pair, &config, 1, AblationMode::AllSources, 31);
    let labels = models[0].predict_labels(pair.test.features()).unwrap();
    let per_class = per_class_accuracy(&labels, pair.test.labels(), 6).unwrap();
    let acc: Vec<f64> = per_class.iter().map(|a| a.expect("class present")).collect();

    let quiet = (acc[0] + acc[1]) / 2.0;
    let noisy = (acc[4] + acc[5]) / 2.0;
    assert!(
        quiet > noisy,
        "quiet classes {quiet:.3} should beat noisy classes {noisy:.3}"
    );
}

#[test]
fn group_report_flows_from_a_trained_pool() {
    let table = make_synthetic(&graded_spec(47)).unwrap();
    let pair = split(&table, 0.25, 47).unwrap();
    let config = quick_mlp(5, 6);
    let (models, _) = train_pool(&pair, &config, 5, AblationMode::AllSources, 47);
    let matrix = pool_matrix(&models, &pair.test);

    let base_labels = matrix.member_labels(0).unwrap();
    let per_class = per_class_accuracy(base_labels, pair.test.labels(), 6).unwrap();
    let groups = select_top_bottom(&per_class, 2).unwrap();
    let report = compute_group_report(ReportInputs {
        matrix: &matrix,
        truth: pair.test.labels(),
        base_member: 0,
        groups: &groups,
        n_pairs: 10,
        seed: 3,
        aggregation: Aggregation::Vote,
    })
    .unwrap();

    assert!(report.top_acc >= report.bottom_acc, "top group is easier by selection");
    for v in [
        report.mean_acc,
        report.top_acc,
        report.bottom_acc,
        report.relative_gain_top,
        report.relative_gain_bottom,
        report.churn_top,
        report.churn_bottom,
    ] {
        assert!(v.is_finite());
    }
    assert!(report.acc_difference.abs() <= 1.0);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 2, "header plus one row");
}

#[test]
fn member_zero_is_identical_across_ablation_modes() {
    let spec = SyntheticSpec {
        class_count: 3,
        per_class_count: vec![12; 3],
        per_class_noise: vec![0.8; 3],
        feature_dim: 3,
        cluster_separation: 2.5,
        seed: 8,
    };
    let table = make_synthetic(&spec).unwrap();
    let pair = split(&table, 0.25, 8).unwrap();
    let config = quick_mlp(3, 3);

    let reference = train_pool(&pair, &config, 1, AblationMode::AllSources, 13).0;
    for mode in AblationMode::all() {
        let (models, _) = train_pool(&pair, &config, 1, mode, 13);
        assert_eq!(
            models[0].flat_params(),
            reference[0].flat_params(),
            "mode {}",
            mode.name()
        );
    }
}

#[test]
fn distinct_members_disagree_somewhere() {
    let table = make_synthetic(&graded_spec(59)).unwrap();
    let pair = split(&table, 0.25, 59).unwrap();
    let config = quick_mlp(5, 6);
    let (models, _) = train_pool(&pair, &config, 2, AblationMode::AllSources, 59);
    let a = models[0].predict_labels(pair.test.features()).unwrap();
    let b = models[1].predict_labels(pair.test.features()).unwrap();
    assert!(churn(&a, &b).unwrap() > 0.0, "independent members never split");
}

#[test]
fn trained_models_round_trip_through_bytes() {
    let spec = SyntheticSpec {
        class_count: 3,
        per_class_count: vec![12; 3],
        per_class_noise: vec![0.9; 3],
        feature_dim: 4,
        cluster_separation: 2.0,
        seed: 27,
    };
    let table = make_synthetic(&spec).unwrap();
    let pair = split(&table, 0.25, 27).unwrap();

    let config = quick_mlp(4, 3);
    let (models, _) = train_pool(&pair, &config, 1, AblationMode::AllSources, 27);
    let mlp = TrainedModel::Mlp(models[0].clone());
    let bytes = mlp.to_bytes();
    let back = TrainedModel::from_bytes(&bytes).unwrap();
    assert_eq!(
        back.predict(&pair.test).unwrap().labels,
        mlp.predict(&pair.test).unwrap().labels
    );

    let tree = tree_train(&pair.train, &TreeConfig::default(), &mut Stream::new(40)).unwrap();
    let tree = TrainedModel::Tree(tree);
    let bytes = tree.to_bytes();
    let back = TrainedModel::from_bytes(&bytes).unwrap();
    assert_eq!(
        back.predict(&pair.test).unwrap().labels,
        tree.predict(&pair.test).unwrap().labels
    );
}
