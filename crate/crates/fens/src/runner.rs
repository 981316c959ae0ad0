//! Experiment driver: materializes the dataset, ensures member pools per
//! ablation mode (training only what the cache lacks), computes groups,
//! and writes every report CSV plus the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use fens_core::corruption::{severity_sweep, sweep_to_csv, CorruptionKind, SweepSettings};
use fens_core::dataset::{load_csv, make_synthetic, split, SampleTable, SplitPair};
use fens_core::ensemble::{bootstrap_curve, PredictionMatrix};
use fens_core::learners::{
    mlp_init, mlp_train, tree_train, Prediction, TrainedModel, TrajectoryLog,
};
use fens_core::metrics::{
    accuracy, accuracy_difference, compute_group_report, l1_trajectory_distance,
    mean_pairwise_churn, per_class_accuracy, select_top_bottom, trajectory_variance, GroupSpec,
    ReportInputs,
};
use fens_core::rng::{derive_bundle, AblationMode};
use fens_core::{Error, Result};

use crate::cache::{self, CacheEntry, MemberArtifacts, MemberMeta};
use crate::config::{DatasetConfig, ExperimentConfig, LearnerConfig};
use crate::manifest::{MemberEntry, ModeManifest, RunManifest};
use crate::report;

/// Exit disposition of a completed command: `partial` maps to exit code 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub partial: bool,
}

/// Which pipeline stages a subcommand executes.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stages {
    /// Train cache misses; without this, a missing member is an error.
    pub train: bool,
    /// Size-curve and accuracy-difference reports.
    pub curves: bool,
    /// Group report and diversity metrics.
    pub metrics: bool,
    /// Corruption severity sweep.
    pub sweep: bool,
    /// Merge per-mode CSVs into the long-format report.
    pub long_report: bool,
    /// Write the manifest.
    pub manifest: bool,
}

impl Stages {
    pub fn train_only() -> Self {
        Stages {
            train: true,
            manifest: true,
            ..Stages::default()
        }
    }

    pub fn curves_only() -> Self {
        Stages {
            curves: true,
            ..Stages::default()
        }
    }

    pub fn metrics_only() -> Self {
        Stages {
            metrics: true,
            ..Stages::default()
        }
    }

    pub fn sweep_only() -> Self {
        Stages {
            sweep: true,
            ..Stages::default()
        }
    }

    pub fn report_only() -> Self {
        Stages {
            long_report: true,
            ..Stages::default()
        }
    }

    pub fn full(corruption_sweep: bool) -> Self {
        Stages {
            train: true,
            curves: true,
            metrics: true,
            sweep: corruption_sweep,
            long_report: true,
            manifest: true,
        }
    }
}

/// A mode's surviving pool. Matrix positions hold the ok members in
/// original index order; member 0 is always the base and sits at
/// position 0.
struct Pool {
    matrix: PredictionMatrix,
    logs: Vec<TrajectoryLog>,
    models: Vec<TrainedModel>,
    metas: Vec<MemberMeta>,
    diverged: usize,
    trained: usize,
    cached: usize,
}

/// A mode that could not produce a usable pool but should not abort the
/// whole run.
struct FailedPool {
    message: String,
    metas: Vec<MemberMeta>,
    trained: usize,
    cached: usize,
}

enum PoolOutcome {
    Ready(Pool),
    Failed(FailedPool),
}

/// Generate or load the dataset and split it; the experiment seed pins
/// both the generator and the split.
pub fn build_tables(config: &ExperimentConfig) -> Result<SplitPair> {
    let table = match &config.dataset {
        DatasetConfig::Synthetic { .. } => {
            let spec = config
                .dataset
                .synthetic_spec(config.seed)
                .expect("synthetic variant");
            make_synthetic(&spec)?
        }
        DatasetConfig::Csv {
            path,
            label_column,
            attribute_columns,
            ..
        } => {
            let columns: Vec<&str> = attribute_columns.iter().map(String::as_str).collect();
            load_csv(path, label_column, &columns)?
        }
    };
    split(&table, config.dataset.test_fraction(), config.seed)
}

/// One training episode: the member owns its streams via its seed bundle.
fn train_member(
    config: &ExperimentConfig,
    pair: &SplitPair,
    mode: AblationMode,
    index: usize,
) -> Result<MemberArtifacts> {
    let bundle = derive_bundle(config.seed, index, mode);
    match &config.learner {
        LearnerConfig::Mlp { .. } => {
            let mlp_config = config
                .learner
                .mlp_config(pair.train.dim(), pair.train.class_count())
                .expect("mlp variant");
            let model = mlp_init(&mlp_config, &mut bundle.init_stream())?;
            let (model, log) = mlp_train(
                model,
                &pair.train,
                &pair.test,
                &mut bundle.batch_order_stream(),
                &mut bundle.augmentation_stream(),
            )?;
            let labels = model.predict_labels(pair.test.features())?;
            let scores = model.scores(pair.test.features())?;
            Ok(MemberArtifacts {
                labels,
                scores: Some(scores),
                trajectory: log,
                model: TrainedModel::Mlp(model),
            })
        }
        LearnerConfig::Tree { .. } => {
            let tree_config = config.learner.tree_config().expect("tree variant");
            // Trees draw their per-node feature permutations from the
            // member-identity stream; batch-order and augmentation modes
            // leave tree pools degenerate by construction.
            let model = tree_train(&pair.train, &tree_config, &mut bundle.init_stream())?;
            let labels = model.predict_labels(pair.test.features())?;
            let acc = accuracy(&labels, pair.test.labels())?;
            Ok(MemberArtifacts {
                labels,
                scores: None,
                trajectory: TrajectoryLog {
                    test_accuracy: vec![acc],
                },
                model: TrainedModel::Tree(model),
            })
        }
    }
}

/// Ensure every member of a mode's pool exists, training misses when
/// allowed. Divergence is contained per member; losing the base member or
/// dropping below 2 survivors fails the mode.
fn assemble_pool(
    config: &ExperimentConfig,
    pair: &SplitPair,
    mode: AblationMode,
    allow_training: bool,
) -> Result<PoolOutcome> {
    let out = &config.out_dir;
    let mut entries: Vec<CacheEntry> = (0..config.pool_size)
        .map(|i| cache::load_member(out, mode, i))
        .collect();
    let missing: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e, CacheEntry::Miss))
        .map(|(i, _)| i)
        .collect();

    if !allow_training {
        if missing.len() == entries.len() {
            return Err(Error::Data(format!(
                "empty cache: no members for mode {} under {}",
                mode.name(),
                out.display()
            )));
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "cache for mode {} is missing members {missing:?}; run train first",
                mode.name()
            )));
        }
    }

    let trained = missing.len();
    let cached = entries.len() - trained;
    if trained > 0 {
        // Members train concurrently; each episode owns its streams. The
        // single writer below commits artifacts in index order.
        let fresh: Vec<(usize, Result<MemberArtifacts>)> = missing
            .par_iter()
            .map(|&i| (i, train_member(config, pair, mode, i)))
            .collect();
        for (i, result) in fresh {
            entries[i] = match result {
                Ok(artifacts) => {
                    cache::write_member(out, mode, i, &artifacts)?;
                    CacheEntry::Hit(artifacts)
                }
                Err(Error::Divergence { epoch, message }) => {
                    let msg = format!("epoch {epoch}: {message}");
                    cache::write_diverged(out, mode, i, &msg)?;
                    CacheEntry::Diverged(msg)
                }
                Err(other) => return Err(other),
            };
        }
    }

    let metas: Vec<MemberMeta> = (0..entries.len())
        .map(|i| cache::read_meta(out, mode, i))
        .collect::<Result<_>>()?;

    let mut diverged = 0usize;
    let mut base_failure = None;
    let mut ok = Vec::new();
    for (i, entry) in entries.into_iter().enumerate() {
        match entry {
            CacheEntry::Hit(artifacts) => ok.push((i, artifacts)),
            CacheEntry::Diverged(msg) => {
                diverged += 1;
                if i == 0 {
                    base_failure = Some(msg);
                }
            }
            CacheEntry::Miss => unreachable!("misses were trained or rejected above"),
        }
    }
    let failed = |message: String| {
        Ok(PoolOutcome::Failed(FailedPool {
            message,
            metas: metas.clone(),
            trained,
            cached,
        }))
    };
    if let Some(msg) = base_failure {
        return failed(format!("base member 0 diverged ({msg})"));
    }
    if ok.len() < 2 {
        return failed(format!("fewer than 2 successful members ({} ok)", ok.len()));
    }

    let member_ids: Vec<String> = ok.iter().map(|(i, _)| format!("member_{i}")).collect();
    let predictions: Vec<Prediction> = ok
        .iter()
        .map(|(_, a)| Prediction {
            labels: a.labels.clone(),
            scores: a.scores.clone(),
        })
        .collect();
    let matrix =
        PredictionMatrix::from_predictions(&predictions, member_ids, pair.test.class_count())?;
    let logs = ok.iter().map(|(_, a)| a.trajectory.clone()).collect();
    let models = ok.into_iter().map(|(_, a)| a.model).collect();
    Ok(PoolOutcome::Ready(Pool {
        matrix,
        logs,
        models,
        metas,
        diverged,
        trained,
        cached,
    }))
}

/// Majority/minority example subgroups for a binary sensitive attribute.
/// Prevalence decides which side is the majority; a tie makes the lower
/// code the majority.
fn attribute_groups(test: &SampleTable, attribute: &str) -> Result<GroupSpec> {
    let codes = test.attributes().get(attribute).ok_or_else(|| {
        Error::Schema(format!("attribute {attribute:?} not present in the dataset"))
    })?;
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &code in codes {
        *counts.entry(code).or_default() += 1;
    }
    if counts.len() != 2 {
        return Err(Error::Data(format!(
            "group_attribute {attribute:?} takes {} values in the test split, need exactly 2",
            counts.len()
        )));
    }
    let mut pairs = counts.into_iter();
    let (code_a, count_a) = pairs.next().expect("two entries");
    let (code_b, count_b) = pairs.next().expect("two entries");
    let (majority, minority) = if count_b > count_a {
        (code_b, code_a)
    } else {
        (code_a, code_b)
    };
    Ok(GroupSpec::AttributeGroup {
        name: attribute.into(),
        majority: test.subgroup_indices(attribute, majority)?,
        minority: test.subgroup_indices(attribute, minority)?,
    })
}

/// Top-k/bottom-k classes from a pool's base member.
fn groups_from_base(pool: &Pool, pair: &SplitPair, k: usize) -> Result<GroupSpec> {
    let base = pool.matrix.member_labels(0)?;
    let per_class = per_class_accuracy(base, pair.test.labels(), pair.test.class_count())?;
    select_top_bottom(&per_class, k)
}

/// Group spec per mode. With a sensitive attribute every mode shares the
/// same subgroups. Otherwise class groups come from the all_sources base
/// member when that mode is in the run, so curves stay comparable across
/// ablations; a mode running alone falls back to its own base.
fn build_groups(
    config: &ExperimentConfig,
    pair: &SplitPair,
    pools: &BTreeMap<String, Pool>,
) -> Result<BTreeMap<String, GroupSpec>> {
    let mut groups = BTreeMap::new();
    if let Some(attribute) = &config.group_attribute {
        let shared = attribute_groups(&pair.test, attribute)?;
        for name in pools.keys() {
            groups.insert(name.clone(), shared.clone());
        }
        return Ok(groups);
    }
    let shared = pools
        .get(AblationMode::AllSources.name())
        .map(|pool| groups_from_base(pool, pair, config.k))
        .transpose()?;
    for (name, pool) in pools {
        let spec = match &shared {
            Some(s) => s.clone(),
            None => groups_from_base(pool, pair, config.k)?,
        };
        groups.insert(name.clone(), spec);
    }
    Ok(groups)
}

fn write_report(
    out: &Path,
    name: String,
    text: String,
    reports: &mut BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(out.join(&name), &text)?;
    reports.insert(name, cache::digest_bytes(text.as_bytes()));
    Ok(())
}

/// Sizes still drawable after divergence shrank the pool.
fn usable_sizes(config: &ExperimentConfig, pool: &Pool) -> Result<Vec<usize>> {
    let survivors = pool.matrix.member_count();
    let sizes: Vec<usize> = config
        .sizes
        .iter()
        .copied()
        .filter(|&s| s <= survivors)
        .collect();
    if sizes.is_empty() {
        return Err(Error::Data(format!(
            "no requested size fits the {survivors} surviving members"
        )));
    }
    Ok(sizes)
}

/// Size curve plus the accuracy-difference-vs-size series derived from
/// its group tracks.
fn curve_reports(
    config: &ExperimentConfig,
    pair: &SplitPair,
    pool: &Pool,
    groups: &GroupSpec,
    mode: AblationMode,
    reports: &mut BTreeMap<String, String>,
) -> Result<()> {
    let curve = bootstrap_curve(
        &pool.matrix,
        pair.test.labels(),
        0,
        &usable_sizes(config, pool)?,
        config.n_samples,
        config.seed,
        Some(groups),
        config.aggregation,
    )?;
    let names = groups.names();
    let first = curve
        .groups
        .iter()
        .find(|g| g.name == names[0])
        .ok_or_else(|| Error::Data(format!("curve lacks group {}", names[0])))?;
    let second = curve
        .groups
        .iter()
        .find(|g| g.name == names[1])
        .ok_or_else(|| Error::Data(format!("curve lacks group {}", names[1])))?;
    let mut diff = String::from("size,acc_difference\n");
    for (i, &size) in curve.sizes.iter().enumerate() {
        let value = accuracy_difference(first.mean[i], second.mean[i])?;
        let _ = writeln!(diff, "{size},{value}");
    }
    write_report(
        &config.out_dir,
        format!("size_curve_{}.csv", mode.name()),
        curve.to_csv(),
        reports,
    )?;
    write_report(
        &config.out_dir,
        format!("acc_difference_{}.csv", mode.name()),
        diff,
        reports,
    )
}

/// Group report plus the diversity table (churn and trajectory metrics).
fn metric_reports(
    config: &ExperimentConfig,
    pair: &SplitPair,
    pool: &Pool,
    groups: &GroupSpec,
    mode: AblationMode,
    reports: &mut BTreeMap<String, String>,
) -> Result<()> {
    let report = compute_group_report(ReportInputs {
        matrix: &pool.matrix,
        truth: pair.test.labels(),
        base_member: 0,
        groups,
        n_pairs: config.n_pairs,
        seed: config.seed,
        aggregation: config.aggregation,
    })?;
    let overall = mean_pairwise_churn(&pool.matrix, config.n_pairs, config.seed, None)?;
    let l1 = l1_trajectory_distance(&pool.logs)?;
    let variance = trajectory_variance(&pool.logs)?;
    let names = groups.names();
    let mut diversity = String::from("metric,value\n");
    let _ = writeln!(diversity, "mean_pairwise_churn,{overall}");
    let _ = writeln!(diversity, "churn_{},{}", names[0], report.churn_top);
    let _ = writeln!(diversity, "churn_{},{}", names[1], report.churn_bottom);
    let _ = writeln!(diversity, "l1_trajectory_distance,{l1}");
    let _ = writeln!(diversity, "trajectory_variance,{variance}");
    write_report(
        &config.out_dir,
        format!("group_report_{}.csv", mode.name()),
        report.to_csv(),
        reports,
    )?;
    write_report(
        &config.out_dir,
        format!("diversity_{}.csv", mode.name()),
        diversity,
        reports,
    )
}

/// Corruption severity sweep over all kinds, re-predicting the pool on
/// each corrupted table.
fn sweep_report(
    config: &ExperimentConfig,
    pair: &SplitPair,
    pool: &Pool,
    groups: &GroupSpec,
    mode: AblationMode,
    reports: &mut BTreeMap<String, String>,
) -> Result<()> {
    let sizes = usable_sizes(config, pool)?;
    let settings = SweepSettings {
        sizes: &sizes,
        base_member: 0,
        n_samples: config.n_samples,
        bootstrap_seed: config.seed,
        corruption_seed: config.seed,
        groups: Some(groups),
        aggregation: config.aggregation,
    };
    let ids = pool.matrix.member_ids().to_vec();
    let class_count = pool.matrix.class_count();
    let cells = severity_sweep(
        |table| {
            let predictions: Vec<Prediction> = pool
                .models
                .iter()
                .map(|m| m.predict(table))
                .collect::<Result<_>>()?;
            PredictionMatrix::from_predictions(&predictions, ids.clone(), class_count)
        },
        &pair.test,
        &CorruptionKind::all(),
        &settings,
    )?;
    write_report(
        &config.out_dir,
        format!("severity_sweep_{}.csv", mode.name()),
        sweep_to_csv(&cells)?,
        reports,
    )
}

/// Run the selected stages over every configured mode.
pub fn execute(config: &ExperimentConfig, stages: Stages) -> Result<Outcome> {
    let start = Instant::now();
    std::fs::create_dir_all(&config.out_dir)?;
    let pair = build_tables(config)?;

    let mut pools: BTreeMap<String, Pool> = BTreeMap::new();
    let mut failures: BTreeMap<String, FailedPool> = BTreeMap::new();
    for &mode in &config.modes {
        match assemble_pool(config, &pair, mode, stages.train)? {
            PoolOutcome::Ready(pool) => {
                pools.insert(mode.name().into(), pool);
            }
            PoolOutcome::Failed(failure) => {
                eprintln!("warning: mode {}: {}", mode.name(), failure.message);
                failures.insert(mode.name().into(), failure);
            }
        }
    }
    if pools.is_empty() {
        let detail = failures
            .iter()
            .map(|(name, f)| format!("{name}: {}", f.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Data(format!("every mode failed ({detail})")));
    }

    let needs_groups = stages.curves || stages.metrics || stages.sweep;
    let groups = if needs_groups {
        build_groups(config, &pair, &pools)?
    } else {
        BTreeMap::new()
    };

    let mut mode_reports: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for &mode in &config.modes {
        let Some(pool) = pools.get(mode.name()) else {
            continue;
        };
        let mut reports = BTreeMap::new();
        if needs_groups {
            let spec = &groups[mode.name()];
            if stages.curves {
                curve_reports(config, &pair, pool, spec, mode, &mut reports)?;
            }
            if stages.metrics {
                metric_reports(config, &pair, pool, spec, mode, &mut reports)?;
            }
            if stages.sweep {
                sweep_report(config, &pair, pool, spec, mode, &mut reports)?;
            }
        }
        mode_reports.insert(mode.name().into(), reports);
    }

    let mut run_reports: BTreeMap<String, String> = BTreeMap::new();
    if stages.long_report {
        let modes: Vec<AblationMode> = config
            .modes
            .iter()
            .copied()
            .filter(|m| pools.contains_key(m.name()))
            .collect();
        let text = report::merge_reports(&config.out_dir, &modes)?;
        write_report(
            &config.out_dir,
            report::REPORT_FILE.into(),
            text,
            &mut run_reports,
        )?;
    }

    let any_diverged = pools.values().any(|p| p.diverged > 0);
    let partial = any_diverged || !failures.is_empty();

    if stages.manifest {
        let echo = serde_json::to_value(config)
            .map_err(|e| Error::Format(format!("config echo: {e}")))?;
        let mut manifest = RunManifest::new(echo);
        manifest.partial = partial;
        for (name, pool) in &pools {
            manifest.trained_members += pool.trained;
            manifest.cached_members += pool.cached;
            manifest.modes.insert(
                name.clone(),
                ModeManifest {
                    members: pool.metas.iter().map(MemberEntry::from).collect(),
                    reports: mode_reports.get(name).cloned().unwrap_or_default(),
                    failed: None,
                },
            );
        }
        for (name, failure) in &failures {
            manifest.trained_members += failure.trained;
            manifest.cached_members += failure.cached;
            manifest.modes.insert(
                name.clone(),
                ModeManifest {
                    members: failure.metas.iter().map(MemberEntry::from).collect(),
                    reports: BTreeMap::new(),
                    failed: Some(failure.message.clone()),
                },
            );
        }
        manifest.reports = run_reports;
        manifest.duration_seconds = start.elapsed().as_secs_f64();
        manifest.save(&config.out_dir)?;
    }

    Ok(Outcome { partial })
}
