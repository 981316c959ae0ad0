//! Experiment configuration: a versioned TOML schema, CLI overrides, and
//! the resolved form the runner consumes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fens_core::dataset::SyntheticSpec;
use fens_core::ensemble::Aggregation;
use fens_core::learners::{AugmentationConfig, LrSchedule, MLPConfig, TreeConfig};
use fens_core::rng::{mix, tags, AblationMode};
use fens_core::{Error, Result};

/// The only schema this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Name of the output root environment variable.
pub const OUT_ENV: &str = "FENS_OUT";

/// Fallback output directory when nothing else names one.
pub const OUT_DEFAULT: &str = "fens_out";

fn default_test_fraction() -> f64 {
    0.25
}

/// Dataset source as written in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian class clusters with linearly graded per-class noise.
    Synthetic {
        class_count: usize,
        per_class_count: usize,
        noise_start: f64,
        noise_end: f64,
        feature_dim: usize,
        cluster_separation: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Delimited table on disk; attributes become sensitive subgroups.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        attribute_columns: Vec<String>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

impl DatasetConfig {
    pub fn test_fraction(&self) -> f64 {
        match self {
            DatasetConfig::Synthetic { test_fraction, .. }
            | DatasetConfig::Csv { test_fraction, .. } => *test_fraction,
        }
    }

    /// Synthetic spec with the generator seed derived from the experiment
    /// seed, so one config seed pins the whole pipeline.
    pub fn synthetic_spec(&self, experiment_seed: u64) -> Option<SyntheticSpec> {
        match self {
            DatasetConfig::Synthetic {
                class_count,
                per_class_count,
                noise_start,
                noise_end,
                feature_dim,
                cluster_separation,
                ..
            } => {
                let c = *class_count;
                let step = if c > 1 {
                    (noise_end - noise_start) / (c - 1) as f64
                } else {
                    0.0
                };
                Some(SyntheticSpec {
                    class_count: c,
                    per_class_count: vec![*per_class_count; c],
                    per_class_noise: (0..c).map(|i| noise_start + step * i as f64).collect(),
                    feature_dim: *feature_dim,
                    cluster_separation: *cluster_separation,
                    seed: mix(experiment_seed, tags::DATASET, 0),
                })
            }
            DatasetConfig::Csv { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let f = self.test_fraction();
        if !(0.0..1.0).contains(&f) || f <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {f}"
            )));
        }
        match self {
            DatasetConfig::Synthetic {
                noise_start,
                noise_end,
                ..
            } => {
                if *noise_start < 0.0 || *noise_end < 0.0 {
                    return Err(Error::InvalidArgument(
                        "noise levels must be non-negative".into(),
                    ));
                }
                // Structural bounds are re-checked by the generator spec.
                Ok(())
            }
            DatasetConfig::Csv { label_column, .. } => {
                if label_column.is_empty() {
                    return Err(Error::InvalidArgument("label_column must be named".into()));
                }
                Ok(())
            }
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}

fn default_learning_rate() -> f64 {
    0.05
}

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_batch_size() -> usize {
    128
}

fn default_epochs() -> usize {
    30
}

fn default_augment() -> f64 {
    0.05
}

fn default_max_depth() -> usize {
    10
}

fn default_min_leaf() -> usize {
    1
}

/// Learner family and hyperparameters; feature and class dimensions are
/// bound later from the loaded dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerConfig {
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_augment")]
        augment_sigma: f64,
        #[serde(default = "default_augment")]
        augment_dropout: f64,
        /// Some(n) switches to warmup-plus-cosine over the epoch budget.
        #[serde(default)]
        warmup_epochs: Option<usize>,
    },
    Tree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

impl LearnerConfig {
    pub fn is_mlp(&self) -> bool {
        matches!(self, LearnerConfig::Mlp { .. })
    }

    /// Bind the learner to a dataset's feature and class dimensions.
    pub fn mlp_config(&self, feature_dim: usize, class_count: usize) -> Option<MLPConfig> {
        match self {
            LearnerConfig::Mlp {
                hidden,
                learning_rate,
                momentum,
                weight_decay,
                batch_size,
                epochs,
                augment_sigma,
                augment_dropout,
                warmup_epochs,
            } => {
                let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
                layer_sizes.push(feature_dim);
                layer_sizes.extend_from_slice(hidden);
                layer_sizes.push(class_count);
                Some(MLPConfig {
                    layer_sizes,
                    learning_rate: *learning_rate,
                    momentum: *momentum,
                    weight_decay: *weight_decay,
                    batch_size: *batch_size,
                    epochs: *epochs,
                    augmentation: AugmentationConfig {
                        gaussian_sigma: *augment_sigma,
                        feature_dropout_prob: *augment_dropout,
                    },
                    schedule: match warmup_epochs {
                        Some(n) => LrSchedule::WarmupCosine { warmup_epochs: *n },
                        None => LrSchedule::Constant,
                    },
                })
            }
            LearnerConfig::Tree { .. } => None,
        }
    }

    pub fn tree_config(&self) -> Option<TreeConfig> {
        match self {
            LearnerConfig::Tree {
                max_depth,
                min_leaf,
            } => Some(TreeConfig {
                max_depth: *max_depth,
                min_leaf: *min_leaf,
            }),
            LearnerConfig::Mlp { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LearnerConfig::Mlp {
                hidden, batch_size, ..
            } => {
                if hidden.iter().any(|&h| h == 0) {
                    return Err(Error::InvalidArgument(
                        "hidden layer widths must be positive".into(),
                    ));
                }
                if *batch_size == 0 {
                    return Err(Error::InvalidArgument("batch_size must be positive".into()));
                }
                Ok(())
            }
            LearnerConfig::Tree { .. } => self
                .tree_config()
                .expect("tree variant carries a tree config")
                .validate(),
        }
    }
}

fn default_pool_size() -> usize {
    20
}

fn default_modes() -> Vec<String> {
    vec!["all_sources".into()]
}

fn default_k() -> usize {
    10
}

fn default_sizes() -> Vec<usize> {
    vec![1, 2, 5, 10, 15, 20]
}

fn default_n_samples() -> usize {
    100
}

fn default_n_pairs() -> usize {
    100
}

fn default_seed() -> u64 {
    1
}

fn default_aggregation() -> Aggregation {
    Aggregation::Vote
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub corruption_sweep: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    /// Named sensitive attribute; switches group construction from
    /// top-k/bottom-k classes to majority/minority subgroups.
    #[serde(default)]
    pub group_attribute: Option<String>,
}

/// On-disk layout of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    pub learner: LearnerConfig,
    #[serde(default = "default_experiment_section")]
    pub experiment: ExperimentSection,
}

fn default_experiment_section() -> ExperimentSection {
    ExperimentSection {
        pool_size: default_pool_size(),
        modes: default_modes(),
        k: default_k(),
        sizes: default_sizes(),
        n_samples: default_n_samples(),
        n_pairs: default_n_pairs(),
        seed: default_seed(),
        corruption_sweep: false,
        output_dir: None,
        aggregation: default_aggregation(),
        group_attribute: None,
    }
}

/// Flag values that take precedence over file values.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub modes: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
}

/// Fully resolved configuration: file values, CLI overrides, and the
/// output-root fallback chain already applied.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub learner: LearnerConfig,
    pub pool_size: usize,
    pub modes: Vec<AblationMode>,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub seed: u64,
    pub corruption_sweep: bool,
    pub out_dir: PathBuf,
    pub aggregation: Aggregation,
    pub group_attribute: Option<String>,
}

/// Wire name to ablation mode.
pub fn parse_mode(name: &str) -> Result<AblationMode> {
    AblationMode::all()
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = AblationMode::all().iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!(
                "unknown ablation mode {name:?}; expected one of {}",
                known.join(", ")
            ))
        })
}

/// Read and resolve a config file. Flags win over file values; the output
/// root falls back from `--out` to the file to `$FENS_OUT` to
/// [`OUT_DEFAULT`].
pub fn load_config(path: &Path, overrides: &CliOverrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Data(format!("cannot read config {}: {e}", path.display()))
    })?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?;
    resolve(file, overrides)
}

/// Apply overrides and validate; exposed separately for in-memory configs.
pub fn resolve(file: FileConfig, overrides: &CliOverrides) -> Result<ExperimentConfig> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "schema_version {} is not supported (this build reads {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let exp = file.experiment;
    let mode_names = overrides.modes.clone().unwrap_or(exp.modes);
    let mut modes = Vec::with_capacity(mode_names.len());
    for name in &mode_names {
        let mode = parse_mode(name)?;
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    let out_dir = overrides
        .out
        .clone()
        .or(exp.output_dir)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(OUT_DEFAULT));
    let config = ExperimentConfig {
        dataset: file.dataset,
        learner: file.learner,
        pool_size: exp.pool_size,
        modes,
        k: exp.k,
        sizes: overrides.sizes.clone().unwrap_or(exp.sizes),
        n_samples: exp.n_samples,
        n_pairs: exp.n_pairs,
        seed: overrides.seed.unwrap_or(exp.seed),
        corruption_sweep: exp.corruption_sweep,
        out_dir,
        aggregation: exp.aggregation,
        group_attribute: exp.group_attribute,
    };
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.learner.validate()?;
        if self.pool_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "pool_size must be at least 2, got {}",
                self.pool_size
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("at least one mode required".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sizes must be non-empty".into()));
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "sizes must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.sizes.last() {
            if last > self.pool_size {
                return Err(Error::InvalidArgument(format!(
                    "largest size {last} exceeds pool_size {}",
                    self.pool_size
                )));
            }
        }
        if self.n_samples == 0 || self.n_pairs == 0 {
            return Err(Error::InvalidArgument(
                "n_samples and n_pairs must be positive".into(),
            ));
        }
        if self.group_attribute.is_some() {
            match &self.dataset {
                DatasetConfig::Csv {
                    attribute_columns, ..
                } => {
                    let name = self.group_attribute.as_deref().expect("checked above");
                    if !attribute_columns.iter().any(|c| c == name) {
                        return Err(Error::InvalidArgument(format!(
                            "group_attribute {name:?} is not among attribute_columns"
                        )));
                    }
                }
                DatasetConfig::Synthetic { .. } => {
                    return Err(Error::InvalidArgument(
                        "group_attribute requires a csv dataset with attributes".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        r#"
            schema_version = 1

            [dataset]
            kind = "synthetic"
            class_count = 4
            per_class_count = 30
            noise_start = 0.2
            noise_end = 1.5
            feature_dim = 5
            cluster_separation = 3.0

            [learner]
            kind = "mlp"

            [experiment]
            pool_size = 4
            sizes = [1, 2, 4]
            k = 1
        "#
    }

    fn parse(text: &str, overrides: &CliOverrides) -> Result<ExperimentConfig> {
        let file: FileConfig =
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        resolve(file, overrides)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let config = parse(minimal_toml(), &CliOverrides::default()).unwrap();
        assert_eq!(config.pool_size, 4);
        assert_eq!(config.modes, vec![AblationMode::AllSources]);
        assert_eq!(config.n_samples, 100);
        assert_eq!(config.seed, 1);
        assert_eq!(config.aggregation, Aggregation::Vote);
        assert!(config.learner.is_mlp());
    }

    #[test]
    fn overrides_beat_file_values() {
        let overrides = CliOverrides {
            seed: Some(9),
            modes: Some(vec!["init".into(), "none".into()]),
            out: Some(PathBuf::from("/tmp/elsewhere")),
            sizes: Some(vec![1, 3]),
        };
        let config = parse(minimal_toml(), &overrides).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.modes, vec![AblationMode::Init, AblationMode::None]);
        assert_eq!(config.out_dir, PathBuf::from("/tmp/elsewhere"));
        assert_eq!(config.sizes, vec![1, 3]);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = minimal_toml().replace("schema_version = 1", "schema_version = 2");
        let err = parse(&text, &CliOverrides::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn unknown_mode_names_are_rejected() {
        let overrides = CliOverrides {
            modes: Some(vec!["everything".into()]),
            ..CliOverrides::default()
        };
        let err = parse(minimal_toml(), &overrides).unwrap_err();
        assert!(err.to_string().contains("everything"), "{err}");
    }

    #[test]
    fn sizes_beyond_the_pool_are_rejected() {
        let overrides = CliOverrides {
            sizes: Some(vec![1, 8]),
            ..CliOverrides::default()
        };
        let err = parse(minimal_toml(), &overrides).unwrap_err();
        assert!(err.to_string().contains("pool_size"), "{err}");
    }

    #[test]
    fn synthetic_noise_grades_linearly() {
        let config = parse(minimal_toml(), &CliOverrides::default()).unwrap();
        let spec = config.dataset.synthetic_spec(config.seed).unwrap();
        assert_eq!(spec.class_count, 4);
        assert!((spec.per_class_noise[0] - 0.2).abs() < 1e-12);
        assert!((spec.per_class_noise[3] - 1.5).abs() < 1e-12);
        let step = spec.per_class_noise[1] - spec.per_class_noise[0];
        assert!((spec.per_class_noise[2] - spec.per_class_noise[1] - step).abs() < 1e-12);
    }

    #[test]
    fn group_attribute_requires_a_matching_csv_column() {
        let text = r#"
            schema_version = 1

            [dataset]
            kind = "csv"
            path = "table.csv"
            label_column = "y"
            attribute_columns = ["sex"]

            [learner]
            kind = "tree"

            [experiment]
            pool_size = 4
            sizes = [1, 4]
            group_attribute = "race"
        "#;
        let err = parse(text, &CliOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("race"), "{err}");
        let ok = text.replace("\"race\"", "\"sex\"");
        assert!(parse(&ok, &CliOverrides::default()).is_ok());
    }
}
