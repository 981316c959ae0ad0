//! Severity-graded test-set corruptions and the corruption sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::SampleTable;
use crate::ensemble::{
    bootstrap_curve, bootstrap_curve_multi, Aggregation, PredictionMatrix, SizeCurve,
};
use crate::error::{Error, Result};
use crate::metrics::{relative_gain, subset_accuracy, GroupSpec};
use crate::rng::{mix, tags, Stream};

/// Families of tabular input damage. Each kind maps severity levels 1..5 to
/// a strictly increasing magnitude parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Additive Gaussian feature noise.
    GaussianNoise,
    /// Independent zeroing of feature cells.
    FeatureMask,
    /// Per-feature multiplicative factor plus offset (calibration drift).
    ScaleShift,
}

impl CorruptionKind {
    pub fn all() -> [CorruptionKind; 3] {
        [
            CorruptionKind::GaussianNoise,
            CorruptionKind::FeatureMask,
            CorruptionKind::ScaleShift,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::FeatureMask => "feature_mask",
            CorruptionKind::ScaleShift => "scale_shift",
        }
    }

    fn index(&self) -> u64 {
        match self {
            CorruptionKind::GaussianNoise => 0,
            CorruptionKind::FeatureMask => 1,
            CorruptionKind::ScaleShift => 2,
        }
    }

    /// Magnitude parameter for a severity level in 1..5.
    pub fn severity_param(&self, severity: u8) -> Result<f64> {
        if !(1..=5).contains(&severity) {
            return Err(Error::InvalidArgument(format!(
                "severity {severity} outside 1..5"
            )));
        }
        let table: [f64; 5] = match self {
            CorruptionKind::GaussianNoise => [0.05, 0.1, 0.2, 0.4, 0.8],
            CorruptionKind::FeatureMask => [0.02, 0.05, 0.1, 0.2, 0.35],
            CorruptionKind::ScaleShift => [0.05, 0.1, 0.2, 0.35, 0.5],
        };
        Ok(table[severity as usize - 1])
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn additive_noise(
    table: &SampleTable,
    sigma: f64,
    mut draw: impl FnMut() -> f64,
) -> Result<SampleTable> {
    let mut features = table.features().clone();
    for v in features.iter_mut() {
        *v += sigma * draw();
    }
    table.with_features(features)
}

/// Perturb the features of `table`, leaving labels, attributes, and shapes
/// untouched. Deterministic in (kind, severity, seed); cells are visited in
/// row-major order.
pub fn corrupt(
    table: &SampleTable,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
) -> Result<SampleTable> {
    let param = kind.severity_param(severity)?;
    let mut stream = Stream::new(mix(
        seed,
        tags::CORRUPTION,
        kind.index() * 16 + severity as u64,
    ));
    match kind {
        CorruptionKind::GaussianNoise => additive_noise(table, param, || stream.next_normal()),
        CorruptionKind::FeatureMask => {
            let mut features = table.features().clone();
            for v in features.iter_mut() {
                if stream.next_f64() < param {
                    *v = 0.0;
                }
            }
            table.with_features(features)
        }
        CorruptionKind::ScaleShift => {
            let mut features = table.features().clone();
            for mut col in features.columns_mut() {
                let factor = stream.uniform(1.0 - param, 1.0 + param);
                let offset = stream.uniform(-param, param);
                col.mapv_inplace(|v| factor * v + offset);
            }
            table.with_features(features)
        }
    }
}

/// Sweep knobs shared by every cell.
#[derive(Debug, Clone, Copy)]
pub struct SweepSettings<'a> {
    pub sizes: &'a [usize],
    pub base_member: usize,
    pub n_samples: usize,
    /// Seed for the bootstrap draws; identical across cells so curves are
    /// comparable draw for draw.
    pub bootstrap_seed: u64,
    /// Seed for the corruption streams.
    pub corruption_seed: u64,
    pub groups: Option<&'a GroupSpec>,
    pub aggregation: Aggregation,
}

/// One row group of the sweep: a size curve for a (severity, kind) pair,
/// plus the base member's accuracy on the same data for gain columns. Kind
/// is `"clean"` for severity 0, a corruption name, or `"mean"` for the
/// across-kinds average.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub severity: u8,
    pub kind: String,
    pub curve: SizeCurve,
    pub base_acc: f64,
    pub base_group_acc: Vec<(String, f64)>,
}

fn base_accuracies(
    matrix: &PredictionMatrix,
    truth: &[usize],
    base_member: usize,
    subsets: &[(String, Vec<usize>)],
) -> Result<(f64, Vec<(String, f64)>)> {
    let base = matrix.member_labels(base_member)?;
    let all: Vec<usize> = (0..truth.len()).collect();
    let overall = subset_accuracy(base, truth, &all)?;
    let mut groups = Vec::with_capacity(subsets.len());
    for (name, idx) in subsets {
        groups.push((name.clone(), subset_accuracy(base, truth, idx)?));
    }
    Ok((overall, groups))
}

/// Evaluate a trained pool across the corruption grid.
///
/// `produce` runs the pool on a table and returns its prediction matrix.
/// The output runs: one severity-0 cell on the clean table (bit-identical to
/// an ordinary bootstrap curve with the same seed), then for each severity
/// 1..5 one cell per kind and one `"mean"` cell that averages accuracy
/// across kinds draw by draw.
pub fn severity_sweep<F>(
    mut produce: F,
    clean_test: &SampleTable,
    kinds: &[CorruptionKind],
    settings: &SweepSettings<'_>,
) -> Result<Vec<SweepCell>>
where
    F: FnMut(&SampleTable) -> Result<PredictionMatrix>,
{
    if kinds.is_empty() {
        return Err(Error::EmptyInput("no corruption kinds requested".into()));
    }
    let truth = clean_test.labels();
    let subsets: Vec<(String, Vec<usize>)> = match settings.groups {
        Some(g) => g.example_subsets(truth)?.to_vec(),
        None => Vec::new(),
    };
    let curve_of = |matrices: &[PredictionMatrix]| -> Result<SizeCurve> {
        bootstrap_curve_multi(
            matrices,
            truth,
            settings.base_member,
            settings.sizes,
            settings.n_samples,
            settings.bootstrap_seed,
            settings.groups,
            settings.aggregation,
        )
    };

    let mut cells = Vec::with_capacity(1 + 5 * (kinds.len() + 1));

    let clean_matrix = produce(clean_test)?;
    let (base_acc, base_group_acc) =
        base_accuracies(&clean_matrix, truth, settings.base_member, &subsets)?;
    cells.push(SweepCell {
        severity: 0,
        kind: "clean".into(),
        curve: bootstrap_curve(
            &clean_matrix,
            truth,
            settings.base_member,
            settings.sizes,
            settings.n_samples,
            settings.bootstrap_seed,
            settings.groups,
            settings.aggregation,
        )?,
        base_acc,
        base_group_acc,
    });

    for severity in 1..=5u8 {
        let mut matrices = Vec::with_capacity(kinds.len());
        let mut per_kind = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let damaged = corrupt(clean_test, *kind, severity, settings.corruption_seed)?;
            let matrix = produce(&damaged)?;
            let (base_acc, base_group_acc) =
                base_accuracies(&matrix, truth, settings.base_member, &subsets)?;
            cells.push(SweepCell {
                severity,
                kind: kind.name().into(),
                curve: curve_of(std::slice::from_ref(&matrix))?,
                base_acc,
                base_group_acc: base_group_acc.clone(),
            });
            per_kind.push((base_acc, base_group_acc));
            matrices.push(matrix);
        }
        let k = per_kind.len() as f64;
        let base_acc = per_kind.iter().map(|(a, _)| a).sum::<f64>() / k;
        let base_group_acc = subsets
            .iter()
            .enumerate()
            .map(|(gi, (name, _))| {
                let mean = per_kind.iter().map(|(_, g)| g[gi].1).sum::<f64>() / k;
                (name.clone(), mean)
            })
            .collect();
        cells.push(SweepCell {
            severity,
            kind: "mean".into(),
            curve: curve_of(&matrices)?,
            base_acc,
            base_group_acc,
        });
    }
    Ok(cells)
}

/// Long-format CSV over all cells: severity, kind, size, group, mean_acc,
/// std_acc, relative_gain. The `overall` group row precedes named groups.
pub fn sweep_to_csv(cells: &[SweepCell]) -> Result<String> {
    let mut out = String::from("severity,kind,size,group,mean_acc,std_acc,relative_gain\n");
    for cell in cells {
        for (i, &size) in cell.curve.sizes.iter().enumerate() {
            let gain = relative_gain(cell.curve.mean_acc[i], cell.base_acc)?;
            let _ = writeln!(
                out,
                "{},{},{size},overall,{},{},{gain}",
                cell.severity, cell.kind, cell.curve.mean_acc[i], cell.curve.std_acc[i]
            );
            for g in &cell.curve.groups {
                let base = cell
                    .base_group_acc
                    .iter()
                    .find(|(name, _)| *name == g.name)
                    .map(|(_, acc)| *acc)
                    .ok_or_else(|| {
                        Error::Schema(format!("sweep cell lacks base accuracy for `{}`", g.name))
                    })?;
                let gain = relative_gain(g.mean[i], base)?;
                let _ = writeln!(
                    out,
                    "{},{},{size},{},{},{},{gain}",
                    cell.severity, cell.kind, g.name, g.mean[i], g.std[i]
                );
            }
        }
    }
    Ok(out)
}
