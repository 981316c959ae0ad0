//! Prediction pooling, aggregation, and bootstrap ensemble-size curves.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Prediction;
use crate::metrics::GroupSpec;
use crate::rng::{mix, tags, Stream};
use crate::stats::population_mean_var;

/// Work cap for [`bootstrap_curve_exact`]: enumeration of M^S ordered draws
/// is refused beyond this many tuples per size.
pub const EXACT_ENUMERATION_CAP: u64 = 100_000;

/// Test-set predictions of a whole member pool: M label rows over N
/// examples, plus per-member class scores when every member provides them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    labels: Vec<Vec<usize>>,
    scores: Option<Vec<Array2<f64>>>,
    member_ids: Vec<String>,
    class_count: usize,
}

impl PredictionMatrix {
    pub fn new(
        labels: Vec<Vec<usize>>,
        scores: Option<Vec<Array2<f64>>>,
        member_ids: Vec<String>,
        class_count: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("prediction matrix has no members".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidArgument("class_count must be at least 2".into()));
        }
        let n = labels[0].len();
        if n == 0 {
            return Err(Error::EmptyInput("prediction matrix has no examples".into()));
        }
        if labels.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("member label rows differ in length".into()));
        }
        if let Some(&bad) = labels.iter().flatten().find(|&&y| y >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if member_ids.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} member ids for {} members",
                member_ids.len(),
                labels.len()
            )));
        }
        if let Some(score_set) = &scores {
            if score_set.len() != labels.len() {
                return Err(Error::Shape("scores present for a subset of members".into()));
            }
            for s in score_set {
                if s.dim() != (n, class_count) {
                    return Err(Error::Shape(format!(
                        "score block {:?}, expected ({n}, {class_count})",
                        s.dim()
                    )));
                }
                for row in s.rows() {
                    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::Data("scores must be finite and non-negative".into()));
                    }
                    if (row.sum() - 1.0).abs() > 1e-9 {
                        return Err(Error::Data(format!(
                            "score row sums to {}, expected 1",
                            row.sum()
                        )));
                    }
                }
            }
        }
        Ok(PredictionMatrix {
            labels,
            scores,
            member_ids,
            class_count,
        })
    }

    /// Pool per-member predictions. Scores are kept only when every member
    /// carries them; a mixed pool falls back to labels only.
    pub fn from_predictions(
        predictions: &[Prediction],
        member_ids: Vec<String>,
        class_count: usize,
    ) -> Result<Self> {
        let labels = predictions.iter().map(|p| p.labels.clone()).collect();
        let scores = if predictions.iter().all(|p| p.scores.is_some()) {
            Some(
                predictions
                    .iter()
                    .map(|p| p.scores.clone().expect("checked above"))
                    .collect(),
            )
        } else {
            None
        };
        PredictionMatrix::new(labels, scores, member_ids, class_count)
    }

    pub fn member_count(&self) -> usize {
        self.labels.len()
    }

    pub fn example_count(&self) -> usize {
        self.labels[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn member_labels(&self, member: usize) -> Result<&[usize]> {
        self.labels
            .get(member)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidArgument(format!("no member {member}")))
    }

    pub fn scores(&self) -> Option<&[Array2<f64>]> {
        self.scores.as_deref()
    }

    pub fn has_scores(&self) -> bool {
        self.scores.is_some()
    }

    pub fn member_ids(&self) -> &[String] {
        &self.member_ids
    }

    fn check_members(&self, members: &[usize]) -> Result<()> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("member subset is empty".into()));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= self.member_count()) {
            return Err(Error::InvalidArgument(format!(
                "member index {bad} out of range for pool of {}",
                self.member_count()
            )));
        }
        Ok(())
    }
}

/// How member predictions combine into one label per example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plurality vote over member labels.
    Vote,
    /// Argmax of the member-mean probability vector.
    ScoreMean,
}

/// Plurality vote among the selected members (repeats count as extra
/// votes); per example, ties resolve to the lowest class index.
pub fn aggregate_vote(matrix: &PredictionMatrix, members: &[usize]) -> Result<Vec<usize>> {
    matrix.check_members(members)?;
    let n = matrix.example_count();
    let c = matrix.class_count();
    let mut out = Vec::with_capacity(n);
    let mut votes = vec![0usize; c];
    for i in 0..n {
        votes.fill(0);
        for &m in members {
            votes[matrix.labels[m][i]] += 1;
        }
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate().skip(1) {
            if v > votes[best] {
                best = k;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Mean of the selected members' probability rows (repeats count double),
/// then argmax with lowest-class-index tie-break.
pub fn aggregate_scores(matrix: &PredictionMatrix, members: &[usize]) -> Result<Vec<usize>> {
    matrix.check_members(members)?;
    let Some(scores) = matrix.scores() else {
        return Err(Error::ScoresUnavailable);
    };
    let n = matrix.example_count();
    let c = matrix.class_count();
    let mut out = Vec::with_capacity(n);
    let mut acc = vec![0.0f64; c];
    for i in 0..n {
        acc.fill(0.0);
        for &m in members {
            for (slot, &p) in acc.iter_mut().zip(scores[m].row(i)) {
                *slot += p;
            }
        }
        let mut best = 0;
        for (k, &v) in acc.iter().enumerate().skip(1) {
            if v > acc[best] {
                best = k;
            }
        }
        out.push(best);
    }
    Ok(out)
}

pub fn aggregate(
    matrix: &PredictionMatrix,
    members: &[usize],
    how: Aggregation,
) -> Result<Vec<usize>> {
    match how {
        Aggregation::Vote => aggregate_vote(matrix, members),
        Aggregation::ScoreMean => aggregate_scores(matrix, members),
    }
}

/// One named per-group accuracy track along the size axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCurve {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Ensemble accuracy as a function of ensemble size, with bootstrap mean and
/// standard deviation per size (and per group when groups were supplied).
/// `samples_per_size` is 0 when the curve came from exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeCurve {
    pub sizes: Vec<usize>,
    pub mean_acc: Vec<f64>,
    pub std_acc: Vec<f64>,
    pub groups: Vec<GroupCurve>,
    pub samples_per_size: usize,
}

impl SizeCurve {
    /// CSV with columns size, mean_acc, std_acc, then
    /// group_<name>_mean, group_<name>_std per group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,mean_acc,std_acc");
        for g in &self.groups {
            let _ = write!(out, ",group_{}_mean,group_{}_std", g.name, g.name);
        }
        out.push('\n');
        for (i, &s) in self.sizes.iter().enumerate() {
            let _ = write!(out, "{s},{},{}", self.mean_acc[i], self.std_acc[i]);
            for g in &self.groups {
                let _ = write!(out, ",{},{}", g.mean[i], g.std[i]);
            }
            out.push('\n');
        }
        out
    }
}

fn subset_hit_rate(pred: &[usize], truth: &[usize], subset: &[usize]) -> f64 {
    let hits = subset.iter().filter(|&&i| pred[i] == truth[i]).count();
    hits as f64 / subset.len() as f64
}

struct CurveInputs<'a> {
    matrices: &'a [PredictionMatrix],
    truth: &'a [usize],
    base_member: usize,
    sizes: &'a [usize],
    groups: Option<&'a GroupSpec>,
    aggregation: Aggregation,
}

impl<'a> CurveInputs<'a> {
    fn validate(&self) -> Result<(usize, usize, Vec<(String, Vec<usize>)>)> {
        let Some(first) = self.matrices.first() else {
            return Err(Error::EmptyInput("no prediction matrices".into()));
        };
        let (m, n) = (first.member_count(), first.example_count());
        for mat in self.matrices {
            if mat.member_count() != m
                || mat.example_count() != n
                || mat.class_count() != first.class_count()
            {
                return Err(Error::Shape(
                    "prediction matrices disagree in members, examples, or classes".into(),
                ));
            }
        }
        if self.truth.len() != n {
            return Err(Error::Shape(format!(
                "{} truth labels for {n} examples",
                self.truth.len()
            )));
        }
        if let Some(&bad) = self.truth.iter().find(|&&y| y >= first.class_count()) {
            return Err(Error::Data(format!("truth label {bad} out of range")));
        }
        if self.base_member >= m {
            return Err(Error::InvalidArgument(format!(
                "base member {} out of range for pool of {m}",
                self.base_member
            )));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sizes list is empty".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("ensemble size 0 is meaningless".into()));
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "sizes must be strictly increasing".into(),
            ));
        }
        // Documented cap: no sampled size may exceed the pool size.
        if let Some(&bad) = self.sizes.iter().find(|&&s| s > m) {
            return Err(Error::InvalidArgument(format!(
                "size {bad} exceeds pool size {m}"
            )));
        }
        let subsets = match self.groups {
            Some(g) => {
                let pair = g.example_subsets(self.truth)?;
                for (name, idx) in &pair {
                    if idx.is_empty() {
                        return Err(Error::EmptyInput(format!(
                            "group `{name}` matches no test examples"
                        )));
                    }
                }
                pair.to_vec()
            }
            None => Vec::new(),
        };
        Ok((m, n, subsets))
    }

    /// Accuracy of one sampled ensemble (draw plus the shared base member),
    /// averaged over all matrices: overall first, then one value per group.
    fn draw_accuracy(&self, members: &[usize], subsets: &[(String, Vec<usize>)], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.resize(1 + subsets.len(), 0.0);
        for matrix in self.matrices {
            let pred = aggregate(matrix, members, self.aggregation)?;
            let hits = pred
                .iter()
                .zip(self.truth)
                .filter(|(a, b)| a == b)
                .count();
            out[0] += hits as f64 / self.truth.len() as f64;
            for (slot, (_, idx)) in out[1..].iter_mut().zip(subsets) {
                *slot += subset_hit_rate(&pred, self.truth, idx);
            }
        }
        let k = self.matrices.len() as f64;
        for v in out.iter_mut() {
            *v /= k;
        }
        Ok(())
    }

    fn assemble(
        &self,
        per_size: Vec<Vec<Vec<f64>>>,
        subsets: &[(String, Vec<usize>)],
        samples_per_size: usize,
    ) -> SizeCurve {
        let mut mean_acc = Vec::with_capacity(self.sizes.len());
        let mut std_acc = Vec::with_capacity(self.sizes.len());
        let mut groups: Vec<GroupCurve> = subsets
            .iter()
            .map(|(name, _)| GroupCurve {
                name: name.clone(),
                mean: Vec::with_capacity(self.sizes.len()),
                std: Vec::with_capacity(self.sizes.len()),
            })
            .collect();
        for tracks in per_size {
            let (m, v) = population_mean_var(&tracks[0]);
            mean_acc.push(m);
            std_acc.push(v.sqrt());
            for (g, track) in groups.iter_mut().zip(&tracks[1..]) {
                let (gm, gv) = population_mean_var(track);
                g.mean.push(gm);
                g.std.push(gv.sqrt());
            }
        }
        SizeCurve {
            sizes: self.sizes.to_vec(),
            mean_acc,
            std_acc,
            groups,
            samples_per_size,
        }
    }
}

/// Bootstrap size curve over several prediction matrices at once: each
/// sampled ensemble is scored on every matrix and the accuracies averaged
/// before the bootstrap statistics are taken.
///
/// Per size S, `n_samples` member multisets of size S are drawn with
/// replacement, and the shared base member joins every draw as one extra
/// voter (an ensemble of S+1). Draws depend on `seed` and on the position of
/// S in `sizes`, so the whole call is deterministic in its arguments.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_curve_multi(
    matrices: &[PredictionMatrix],
    truth: &[usize],
    base_member: usize,
    sizes: &[usize],
    n_samples: usize,
    seed: u64,
    groups: Option<&GroupSpec>,
    aggregation: Aggregation,
) -> Result<SizeCurve> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let inputs = CurveInputs {
        matrices,
        truth,
        base_member,
        sizes,
        groups,
        aggregation,
    };
    let (m, _, subsets) = inputs.validate()?;
    let mut stream = Stream::new(mix(seed, tags::BOOTSTRAP, 0));
    let mut members = Vec::new();
    let mut draw_acc = Vec::new();
    let mut per_size = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut tracks = vec![Vec::with_capacity(n_samples); 1 + subsets.len()];
        for _ in 0..n_samples {
            members.clear();
            members.extend((0..size).map(|_| stream.next_index(m)));
            members.push(base_member);
            inputs.draw_accuracy(&members, &subsets, &mut draw_acc)?;
            for (track, &v) in tracks.iter_mut().zip(&draw_acc) {
                track.push(v);
            }
        }
        per_size.push(tracks);
    }
    Ok(inputs.assemble(per_size, &subsets, n_samples))
}

/// Single-matrix convenience wrapper over [`bootstrap_curve_multi`].
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_curve(
    matrix: &PredictionMatrix,
    truth: &[usize],
    base_member: usize,
    sizes: &[usize],
    n_samples: usize,
    seed: u64,
    groups: Option<&GroupSpec>,
    aggregation: Aggregation,
) -> Result<SizeCurve> {
    bootstrap_curve_multi(
        std::slice::from_ref(matrix),
        truth,
        base_member,
        sizes,
        n_samples,
        seed,
        groups,
        aggregation,
    )
}

/// Exhaustive version of the bootstrap curve: every size S enumerates all
/// M^S ordered member draws (each joined by the base member), so the result
/// is the exact expectation the sampled curve estimates. Sizes whose
/// enumeration would exceed [`EXACT_ENUMERATION_CAP`] tuples are refused.
/// The returned curve reports `samples_per_size` 0.
pub fn bootstrap_curve_exact(
    matrices: &[PredictionMatrix],
    truth: &[usize],
    base_member: usize,
    sizes: &[usize],
    groups: Option<&GroupSpec>,
    aggregation: Aggregation,
) -> Result<SizeCurve> {
    let inputs = CurveInputs {
        matrices,
        truth,
        base_member,
        sizes,
        groups,
        aggregation,
    };
    let (m, _, subsets) = inputs.validate()?;
    for &size in sizes {
        let tuples = (m as u64).checked_pow(size as u32);
        if tuples.is_none_or(|t| t > EXACT_ENUMERATION_CAP) {
            return Err(Error::InvalidArgument(format!(
                "exact enumeration of {m}^{size} draws exceeds the cap of {EXACT_ENUMERATION_CAP}"
            )));
        }
    }
    let mut members = Vec::new();
    let mut draw_acc = Vec::new();
    let mut per_size = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let total = (m as u64).pow(size as u32);
        let mut tracks = vec![Vec::with_capacity(total as usize); 1 + subsets.len()];
        for mut code in 0..total {
            members.clear();
            for _ in 0..size {
                members.push((code % m as u64) as usize);
                code /= m as u64;
            }
            members.push(base_member);
            inputs.draw_accuracy(&members, &subsets, &mut draw_acc)?;
            for (track, &v) in tracks.iter_mut().zip(&draw_acc) {
                track.push(v);
            }
        }
        per_size.push(tracks);
    }
    Ok(inputs.assemble(per_size, &subsets, 0))
}
