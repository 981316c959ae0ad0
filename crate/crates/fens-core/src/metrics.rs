//! Per-class accuracy groups, churn, gains, and trajectory diversity.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ensemble::{aggregate, Aggregation, PredictionMatrix};
use crate::error::{Error, Result};
use crate::learners::TrajectoryLog;
use crate::rng::{mix, tags, Stream};
use crate::stats::population_mean_var;

/// The two groups every report compares.
///
/// `TopBottomK` holds class-id sets picked from base-model accuracy;
/// `AttributeGroup` holds example-index sets from a sensitive attribute.
/// Groups are frozen once built and never re-derived from later members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSpec {
    TopBottomK {
        k: usize,
        top: Vec<usize>,
        bottom: Vec<usize>,
    },
    AttributeGroup {
        name: String,
        majority: Vec<usize>,
        minority: Vec<usize>,
    },
}

impl GroupSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = match self {
            GroupSpec::TopBottomK { k, top, bottom } => {
                if *k == 0 {
                    return Err(Error::InvalidArgument("K must be at least 1".into()));
                }
                if top.len() != *k || bottom.len() != *k {
                    return Err(Error::InvalidArgument(format!(
                        "top has {} and bottom {} classes, K is {k}",
                        top.len(),
                        bottom.len()
                    )));
                }
                (top, bottom)
            }
            GroupSpec::AttributeGroup {
                majority, minority, ..
            } => {
                if majority.is_empty() || minority.is_empty() {
                    return Err(Error::EmptyInput("attribute group side is empty".into()));
                }
                (majority, minority)
            }
        };
        if a.iter().any(|x| b.contains(x)) {
            return Err(Error::InvalidArgument("group sides overlap".into()));
        }
        Ok(())
    }

    /// Column names used in curve and report CSVs, favored side first.
    pub fn names(&self) -> [&str; 2] {
        match self {
            GroupSpec::TopBottomK { .. } => ["top", "bottom"],
            GroupSpec::AttributeGroup { .. } => ["majority", "minority"],
        }
    }

    /// Example-index sets for both sides, favored side first. Class-based
    /// groups select examples by their TRUE label.
    pub fn example_subsets(&self, truth: &[usize]) -> Result<[(String, Vec<usize>); 2]> {
        self.validate()?;
        let [first, second] = self.names();
        match self {
            GroupSpec::TopBottomK { top, bottom, .. } => {
                let collect = |classes: &[usize]| -> Vec<usize> {
                    truth
                        .iter()
                        .enumerate()
                        .filter(|(_, y)| classes.contains(y))
                        .map(|(i, _)| i)
                        .collect()
                };
                Ok([
                    (first.to_string(), collect(top)),
                    (second.to_string(), collect(bottom)),
                ])
            }
            GroupSpec::AttributeGroup {
                majority, minority, ..
            } => {
                let n = truth.len();
                if let Some(&bad) = majority.iter().chain(minority).find(|&&i| i >= n) {
                    return Err(Error::InvalidArgument(format!(
                        "group example index {bad} out of range for {n} examples"
                    )));
                }
                Ok([
                    (first.to_string(), majority.clone()),
                    (second.to_string(), minority.clone()),
                ])
            }
        }
    }
}

/// Overall accuracy of a prediction against the truth.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no examples to score".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy over the given example indices only.
pub fn subset_accuracy(pred: &[usize], truth: &[usize], subset: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if subset.is_empty() {
        return Err(Error::EmptyInput("no examples in subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= truth.len()) {
        return Err(Error::InvalidArgument(format!(
            "subset index {bad} out of range"
        )));
    }
    let hits = subset.iter().filter(|&&i| pred[i] == truth[i]).count();
    Ok(hits as f64 / subset.len() as f64)
}

/// Accuracy per class; classes with no test examples come back as `None`
/// rather than a fake zero.
pub fn per_class_accuracy(
    pred: &[usize],
    truth: &[usize],
    class_count: usize,
) -> Result<Vec<Option<f64>>> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&y| y >= class_count) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    let mut hits = vec![0usize; class_count];
    let mut totals = vec![0usize; class_count];
    for (&p, &t) in pred.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect())
}

/// Pick the K worst and K best classes by (accuracy, class index) ascending;
/// bottom takes the first K, top the last K. Both sets come back sorted by
/// class id. Absent classes are refused: the caller must evaluate on a test
/// set that covers every class.
pub fn select_top_bottom(class_acc: &[Option<f64>], k: usize) -> Result<GroupSpec> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if 2 * k > class_acc.len() {
        return Err(Error::InvalidArgument(format!(
            "2K = {} exceeds class count {}",
            2 * k,
            class_acc.len()
        )));
    }
    let mut ranked = Vec::with_capacity(class_acc.len());
    for (c, acc) in class_acc.iter().enumerate() {
        let Some(a) = acc else {
            return Err(Error::Data(format!(
                "class {c} has no test examples; groups would be arbitrary"
            )));
        };
        ranked.push((*a, c));
    }
    ranked.sort_by(|x, y| x.partial_cmp(y).expect("finite accuracies"));
    let mut bottom: Vec<usize> = ranked[..k].iter().map(|&(_, c)| c).collect();
    let mut top: Vec<usize> = ranked[ranked.len() - k..].iter().map(|&(_, c)| c).collect();
    bottom.sort_unstable();
    top.sort_unstable();
    let spec = GroupSpec::TopBottomK { k, top, bottom };
    spec.validate()?;
    Ok(spec)
}

/// Fraction of examples on which two predictions disagree.
pub fn churn(pred_a: &[usize], pred_b: &[usize]) -> Result<f64> {
    if pred_a.len() != pred_b.len() {
        return Err(Error::Shape(format!(
            "prediction lengths {} and {}",
            pred_a.len(),
            pred_b.len()
        )));
    }
    if pred_a.is_empty() {
        return Err(Error::EmptyInput("no examples to compare".into()));
    }
    let disagree = pred_a.iter().zip(pred_b).filter(|(a, b)| a != b).count();
    Ok(disagree as f64 / pred_a.len() as f64)
}

fn churn_on_subset(a: &[usize], b: &[usize], subset: &[usize]) -> f64 {
    let disagree = subset.iter().filter(|&&i| a[i] != b[i]).count();
    disagree as f64 / subset.len() as f64
}

/// Average churn over sampled distinct unordered member pairs.
///
/// When `n_pairs` covers all M(M-1)/2 pairs the mean is exact; otherwise
/// `n_pairs` pairs are drawn without replacement from `seed`. `restrict`
/// limits the compared examples (callers pass the index set of a group,
/// selected by TRUE label).
pub fn mean_pairwise_churn(
    matrix: &PredictionMatrix,
    n_pairs: usize,
    seed: u64,
    restrict: Option<&[usize]>,
) -> Result<f64> {
    let m = matrix.member_count();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "pairwise churn needs at least 2 members".into(),
        ));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be positive".into()));
    }
    if let Some(subset) = restrict {
        if subset.is_empty() {
            return Err(Error::EmptyInput("restriction set is empty".into()));
        }
        if let Some(&bad) = subset.iter().find(|&&i| i >= matrix.example_count()) {
            return Err(Error::InvalidArgument(format!(
                "restriction index {bad} out of range"
            )));
        }
    }

    let mut pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    if n_pairs < pairs.len() {
        let mut stream = Stream::new(mix(seed, tags::PAIRS, 0));
        // Partial Fisher-Yates: the first n_pairs slots become the sample.
        for i in 0..n_pairs {
            let j = i + stream.next_index(pairs.len() - i);
            pairs.swap(i, j);
        }
        pairs.truncate(n_pairs);
    }

    let all: Vec<usize>;
    let subset = match restrict {
        Some(s) => s,
        None => {
            all = (0..matrix.example_count()).collect();
            &all
        }
    };
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| churn_on_subset(&matrix.labels()[i], &matrix.labels()[j], subset))
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Ensemble-to-base accuracy ratio. A non-positive base is refused; callers
/// should fall back to reporting the absolute gain.
pub fn relative_gain(ensemble_acc: f64, base_acc: f64) -> Result<f64> {
    if !(base_acc > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    Ok(ensemble_acc / base_acc)
}

/// Favored-minus-disfavored accuracy; zero means equal performance.
pub fn accuracy_difference(top_acc: f64, bottom_acc: f64) -> Result<f64> {
    for v in [top_acc, bottom_acc] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {v} outside [0, 1]"
            )));
        }
    }
    Ok(top_acc - bottom_acc)
}

fn check_logs(logs: &[TrajectoryLog]) -> Result<usize> {
    if logs.len() < 2 {
        return Err(Error::InvalidArgument(
            "trajectory diversity needs at least 2 logs".into(),
        ));
    }
    let e = logs[0].test_accuracy.len();
    if e == 0 {
        return Err(Error::EmptyInput("trajectory logs are empty".into()));
    }
    if logs.iter().any(|l| l.test_accuracy.len() != e) {
        return Err(Error::Shape("trajectory logs differ in length".into()));
    }
    Ok(e)
}

/// Mean absolute pairwise distance between member accuracy trajectories,
/// averaged over epochs.
pub fn l1_trajectory_distance(logs: &[TrajectoryLog]) -> Result<f64> {
    let epochs = check_logs(logs)?;
    let m = logs.len();
    let pair_count = (m * (m - 1) / 2) as f64;
    let mut per_epoch_sum = 0.0;
    for e in 0..epochs {
        let mut sum = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                sum += (logs[i].test_accuracy[e] - logs[j].test_accuracy[e]).abs();
            }
        }
        per_epoch_sum += sum / pair_count;
    }
    Ok(per_epoch_sum / epochs as f64)
}

/// Population variance of member accuracies at each epoch, averaged over
/// epochs. Identical logs yield exactly zero.
pub fn trajectory_variance(logs: &[TrajectoryLog]) -> Result<f64> {
    let epochs = check_logs(logs)?;
    let mut column = vec![0.0; logs.len()];
    let mut acc = 0.0;
    let mut all_zero = true;
    for e in 0..epochs {
        for (slot, log) in column.iter_mut().zip(logs) {
            *slot = log.test_accuracy[e];
        }
        let (_, var) = population_mean_var(&column);
        if var != 0.0 {
            all_zero = false;
        }
        acc += var;
    }
    if all_zero {
        return Ok(0.0);
    }
    Ok(acc / epochs as f64)
}

/// Sample Pearson correlation; constant input is undefined rather than 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "series lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least 2 points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// The eight headline numbers for one trained pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub mean_acc: f64,
    pub top_acc: f64,
    pub bottom_acc: f64,
    pub relative_gain_top: f64,
    pub relative_gain_bottom: f64,
    pub acc_difference: f64,
    pub churn_top: f64,
    pub churn_bottom: f64,
}

impl GroupReport {
    /// One CSV row under a fixed header. For attribute groups the `top`
    /// columns carry the majority side and `bottom` the minority side.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("mean,top,bottom,gain_top,gain_bottom,acc_diff,churn_top,churn_bottom\n");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.mean_acc,
            self.top_acc,
            self.bottom_acc,
            self.relative_gain_top,
            self.relative_gain_bottom,
            self.acc_difference,
            self.churn_top,
            self.churn_bottom
        );
        out
    }
}

/// Everything needed to assemble a [`GroupReport`] from one pool.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    pub matrix: &'a PredictionMatrix,
    pub truth: &'a [usize],
    pub base_member: usize,
    pub groups: &'a GroupSpec,
    pub n_pairs: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
}

/// Score the full pool as one ensemble, compare per-group accuracy against
/// the base member, and attach per-group pairwise churn. The same pair
/// sample (from `seed`) is used for both groups so their churns are
/// comparable.
pub fn compute_group_report(inputs: ReportInputs<'_>) -> Result<GroupReport> {
    let ReportInputs {
        matrix,
        truth,
        base_member,
        groups,
        n_pairs,
        seed,
        aggregation,
    } = inputs;
    if truth.len() != matrix.example_count() {
        return Err(Error::Shape(format!(
            "{} truth labels for {} examples",
            truth.len(),
            matrix.example_count()
        )));
    }
    let [(first_name, first_idx), (second_name, second_idx)] = groups.example_subsets(truth)?;
    for (name, idx) in [(&first_name, &first_idx), (&second_name, &second_idx)] {
        if idx.is_empty() {
            return Err(Error::EmptyInput(format!(
                "group `{name}` matches no test examples"
            )));
        }
    }
    let all: Vec<usize> = (0..matrix.member_count()).collect();
    let pooled = aggregate(matrix, &all, aggregation)?;
    let base = matrix.member_labels(base_member)?;

    let mean_acc = accuracy(&pooled, truth)?;
    let top_acc = subset_accuracy(&pooled, truth, &first_idx)?;
    let bottom_acc = subset_accuracy(&pooled, truth, &second_idx)?;
    let base_top = subset_accuracy(base, truth, &first_idx)?;
    let base_bottom = subset_accuracy(base, truth, &second_idx)?;

    Ok(GroupReport {
        mean_acc,
        top_acc,
        bottom_acc,
        relative_gain_top: relative_gain(top_acc, base_top)?,
        relative_gain_bottom: relative_gain(bottom_acc, base_bottom)?,
        acc_difference: accuracy_difference(top_acc, bottom_acc)?,
        churn_top: mean_pairwise_churn(matrix, n_pairs, seed, Some(&first_idx))?,
        churn_bottom: mean_pairwise_churn(matrix, n_pairs, seed, Some(&second_idx))?,
    })
}
