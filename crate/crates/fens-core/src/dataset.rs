//! Tabular classification datasets: loading, synthesis, splitting, subgroups.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::{mix, tags, Stream};

/// Immutable feature matrix with integer class labels and optional named
/// sensitive attributes. Features are unitless; loading and splitting take
/// care of standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    features: Array2<f64>,
    labels: Vec<usize>,
    attributes: BTreeMap<String, Vec<u32>>,
    class_count: usize,
    feature_names: Vec<String>,
}

impl SampleTable {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        feature_names: Vec<String>,
        attributes: BTreeMap<String, Vec<u32>>,
    ) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if n == 0 {
            return Err(Error::EmptyInput("sample table has no rows".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if feature_names.len() != d {
            return Err(Error::Shape(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        for (name, codes) in &attributes {
            if codes.len() != n {
                return Err(Error::Shape(format!(
                    "attribute `{name}` has {} entries for {n} rows",
                    codes.len()
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(SampleTable {
            features,
            labels,
            attributes,
            class_count,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<u32>> {
        &self.attributes
    }

    /// Attach (or replace) a named attribute vector.
    pub fn with_attribute(mut self, name: impl Into<String>, codes: Vec<u32>) -> Result<Self> {
        if codes.len() != self.len() {
            return Err(Error::Shape(format!(
                "attribute has {} entries for {} rows",
                codes.len(),
                self.len()
            )));
        }
        self.attributes.insert(name.into(), codes);
        Ok(self)
    }

    /// New table containing the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("row selection is empty".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let features = self.features.select(ndarray::Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let attributes = self
            .attributes
            .iter()
            .map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r]).collect()))
            .collect();
        SampleTable::new(
            features,
            labels,
            self.class_count,
            self.feature_names.clone(),
            attributes,
        )
    }

    /// Replace the feature matrix, keeping labels and attributes. The new
    /// matrix must have the same shape.
    pub(crate) fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::Shape(format!(
                "replacement features {:?} vs {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        SampleTable::new(
            features,
            self.labels.clone(),
            self.class_count,
            self.feature_names.clone(),
            self.attributes.clone(),
        )
    }

    /// Per-column mean and population standard deviation.
    pub fn column_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let mut means = Vec::with_capacity(self.dim());
        let mut stds = Vec::with_capacity(self.dim());
        for col in self.features.columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        (means, stds)
    }

    /// Z-score every column with the given statistics; columns whose std is
    /// zero are mapped to 0.
    fn standardized(&self, means: &[f64], stds: &[f64]) -> Result<Self> {
        let mut features = self.features.clone();
        for (j, mut col) in features.columns_mut().into_iter().enumerate() {
            if stds[j] > 0.0 {
                col.mapv_inplace(|v| (v - means[j]) / stds[j]);
            } else {
                col.fill(0.0);
            }
        }
        self.with_features(features)
    }

    /// Sorted indices of the rows whose attribute equals `value`. An absent
    /// value yields an empty set; an unknown attribute is a schema error.
    pub fn subgroup_indices(&self, attribute: &str, value: u32) -> Result<Vec<usize>> {
        let codes = self
            .attributes
            .get(attribute)
            .ok_or_else(|| Error::Schema(format!("unknown attribute `{attribute}`")))?;
        Ok(codes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == value)
            .map(|(i, _)| i)
            .collect())
    }
}

/// Disjoint train/test row sets of one source table. Both parts are z-scored
/// with statistics computed on the train part only.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: SampleTable,
    pub test: SampleTable,
}

/// Seeded train/test split.
///
/// Rows are assigned by a seeded permutation; when every observed class has
/// at least two examples the split is stratified per class, so each class
/// appears in both parts. After assignment both parts are standardized with
/// the train part's per-column mean and std, which keeps test statistics out
/// of the preprocessing.
pub fn split(table: &SampleTable, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = table.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "cannot split a table with fewer than 2 rows".into(),
        ));
    }
    let mut stream = Stream::new(mix(seed, tags::SPLIT, 0));

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); table.class_count()];
    for (i, &y) in table.labels().iter().enumerate() {
        per_class[y].push(i);
    }
    let stratifiable = per_class.iter().all(|c| c.is_empty() || c.len() >= 2);

    let clamp = |want: f64, len: usize| -> usize {
        (want.round() as usize).clamp(1, len - 1)
    };

    let (mut test_rows, mut train_rows) = (Vec::new(), Vec::new());
    if stratifiable {
        for rows in per_class.iter().filter(|c| !c.is_empty()) {
            let mut rows = rows.clone();
            stream.shuffle(&mut rows);
            let n_test = clamp(test_fraction * rows.len() as f64, rows.len());
            test_rows.extend_from_slice(&rows[..n_test]);
            train_rows.extend_from_slice(&rows[n_test..]);
        }
    } else {
        let perm = stream.permutation(n);
        let n_test = clamp(test_fraction * n as f64, n);
        test_rows.extend_from_slice(&perm[..n_test]);
        train_rows.extend_from_slice(&perm[n_test..]);
    }
    test_rows.sort_unstable();
    train_rows.sort_unstable();

    let train = table.select_rows(&train_rows)?;
    let test = table.select_rows(&test_rows)?;
    let (means, stds) = train.column_stats();
    Ok(SplitPair {
        train: train.standardized(&means, &stds)?,
        test: test.standardized(&means, &stds)?,
    })
}

/// Recipe for a Gaussian-cluster dataset with per-class difficulty.
///
/// Class `c`'s center is drawn from a seeded stream and scaled by
/// `cluster_separation`; its examples add isotropic noise with standard
/// deviation `per_class_noise[c]`. Grading the noise manufactures classes of
/// genuinely unequal difficulty.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub per_class_count: Vec<usize>,
    pub per_class_noise: Vec<f64>,
    pub feature_dim: usize,
    pub cluster_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::InvalidArgument("class_count must be at least 2".into()));
        }
        if self.per_class_count.len() != self.class_count {
            return Err(Error::Shape(format!(
                "per_class_count has {} entries for {} classes",
                self.per_class_count.len(),
                self.class_count
            )));
        }
        if self.per_class_noise.len() != self.class_count {
            return Err(Error::Shape(format!(
                "per_class_noise has {} entries for {} classes",
                self.per_class_noise.len(),
                self.class_count
            )));
        }
        if self.per_class_count.iter().any(|&c| c < 2) {
            return Err(Error::InvalidArgument(
                "every per_class_count must be at least 2".into(),
            ));
        }
        if self.per_class_noise.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "per_class_noise must be finite and non-negative".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        if !(self.cluster_separation > 0.0) || !self.cluster_separation.is_finite() {
            return Err(Error::InvalidArgument(
                "cluster_separation must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// The class centers this spec deterministically implies.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.class_count)
            .map(|c| {
                let mut s = Stream::new(mix(self.seed, tags::SYNTH_CENTER, c as u64));
                (0..self.feature_dim)
                    .map(|_| self.cluster_separation * s.next_normal())
                    .collect()
            })
            .collect()
    }
}

/// Generate the Gaussian-cluster table described by `spec`. Deterministic in
/// `spec.seed`; rows are grouped by class in class order. Features are raw
/// (unstandardized) so that a subsequent [`split`] can standardize leak-free.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SampleTable> {
    spec.validate()?;
    let centers = spec.centers();
    let n: usize = spec.per_class_count.iter().sum();
    let d = spec.feature_dim;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for c in 0..spec.class_count {
        let mut noise = Stream::new(mix(spec.seed, tags::SYNTH_NOISE, c as u64));
        let sigma = spec.per_class_noise[c];
        for _ in 0..spec.per_class_count[c] {
            for j in 0..d {
                let jitter = if sigma > 0.0 { sigma * noise.next_normal() } else { 0.0 };
                features[(row, j)] = centers[c][j] + jitter;
            }
            labels.push(c);
            row += 1;
        }
    }
    let feature_names = (0..d).map(|j| format!("f{j}")).collect();
    SampleTable::new(features, labels, spec.class_count, feature_names, BTreeMap::new())
}

/// Per-column kind in a CSV file, as declared by the optional directive row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

/// Load a comma-separated table.
///
/// Layout: a header row of column names, then an optional directive row
/// `#types: num,cat,label,...`, then data rows. Numeric cells must not be
/// quoted. The label column is named by the caller; `attribute_columns`
/// become sensitive-attribute code vectors and are excluded from the feature
/// matrix. Remaining columns are numeric unless the directive row marks them
/// `cat`, in which case they are one-hot encoded. Features are standardized
/// per column over the loaded rows (constant columns map to 0).
///
/// Label cells that all parse as non-negative integers are used verbatim
/// (`class_count` = max + 1); otherwise distinct values are sorted and coded
/// in that order. Categorical and attribute codes are assigned the same way.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    attribute_columns: &[&str],
) -> Result<SampleTable> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_csv(&text, label_column, attribute_columns)
}

fn parse_csv(text: &str, label_column: &str, attribute_columns: &[&str]) -> Result<SampleTable> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("csv file is empty".into()))?;
    let header: Vec<String> = header_line.split(',').map(|h| h.trim().to_string()).collect();
    let ncols = header.len();

    let mut rest = lines.peekable();
    let mut kinds = vec![ColumnKind::Numeric; ncols];
    if let Some(line) = rest.peek() {
        if let Some(spec) = line.strip_prefix("#types:") {
            let declared: Vec<&str> = spec.split(',').map(|k| k.trim()).collect();
            if declared.len() != ncols {
                return Err(Error::Schema(format!(
                    "directive row declares {} types for {ncols} columns",
                    declared.len()
                )));
            }
            for (j, k) in declared.iter().enumerate() {
                kinds[j] = match *k {
                    "num" => ColumnKind::Numeric,
                    "cat" => ColumnKind::Categorical,
                    "label" => ColumnKind::Label,
                    other => {
                        return Err(Error::Schema(format!(
                            "unknown column type `{other}` in directive row"
                        )))
                    }
                };
            }
            rest.next();
        }
    }

    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column `{label_column}` not found")))?;
    for (j, kind) in kinds.iter().enumerate() {
        if *kind == ColumnKind::Label && j != label_idx {
            return Err(Error::Schema(format!(
                "directive row marks `{}` as label but `{label_column}` was requested",
                header[j]
            )));
        }
    }
    kinds[label_idx] = ColumnKind::Label;

    let mut attr_idx = Vec::new();
    for a in attribute_columns {
        let j = header
            .iter()
            .position(|h| h == a)
            .ok_or_else(|| Error::Schema(format!("attribute column `{a}` not found")))?;
        if j == label_idx {
            return Err(Error::Schema(format!(
                "column `{a}` cannot be both label and attribute"
            )));
        }
        attr_idx.push(j);
    }

    // Gather raw cells column-wise.
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); ncols];
    for (row, line) in rest.enumerate() {
        let cells: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if cells.len() != ncols {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {ncols} cells, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            raw[j].push(cell.to_string());
        }
    }
    let n = raw[0].len();
    if n == 0 {
        return Err(Error::EmptyInput("csv file has no data rows".into()));
    }

    // Labels.
    let labels_raw = &raw[label_idx];
    let all_int = labels_raw.iter().all(|v| v.parse::<u64>().is_ok());
    let (labels, class_count) = if all_int {
        let values: Vec<usize> = labels_raw.iter().map(|v| v.parse::<usize>().unwrap()).collect();
        let c = values.iter().max().copied().unwrap_or(0) + 1;
        (values, c.max(2))
    } else {
        let codes = code_map(labels_raw);
        let labels = labels_raw.iter().map(|v| codes[v] as usize).collect();
        (labels, codes.len())
    };
    if class_count < 2 {
        return Err(Error::Data("label column has fewer than 2 classes".into()));
    }

    // Attributes.
    let mut attributes = BTreeMap::new();
    for (&j, name) in attr_idx.iter().zip(attribute_columns) {
        let codes = code_map(&raw[j]);
        let vec = raw[j].iter().map(|v| codes[v]).collect();
        attributes.insert((*name).to_string(), vec);
    }

    // Feature columns, expanded in header order.
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for j in 0..ncols {
        if j == label_idx || attr_idx.contains(&j) {
            continue;
        }
        match kinds[j] {
            ColumnKind::Numeric => {
                let mut col = Vec::with_capacity(n);
                for (row, cell) in raw[j].iter().enumerate() {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        column: header[j].clone(),
                        message: format!("`{cell}` is not numeric"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row,
                            column: header[j].clone(),
                            message: format!("`{cell}` is not finite"),
                        });
                    }
                    col.push(v);
                }
                columns.push((header[j].clone(), col));
            }
            ColumnKind::Categorical => {
                let codes = code_map(&raw[j]);
                let mut values: Vec<&String> = codes.keys().collect();
                values.sort();
                for value in values {
                    let col = raw[j].iter().map(|v| f64::from(v == value)).collect();
                    columns.push((format!("{}={value}", header[j]), col));
                }
            }
            ColumnKind::Label => unreachable!("label handled above"),
        }
    }
    if columns.is_empty() {
        return Err(Error::Schema("no feature columns remain".into()));
    }

    let d = columns.len();
    let mut features = Array2::zeros((n, d));
    for (j, (_, col)) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            features[(i, j)] = v;
        }
    }
    let feature_names = columns.into_iter().map(|(name, _)| name).collect();
    let table = SampleTable::new(features, labels, class_count, feature_names, attributes)?;
    let (means, stds) = table.column_stats();
    table.standardized(&means, &stds)
}

/// Sorted distinct values -> code, stable across runs.
fn code_map(values: &[String]) -> BTreeMap<String, u32> {
    let mut distinct: Vec<&String> = values.iter().collect();
    distinct.sort();
    distinct.dedup();
    distinct
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i as u32))
        .collect()
}
