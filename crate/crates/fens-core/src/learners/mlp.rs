//! Multilayer perceptron with from-scratch backprop.
//!
//! Every random choice (weight init, batch order, augmentation noise) is
//! drawn from a caller-supplied stream, so a trained model is a pure
//! function of (config, data, streams).

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::SampleTable;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Input-side randomization applied per batch during training. Both knobs at
/// zero disables augmentation entirely, including stream consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Standard deviation of additive Gaussian feature noise.
    pub gaussian_sigma: f64,
    /// Probability of independently zeroing each feature cell.
    pub feature_dropout_prob: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            gaussian_sigma: 0.05,
            feature_dropout_prob: 0.05,
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        AugmentationConfig {
            gaussian_sigma: 0.0,
            feature_dropout_prob: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.gaussian_sigma > 0.0 || self.feature_dropout_prob > 0.0
    }

    fn validate(&self) -> Result<()> {
        if !self.gaussian_sigma.is_finite() || self.gaussian_sigma < 0.0 {
            return Err(Error::InvalidArgument(
                "gaussian_sigma must be finite and non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.feature_dropout_prob) {
            return Err(Error::InvalidArgument(
                "feature_dropout_prob must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch learning-rate policy. Constant is the default; warmup plus
/// cosine decay is available for configs that want it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    WarmupCosine {
        warmup_epochs: usize,
    },
}

impl LrSchedule {
    /// Effective rate for `epoch` (0-based) out of `total` epochs.
    pub fn rate(&self, base: f64, epoch: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::WarmupCosine { warmup_epochs } => {
                if epoch < warmup_epochs {
                    base * (epoch + 1) as f64 / warmup_epochs as f64
                } else {
                    let span = (total - warmup_epochs).max(1) as f64;
                    let progress = (epoch - warmup_epochs) as f64 / span;
                    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
                }
            }
        }
    }
}

/// Network architecture and optimizer settings.
///
/// `layer_sizes` runs input dim, hidden widths, class count. The optimizer
/// is SGD with momentum and decoupled weight decay (decay applied to weights
/// directly, scaled by the learning rate, never to biases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
}

impl MLPConfig {
    /// Default architecture for a `feature_dim` -> `class_count` problem:
    /// hidden layers [64, 32], lr 0.05, momentum 0.9, weight decay 5e-4,
    /// batch 128, 30 epochs, augmentation sigma 0.05 / dropout 0.05.
    pub fn with_dims(feature_dim: usize, class_count: usize) -> Self {
        MLPConfig {
            layer_sizes: vec![feature_dim, 64, 32, class_count],
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 30,
            augmentation: AugmentationConfig::default(),
            schedule: LrSchedule::Constant,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "layer_sizes needs at least input and output".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if *self.layer_sizes.last().unwrap() < 2 {
            return Err(Error::InvalidArgument(
                "output layer needs at least 2 classes".into(),
            ));
        }
        // A zero rate is allowed so that no-op training stays expressible.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "weight_decay must be finite and non-negative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if let LrSchedule::WarmupCosine { warmup_epochs } = self.schedule {
            if warmup_epochs > self.epochs {
                return Err(Error::InvalidArgument(
                    "warmup_epochs cannot exceed epochs".into(),
                ));
            }
        }
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Shape out x in.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// A (possibly trained) network. Parameters are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MLPModel {
    config: MLPConfig,
    layers: Vec<DenseLayer>,
}

/// Per-epoch test accuracy recorded during training; length equals the
/// configured epoch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub test_accuracy: Vec<f64>,
}

struct LayerGrad {
    dw: Array2<f64>,
    db: Array1<f64>,
}

/// Glorot-uniform initialization: each weight uniform on
/// (-sqrt(6/(fan_in+fan_out)), +...), drawn layer by layer in row-major
/// order; biases zero.
pub fn mlp_init(config: &MLPConfig, init_stream: &mut Stream) -> Result<MLPModel> {
    config.validate()?;
    let mut layers = Vec::with_capacity(config.layer_sizes.len() - 1);
    for pair in config.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values: Vec<f64> = (0..fan_out * fan_in)
            .map(|_| init_stream.uniform(-limit, limit))
            .collect();
        let weight = Array2::from_shape_vec((fan_out, fan_in), values)
            .expect("length matches shape by construction");
        layers.push(DenseLayer {
            weight,
            bias: Array1::zeros(fan_out),
        });
    }
    Ok(MLPModel {
        config: config.clone(),
        layers,
    })
}

impl MLPModel {
    pub fn config(&self) -> &MLPConfig {
        &self.config
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count()
    }

    /// All-zero parameters; useful as a symmetric reference point.
    pub fn zeroed(config: &MLPConfig) -> Result<MLPModel> {
        config.validate()?;
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|pair| DenseLayer {
                weight: Array2::zeros((pair[1], pair[0])),
                bias: Array1::zeros(pair[1]),
            })
            .collect();
        Ok(MLPModel {
            config: config.clone(),
            layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// Rebuild a model from [`flat_params`](Self::flat_params) order.
    pub fn from_flat(config: MLPConfig, values: &[f64]) -> Result<MLPModel> {
        let mut model = MLPModel::zeroed(&config)?;
        if values.len() != model.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, config implies {}",
                values.len(),
                model.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("model parameters must be finite".into()));
        }
        let mut cursor = values.iter().copied();
        for layer in &mut model.layers {
            for w in layer.weight.iter_mut() {
                *w = cursor.next().expect("length checked");
            }
            for b in layer.bias.iter_mut() {
                *b = cursor.next().expect("length checked");
            }
        }
        Ok(model)
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.weight.len() {
                return (l, false, idx);
            }
            idx -= layer.weight.len();
            if idx < layer.bias.len() {
                return (l, true, idx);
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (l, is_bias, off) = self.locate(idx);
        let layer = &mut self.layers[l];
        if is_bias {
            &mut layer.bias.as_slice_mut().expect("standard layout")[off]
        } else {
            &mut layer.weight.as_slice_mut().expect("standard layout")[off]
        }
    }

    fn check_features(&self, features: &Array2<f64>) -> Result<()> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "{} feature columns, model expects {}",
                features.ncols(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    fn logits(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut a = features.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t()) + &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Softmax class probabilities, one row per input row; rows sum to 1.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_features(features)?;
        let mut z = self.logits(features);
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        Ok(z)
    }

    /// Argmax labels with lowest-index tie-break.
    pub fn predict_labels(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        self.check_features(features)?;
        let logits = self.logits(features);
        Ok(logits.rows().into_iter().map(argmax_row).collect())
    }

    /// Mean softmax cross-entropy of `features` against `labels`.
    pub fn loss(&self, features: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        self.check_features(features)?;
        if labels.len() != features.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.class_count()) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} classes",
                self.class_count()
            )));
        }
        let logits = self.logits(features);
        let mut total = 0.0;
        for (row, &y) in logits.rows().into_iter().zip(labels) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        Ok(total / labels.len() as f64)
    }

    /// Full forward/backward pass over one batch.
    fn loss_and_grads(&self, x: &Array2<f64>, y: &[usize]) -> (f64, Vec<LayerGrad>) {
        let b = x.nrows() as f64;
        let last = self.layers.len() - 1;

        // acts[l] is the input to layer l; acts[0] is the batch itself.
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weight.t()) + &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
                acts.push(z);
            } else {
                acts.push(z); // raw logits for the output layer
            }
        }
        let logits = acts.pop().expect("pushed above");

        let mut loss = 0.0;
        let mut probs = logits;
        for (mut row, &yi) in probs.rows_mut().into_iter().zip(y) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[yi];
            row.mapv_inplace(|v| (v - lse).exp());
        }
        loss /= b;

        // dL/dlogits = (P - onehot) / B.
        let mut delta = probs;
        for (i, &yi) in y.iter().enumerate() {
            delta[(i, yi)] -= 1.0;
        }
        delta.mapv_inplace(|v| v / b);

        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            grads.push(LayerGrad {
                dw: delta.t().dot(&acts[l]),
                db: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weight);
                // ReLU subgradient: pass where the activation was positive.
                back.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    fn test_accuracy(&self, table: &SampleTable) -> Result<f64> {
        let pred = self.predict_labels(table.features())?;
        let hits = pred
            .iter()
            .zip(table.labels())
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / table.len() as f64)
    }
}

fn argmax_row(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Train `model` in place over its configured epoch count.
///
/// Each epoch draws a fresh row permutation from `order_stream`, slices it
/// into batches (last one may be short), optionally perturbs each batch from
/// `aug_stream` (additive Gaussian noise first, then independent feature
/// zeroing, both cell by cell in row-major order), and applies one SGD step
/// per batch. End-of-epoch test accuracy goes to the returned log.
///
/// When augmentation is disabled `aug_stream` is never touched, so an
/// augmentation-only ablation provably changes nothing.
pub fn mlp_train(
    mut model: MLPModel,
    train: &SampleTable,
    test: &SampleTable,
    order_stream: &mut Stream,
    aug_stream: &mut Stream,
) -> Result<(MLPModel, TrajectoryLog)> {
    let config = model.config.clone();
    if train.dim() != config.feature_dim() || test.dim() != config.feature_dim() {
        return Err(Error::Shape(format!(
            "feature dim {} (train) / {} (test), model expects {}",
            train.dim(),
            test.dim(),
            config.feature_dim()
        )));
    }
    if train.class_count() != config.class_count() || test.class_count() != config.class_count() {
        return Err(Error::Shape(format!(
            "class count {} (train) / {} (test), model expects {}",
            train.class_count(),
            test.class_count(),
            config.class_count()
        )));
    }

    let augment = config.augmentation.is_active();
    let sigma = config.augmentation.gaussian_sigma;
    let drop_p = config.augmentation.feature_dropout_prob;

    let mut velocity: Vec<LayerGrad> = model
        .layers
        .iter()
        .map(|l| LayerGrad {
            dw: Array2::zeros(l.weight.raw_dim()),
            db: Array1::zeros(l.bias.raw_dim()),
        })
        .collect();

    let mut log = TrajectoryLog {
        test_accuracy: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(config.learning_rate, epoch, config.epochs);
        let perm = order_stream.permutation(train.len());
        for rows in perm.chunks(config.batch_size) {
            let mut x = train.features().select(Axis(0), rows);
            let y: Vec<usize> = rows.iter().map(|&r| train.labels()[r]).collect();
            if augment {
                if sigma > 0.0 {
                    for v in x.iter_mut() {
                        *v += sigma * aug_stream.next_normal();
                    }
                }
                if drop_p > 0.0 {
                    for v in x.iter_mut() {
                        if aug_stream.next_f64() < drop_p {
                            *v = 0.0;
                        }
                    }
                }
            }
            let (loss, grads) = model.loss_and_grads(&x, &y);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("batch loss became {loss}"),
                });
            }
            for ((layer, vel), grad) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                vel.dw.zip_mut_with(&grad.dw, |v, &g| *v = config.momentum * *v + g);
                vel.db.zip_mut_with(&grad.db, |v, &g| *v = config.momentum * *v + g);
                // Decoupled decay: shrink weights directly, never biases.
                layer
                    .weight
                    .zip_mut_with(&vel.dw, |w, &v| *w -= lr * v + lr * config.weight_decay * *w);
                layer.bias.zip_mut_with(&vel.db, |b, &v| *b -= lr * v);
            }
        }
        log.test_accuracy.push(model.test_accuracy(test)?);
    }
    Ok((model, log))
}

/// Outcome of comparing analytic gradients to central finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Compare the analytic gradient of the mean cross-entropy to central finite
/// differences with step `h`, parameter by parameter. The relative error
/// denominator is `max(1, |analytic|, |numeric|)` so near-zero gradients are
/// judged on absolute terms.
pub fn gradient_check(
    model: &MLPModel,
    features: &Array2<f64>,
    labels: &[usize],
    h: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument("step h must be positive".into()));
    }
    if features.nrows() == 0 || features.nrows() > 8 {
        return Err(Error::InvalidArgument(
            "probe batch must have between 1 and 8 rows".into(),
        ));
    }
    model.check_features(features)?;
    if labels.len() != features.nrows() {
        return Err(Error::Shape("probe labels do not match rows".into()));
    }

    let (_, grads) = model.loss_and_grads(features, labels);
    let mut analytic = Vec::with_capacity(model.param_count());
    for g in &grads {
        analytic.extend(g.dw.iter().copied());
        analytic.extend(g.db.iter().copied());
    }

    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(idx);
        *probe.param_mut(idx) = original + h;
        let up = probe.loss(features, labels)?;
        *probe.param_mut(idx) = original - h;
        let down = probe.loss(features, labels)?;
        *probe.param_mut(idx) = original;
        let numeric = (up - down) / (2.0 * h);
        let abs = (a - numeric).abs();
        let rel = abs / 1.0f64.max(a.abs()).max(numeric.abs());
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
    })
}

/// Initialize a fresh network from `init_stream` and run [`gradient_check`]
/// with h = 1e-4.
pub fn mlp_gradient_check(
    config: &MLPConfig,
    features: &Array2<f64>,
    labels: &[usize],
    init_stream: &mut Stream,
) -> Result<GradCheckReport> {
    let model = mlp_init(config, init_stream)?;
    gradient_check(&model, features, labels, 1e-4)
}
