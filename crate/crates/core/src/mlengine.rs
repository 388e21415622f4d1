//! Multinomial logistic regression over flattened window features.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::AgcClass;
use crate::receiver::{METRIC_COUNT, METRIC_NAMES};
use crate::seed;
use crate::signalgen::WindowSample;

pub const MODEL_SCHEMA_VERSION: u32 = 1;
const STD_FLOOR: f64 = 1e-6;

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(dim: usize) -> Self {
        FeatureScaler { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Usage("cannot fit a scaler on zero rows".into()))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            check_len(dim, r.len())?;
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(FeatureScaler { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected: format!("{expected} features"), got: format!("{got} features") });
    }
    Ok(())
}

/// Class scores `W x + b`; `weights` is row-major, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearModel { classes, dim, weights: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    /// Weights drawn from N(0, 0.01^2), zero bias.
    pub fn init(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let weights = (0..classes * dim).map(|_| normal.sample(&mut rng)).collect();
        LinearModel { classes, dim, weights, bias: vec![0.0; classes] }
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes).map(|c| dot(self.row(c), x) + self.bias[c]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value, the lowest index among ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Weighted mean cross-entropy plus `l2 / 2 * |W|^2` (bias unpenalized),
/// and its gradient with respect to weights and bias.
pub fn loss_and_grad(
    model: &LinearModel,
    x: &[Vec<f64>],
    y: &[usize],
    class_weights: &[f64],
    l2: f64,
) -> (f64, LinearModel) {
    let n = x.len() as f64;
    let mut grad = LinearModel::zeros(model.classes, model.dim);
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let p = softmax(&model.scores(xi));
        let w = class_weights[yi];
        loss -= w * p[yi].max(f64::MIN_POSITIVE).ln();
        for (c, pc) in p.iter().enumerate() {
            let dz = w * (pc - if c == yi { 1.0 } else { 0.0 }) / n;
            grad.bias[c] += dz;
            for (g, xv) in grad.weights[c * model.dim..(c + 1) * model.dim].iter_mut().zip(xi) {
                *g += dz * xv;
            }
        }
    }
    loss /= n;
    loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Per-class loss weights; `None` weights every class equally.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { lr: 0.5, epochs: 300, l2: 1e-4, seed: 1, class_weights: None }
    }
}

/// Inverse-frequency weights normalized to mean 1 over present classes.
pub fn balanced_class_weights(y: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &c in y {
        counts[c] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1) as f64;
    let n = y.len() as f64;
    counts.iter().map(|&c| if c == 0 { 1.0 } else { n / (present * c as f64) }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: LinearModel,
    pub best_epoch: usize,
    pub curve: Vec<EpochStat>,
}

/// Full-batch gradient descent on already-encoded rows.
///
/// Keeps the parameters of the epoch with the best validation accuracy
/// (earliest on ties); without validation rows, the last epoch wins.
pub fn fit_linear(
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    val: Option<(&[Vec<f64>], &[usize])>,
    hyper: &Hyper,
) -> Result<FitResult> {
    let Some(first) = x.first() else {
        return Err(Error::Usage("training set is empty".into()));
    };
    if x.len() != y.len() {
        return Err(Error::Shape { expected: format!("{} labels", x.len()), got: format!("{} labels", y.len()) });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::Usage(format!("label {bad} outside {classes} classes")));
    }
    let dim = first.len();
    let weights = match &hyper.class_weights {
        Some(w) if w.len() != classes => {
            return Err(Error::Shape { expected: format!("{classes} class weights"), got: format!("{}", w.len()) })
        }
        Some(w) => w.clone(),
        None => vec![1.0; classes],
    };
    let mut seen = vec![false; classes];
    y.iter().for_each(|&c| seen[c] = true);
    let missing: Vec<usize> = (0..classes).filter(|&c| !seen[c]).collect();
    if !missing.is_empty() {
        log::warn!("classes {missing:?} have no training samples");
    }

    let mut model = LinearModel::init(classes, dim, hyper.seed);
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        let (loss, grad) = loss_and_grad(&model, x, y, &weights, hyper.l2);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= hyper.lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= hyper.lr * g;
        }
        if model.weights.iter().chain(&model.bias).any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        let val_accuracy = val.filter(|(vx, _)| !vx.is_empty()).map(|(vx, vy)| accuracy_of(&model, vx, vy));
        let score = val_accuracy.unwrap_or(0.0);
        if score > best.2 || val_accuracy.is_none() {
            best = (model.clone(), epoch, score);
        }
        curve.push(EpochStat { epoch, train_loss: loss, val_accuracy });
    }
    if hyper.epochs == 0 {
        log::warn!("zero epochs requested; returning the initial weights");
    }
    Ok(FitResult { model: best.0, best_epoch: best.1, curve })
}

fn accuracy_of(model: &LinearModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let hits = x.iter().zip(y).filter(|(xi, &yi)| argmax(&model.scores(xi)) == yi).count();
    hits as f64 / x.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_loss: f64,
    pub seed: u64,
    pub window_len: usize,
    pub metric_names: Vec<String>,
    pub hyper: Hyper,
    pub curve: Vec<EpochStat>,
    /// Hash of the experiment config that produced the model, when known.
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    /// Class names by id: gain codes, then `X`.
    pub class_map: Vec<String>,
    pub scaler: FeatureScaler,
    pub linear: LinearModel,
    pub training_meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: AgcClass,
    pub class_id: usize,
    pub scores: Vec<f64>,
}

impl TrainedModel {
    pub fn window_len(&self) -> usize {
        self.training_meta.window_len
    }

    pub fn gain_levels(&self) -> usize {
        self.class_map.len() - 1
    }

    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len(self.window_len() * METRIC_COUNT, features.len())?;
        self.scaler.transform(features)
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<Prediction> {
        let z = self.linear.scores(&self.encode(features)?);
        Ok(self.prediction(softmax(&z)))
    }

    /// Same decision as [`predict_features`](Self::predict_features) with the
    /// scaler folded into the weights.
    pub fn predict_raw(&self, features: &[f64]) -> Result<Prediction> {
        check_len(self.window_len() * METRIC_COUNT, features.len())?;
        let folded = self.folded();
        Ok(self.prediction(softmax(&folded.scores(features))))
    }

    /// Linear model acting directly on unscaled features.
    pub fn folded(&self) -> LinearModel {
        let l = &self.linear;
        let mut out = LinearModel::zeros(l.classes, l.dim);
        for c in 0..l.classes {
            let mut b = l.bias[c];
            for j in 0..l.dim {
                let w = l.weights[c * l.dim + j] / self.scaler.std[j];
                out.weights[c * l.dim + j] = w;
                b -= w * self.scaler.mean[j];
            }
            out.bias[c] = b;
        }
        out
    }

    fn prediction(&self, scores: Vec<f64>) -> Prediction {
        let class_id = argmax(&scores);
        let class = AgcClass::from_id(class_id, self.gain_levels()).expect("class id within class map");
        Prediction { class, class_id, scores }
    }

    pub fn predict(&self, window: &WindowSample) -> Result<Prediction> {
        if window.window_len != self.window_len() {
            return Err(Error::Shape {
                expected: format!("window of {}", self.window_len()),
                got: format!("window of {}", window.window_len),
            });
        }
        self.predict_features(&window.features)
    }
}

pub fn class_map(gain_levels: usize) -> Vec<String> {
    (0..=gain_levels).map(|id| AgcClass::from_id(id, gain_levels).expect("in range").to_string()).collect()
}

/// Fit scaler and classifier on window samples.
pub fn train(
    train_set: &[WindowSample],
    val_set: &[WindowSample],
    gain_levels: usize,
    hyper: &Hyper,
) -> Result<TrainedModel> {
    let first = train_set.first().ok_or_else(|| Error::Usage("training set is empty".into()))?;
    let window_len = first.window_len;
    let dim = window_len * METRIC_COUNT;
    for w in train_set.iter().chain(val_set) {
        if w.window_len != window_len {
            return Err(Error::Shape { expected: format!("window of {window_len}"), got: format!("window of {}", w.window_len) });
        }
        check_len(dim, w.features.len())?;
    }
    let raw: Vec<Vec<f64>> = train_set.iter().map(|w| w.features.clone()).collect();
    let scaler = FeatureScaler::fit(&raw)?;
    let encode = |set: &[WindowSample]| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let x = set.iter().map(|w| scaler.transform(&w.features)).collect::<Result<Vec<_>>>()?;
        Ok((x, set.iter().map(|w| w.label.id(gain_levels)).collect()))
    };
    let (x, y) = encode(train_set)?;
    let (vx, vy) = encode(val_set)?;
    let fit = fit_linear(&x, &y, gain_levels + 1, Some((&vx, &vy)), hyper)?;
    let final_loss = fit.curve.last().map_or(f64::NAN, |s| s.train_loss);
    log::info!(
        "trained on {} windows, best epoch {} of {}, final loss {final_loss:.4}",
        x.len(),
        fit.best_epoch,
        hyper.epochs
    );
    Ok(TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        class_map: class_map(gain_levels),
        scaler,
        linear: fit.model,
        training_meta: TrainingMeta {
            epochs: hyper.epochs,
            best_epoch: fit.best_epoch,
            final_loss,
            seed: hyper.seed,
            window_len,
            metric_names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            hyper: hyper.clone(),
            curve: fit.curve,
            config_hash: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Recall per class id, undefined for classes absent from the samples.
    pub recall: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    /// Accuracy of always answering the most frequent true class.
    pub majority_baseline: f64,
}

pub fn evaluate(model: &TrainedModel, samples: &[WindowSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot evaluate on zero samples".into()));
    }
    let k = model.class_map.len();
    let g = model.gain_levels();
    let preds: Vec<usize> =
        samples.par_iter().map(|w| model.predict(w).map(|p| p.class_id)).collect::<Result<_>>()?;
    let mut confusion = vec![vec![0usize; k]; k];
    for (w, p) in samples.iter().zip(&preds) {
        confusion[w.label.id(g)][*p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    let n = samples.len() as f64;
    Ok(Evaluation {
        accuracy: trace as f64 / n,
        recall: (0..k).map(|c| (support[c] > 0).then(|| confusion[c][c] as f64 / support[c] as f64)).collect(),
        majority_baseline: *support.iter().max().expect("k >= 1") as f64 / n,
        confusion,
        support,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let load_err = |reason: String| Error::Load { path: path.to_path_buf(), reason };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_SCHEMA_VERSION) => {}
        Some(v) => return Err(load_err(format!("schema version {v}, expected {MODEL_SCHEMA_VERSION}"))),
        None => return Err(load_err("no schema_version field".into())),
    }
    let model: TrainedModel = serde_json::from_value(value).map_err(|e| load_err(e.to_string()))?;
    let l = &model.linear;
    let dim = model.training_meta.window_len * METRIC_COUNT;
    if model.class_map.len() < 2
        || l.classes != model.class_map.len()
        || l.dim != dim
        || l.weights.len() != l.classes * l.dim
        || l.bias.len() != l.classes
        || model.scaler.dim() != dim
        || model.scaler.std.len() != dim
    {
        return Err(load_err("inconsistent model dimensions".into()));
    }
    Ok(model)
}

pub fn write_curve_csv(model: &TrainedModel, header_comment: &str, path: &Path) -> Result<()> {
    let mut w = crate::artifacts::csv_writer(path, header_comment)?;
    w.write_record(["epoch", "train_loss", "val_accuracy"])?;
    for s in &model.training_meta.curve {
        w.write_record([
            s.epoch.to_string(),
            format!("{:.12}", s.train_loss),
            s.val_accuracy.map_or(String::new(), |a| format!("{a:.6}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}
