use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::numerics::{adam_step, AdamState, DenseMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeObjective {
    /// Multinomial logistic regression.
    #[default]
    Softmax,
    /// Multiclass hinge loss, `max(0, 1 + max_{c≠y} s_c − s_y)`.
    Hinge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the `λ‖W‖²` penalty. The bias is not penalized.
    pub lambda: f64,
    pub objective: ProbeObjective,
    /// Z-score features with train-split statistics before fitting.
    pub standardize: bool,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            lambda: 1e-4,
            objective: ProbeObjective::Softmax,
            standardize: true,
        }
    }
}

impl ProbeHyper {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.epochs > 0
            && self.lambda.is_finite()
            && self.lambda >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(EvalError::Config(format!("invalid probe hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    /// `d x C`.
    pub weight: DenseMatrix,
    /// `1 x C`.
    pub bias: DenseMatrix,
    /// Per-feature shift and scale applied before the linear map.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub hyper: ProbeHyper,
    /// Training objective after each epoch.
    pub loss_trace: Vec<f64>,
}

impl ProbeParams {
    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }

    /// Logits for the given rows of `embeddings`.
    pub fn logits(&self, embeddings: &DenseMatrix, ids: &[usize]) -> Result<DenseMatrix, EvalError> {
        let x = standardized(embeddings, ids, &self.feature_mean, &self.feature_scale)?;
        Ok(x.matmul(&self.weight)?.add_bias(&self.bias)?)
    }

    /// Argmax of the logits; ties go to the lowest class index.
    pub fn predict(&self, embeddings: &DenseMatrix, ids: &[usize]) -> Result<Vec<usize>, EvalError> {
        let z = self.logits(embeddings, ids)?;
        Ok((0..z.rows()).map(|r| argmax(z.row(r))).collect())
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

fn standardized(
    embeddings: &DenseMatrix,
    ids: &[usize],
    mean: &[f64],
    scale: &[f64],
) -> Result<DenseMatrix, EvalError> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= embeddings.rows()) {
        return Err(EvalError::Config(format!(
            "node {bad} outside embedding matrix of {} rows",
            embeddings.rows()
        )));
    }
    if mean.len() != embeddings.cols() {
        return Err(EvalError::Config(format!(
            "probe expects {} features, embeddings have {}",
            mean.len(),
            embeddings.cols()
        )));
    }
    let mut x = embeddings.gather_rows(ids);
    for r in 0..x.rows() {
        for ((v, m), s) in x.row_mut(r).iter_mut().zip(mean).zip(scale) {
            *v = (*v - m) / s;
        }
    }
    Ok(x)
}

fn feature_stats(embeddings: &DenseMatrix, ids: &[usize], standardize: bool) -> (Vec<f64>, Vec<f64>) {
    let d = embeddings.cols();
    if !standardize {
        return (vec![0.0; d], vec![1.0; d]);
    }
    let n = ids.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in ids {
        for (m, v) in mean.iter_mut().zip(embeddings.row(i)) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for &i in ids {
        for ((s, v), m) in var.iter_mut().zip(embeddings.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    // Constant features keep scale 1 so they map to zero instead of NaN.
    let scale = var
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

/// Objective value and gradients with respect to `(W, b)`.
fn objective(
    x: &DenseMatrix,
    y: &[usize],
    w: &DenseMatrix,
    b: &DenseMatrix,
    hyper: &ProbeHyper,
) -> Result<(f64, DenseMatrix, DenseMatrix), EvalError> {
    let n = x.rows() as f64;
    let z = x.matmul(w)?.add_bias(b)?;
    let c = z.cols();
    let mut g = DenseMatrix::zeros(z.rows(), c);
    let mut data_loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = z.row(r);
        match hyper.objective {
            ProbeObjective::Softmax => {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                data_loss += max + sum.ln() - row[label];
                for (k, gv) in g.row_mut(r).iter_mut().enumerate() {
                    let p = (row[k] - max).exp() / sum;
                    *gv = (p - if k == label { 1.0 } else { 0.0 }) / n;
                }
            }
            ProbeObjective::Hinge => {
                let rival = (0..c)
                    .filter(|&k| k != label)
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)));
                if let Some(k) = rival {
                    let margin = 1.0 + row[k] - row[label];
                    if margin > 0.0 {
                        data_loss += margin;
                        let gr = g.row_mut(r);
                        gr[k] += 1.0 / n;
                        gr[label] -= 1.0 / n;
                    }
                }
            }
        }
    }
    let loss = data_loss / n + hyper.lambda * w.frobenius_sq();
    let mut gw = x.transpose_a_matmul(&g)?;
    gw.add_assign(&w.scale(2.0 * hyper.lambda))?;
    let mut gb = DenseMatrix::zeros(1, c);
    for r in 0..g.rows() {
        for (acc, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
            *acc += v;
        }
    }
    Ok((loss, gw, gb))
}

/// Fits a linear probe on `train_ids` with zero-initialized weights and
/// full-batch Adam.
pub fn train_linear_probe(
    embeddings: &DenseMatrix,
    labels: &[usize],
    train_ids: &[usize],
    num_classes: usize,
    hyper: &ProbeHyper,
) -> Result<ProbeParams, EvalError> {
    hyper.validate()?;
    if labels.len() != embeddings.rows() {
        return Err(EvalError::Config(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            embeddings.rows()
        )));
    }
    if !embeddings.is_finite() {
        return Err(EvalError::NonFinite("embeddings".into()));
    }
    let y: Vec<usize> = train_ids
        .iter()
        .map(|&i| labels.get(i).copied())
        .collect::<Option<_>>()
        .ok_or_else(|| EvalError::Config("train id outside the label range".into()))?;
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(EvalError::Config(format!("label {bad} >= class count {num_classes}")));
    }
    let mut present: Vec<usize> = y.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(EvalError::SingleClassTrain);
    }

    let (feature_mean, feature_scale) = feature_stats(embeddings, train_ids, hyper.standardize);
    let x = standardized(embeddings, train_ids, &feature_mean, &feature_scale)?;
    let mut w = DenseMatrix::zeros(x.cols(), num_classes);
    let mut b = DenseMatrix::zeros(1, num_classes);
    let mut adam = AdamState::new([&w, &b]);
    let mut loss_trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let (loss, gw, gb) = objective(&x, &y, &w, &b, hyper)?;
        if !loss.is_finite() {
            return Err(EvalError::NonFinite(format!("probe loss at epoch {epoch}")));
        }
        adam_step(&mut [&mut w, &mut b], &[&gw, &gb], &mut adam, hyper.learning_rate)?;
        loss_trace.push(objective(&x, &y, &w, &b, hyper)?.0);
    }
    Ok(ProbeParams {
        weight: w,
        bias: b,
        feature_mean,
        feature_scale,
        hyper: *hyper,
        loss_trace,
    })
}
