use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricRecord {
    pub const NAMES: [&'static str; 4] = ["accuracy", "macro_precision", "macro_recall", "macro_f1"];

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Self {
            accuracy: v[0],
            macro_precision: v[1],
            macro_recall: v[2],
            macro_f1: v[3],
        }
    }
}

/// Accuracy plus macro-averaged precision, recall and F1 over `num_classes`.
/// A class with no predictions (or no true members) scores 0 on the
/// undefined ratio and still counts in the average.
pub fn classification_metrics(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<MetricRecord, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if truth.len() != predicted.len() {
        return Err(EvalError::Config(format!(
            "{} labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if let Some(&bad) = truth.iter().chain(predicted).find(|&&c| c >= num_classes) {
        return Err(EvalError::Config(format!("class {bad} >= class count {num_classes}")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        true_count[t] += 1;
        pred_count[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..num_classes {
        let p = ratio(tp[c], pred_count[c]);
        let r = ratio(tp[c], true_count[c]);
        p_sum += p;
        r_sum += r;
        f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let k = num_classes as f64;
    Ok(MetricRecord {
        accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        macro_f1: f_sum / k,
    })
}
