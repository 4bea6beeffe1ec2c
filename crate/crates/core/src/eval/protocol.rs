use serde::{Deserialize, Serialize};

use super::{classification_metrics, train_linear_probe, EvalError, MetricRecord, ProbeHyper};
use crate::digest::sha256_hex;
use crate::numerics::DenseMatrix;
use crate::tag::{split_nodes, SplitStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub repeats: usize,
    pub train_fraction: f64,
    /// Fraction of the non-train nodes used for testing.
    pub test_fraction: f64,
    pub seed: u64,
    pub split: SplitStrategy,
    pub probe: ProbeHyper,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            train_fraction: 0.2,
            test_fraction: 0.1,
            seed: 0,
            split: SplitStrategy::Uniform,
            probe: ProbeHyper::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.repeats == 0 {
            return Err(EvalError::Config("repeats must be at least 1".into()));
        }
        self.probe.validate()
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat_index: usize,
    pub split_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: MetricRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: Vec<RepeatRecord>,
    pub mean: MetricRecord,
    /// Sample standard deviation (`n − 1` denominator).
    pub std: MetricRecord,
    /// True when there was a single repeat and `std` is 0 by convention.
    pub std_degenerate: bool,
    pub num_classes: usize,
    pub config: ProtocolConfig,
    pub config_digest: String,
}

impl MetricsReport {
    /// Aggregates repeat records, sorted by repeat index first.
    pub fn from_records(
        mut records: Vec<RepeatRecord>,
        num_classes: usize,
        config: ProtocolConfig,
    ) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        records.sort_by_key(|r| r.repeat_index);
        let n = records.len() as f64;
        let mut mean = [0.0; 4];
        for r in &records {
            for (m, v) in mean.iter_mut().zip(r.metrics.values()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; 4];
        if records.len() > 1 {
            for r in &records {
                for ((s, v), m) in std.iter_mut().zip(r.metrics.values()).zip(mean) {
                    *s += (v - m) * (v - m);
                }
            }
            std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
        }
        Ok(Self {
            std_degenerate: records.len() == 1,
            records,
            mean: MetricRecord::from_values(mean),
            std: MetricRecord::from_values(std),
            num_classes,
            config_digest: config.digest(),
            config,
        })
    }
}

/// Linear evaluation: `repeats` random splits, a fresh probe per split,
/// metrics on the held-out nodes, then mean and sample std.
pub fn run_protocol(
    embeddings: &DenseMatrix,
    labels: &[usize],
    config: &ProtocolConfig,
) -> Result<MetricsReport, EvalError> {
    config.validate()?;
    if labels.len() != embeddings.rows() {
        return Err(EvalError::Config(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            embeddings.rows()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let splits = split_nodes(
        labels,
        config.train_fraction,
        config.test_fraction,
        config.repeats,
        config.seed,
        config.split,
    )?;
    let mut records = Vec::with_capacity(splits.len());
    for split in &splits {
        if split.test_ids.is_empty() {
            return Err(EvalError::EmptyTestSet);
        }
        let probe = train_linear_probe(embeddings, labels, &split.train_ids, num_classes, &config.probe)?;
        let predicted = probe.predict(embeddings, &split.test_ids)?;
        let truth: Vec<usize> = split.test_ids.iter().map(|&i| labels[i]).collect();
        records.push(RepeatRecord {
            repeat_index: split.repeat_index,
            split_seed: split.seed,
            train_size: split.train_ids.len(),
            test_size: split.test_ids.len(),
            metrics: classification_metrics(&truth, &predicted, num_classes)?,
        });
    }
    MetricsReport::from_records(records, num_classes, *config)
}
