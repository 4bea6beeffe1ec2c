use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batching::{sample_negative_positions, STREAM_INIT, STREAM_NEGATIVES};
use super::{batch_info_nce, plan_batches, ContrastiveError, LossConfig};
use crate::encoder::{encode_nodes, init_params, propagation_matrix, AdaptorConfig, EncoderConfig, EncoderStack};
use crate::numerics::{adam_step, AdamState, CsrMatrix, DenseMatrix, NumericsError, Rng, Tape};
use crate::tag::TextAttributedGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub adaptor: AdaptorConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 10,
            learning_rate: 2e-5,
            seed: 0,
            loss: LossConfig::default(),
            adaptor: AdaptorConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        if self.batch_size < 2 {
            return Err(ContrastiveError::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(ContrastiveError::Config("epochs must be at least 1".into()));
        }
        // Zero is allowed: it freezes the parameters.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ContrastiveError::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        self.loss.validate()?;
        self.encoder.validate()?;
        if self.adaptor.enabled && self.adaptor.out_dim == 0 {
            return Err(ContrastiveError::Config("adaptor out_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub config: TrainConfig,
    pub node_count: usize,
    pub input_dim: usize,
    pub parameter_count: usize,
    pub steps: usize,
    pub version: String,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub stack: EncoderStack,
    pub h_final: DenseMatrix,
    pub loss_trace: Vec<EpochStats>,
    pub metadata: TrainMetadata,
}

/// Fresh parameters for `cfg`, drawn from the seed's init stream.
pub fn init_stack(cfg: &TrainConfig, input_dim: usize) -> Result<EncoderStack, ContrastiveError> {
    let mut rng = Rng::derived(cfg.seed, STREAM_INIT, 0);
    Ok(init_params(
        &mut rng,
        input_dim,
        &cfg.encoder.dims(),
        cfg.encoder.kind,
        &cfg.adaptor,
    )?)
}

/// Loss and parameter gradients for one batch.
pub struct StepOutput {
    pub loss: f64,
    pub gradients: Vec<DenseMatrix>,
}

/// Negative positions for every target of a batch. Requests larger than the
/// batch are clamped to the rest of the batch.
pub fn batch_negatives(batch_len: usize, cfg: &LossConfig, rng: &mut Rng) -> Result<Vec<Vec<usize>>, ContrastiveError> {
    let m = cfg.negatives_per_target.resolve(batch_len).min(batch_len - 1);
    let negatives = super::Negatives::Count(m);
    (0..batch_len)
        .map(|p| sample_negative_positions(batch_len, p, negatives, rng))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn batch_forward(
    tape: &mut Tape,
    stack: &EncoderStack,
    propagation: &Arc<CsrMatrix>,
    h: &DenseMatrix,
    h_aug: &DenseMatrix,
    batch: &[usize],
    negatives: &[Vec<usize>],
    loss: &LossConfig,
) -> Result<(crate::numerics::Var, Vec<crate::numerics::Var>), ContrastiveError> {
    let bound = stack.bind(tape);
    let x = tape.constant(h.clone());
    let xs = tape.constant(h_aug.clone());
    let z = bound.encode(tape, propagation, x)?;
    let zs = bound.encode(tape, propagation, xs)?;
    let l = batch_info_nce(tape, z, zs, batch, negatives, loss)?;
    Ok((l, bound.params()))
}

/// Forward pass of both views through the shared stack, then the batch loss.
pub fn contrastive_loss(
    stack: &EncoderStack,
    propagation: &Arc<CsrMatrix>,
    h: &DenseMatrix,
    h_aug: &DenseMatrix,
    batch: &[usize],
    negatives: &[Vec<usize>],
    loss: &LossConfig,
) -> Result<f64, ContrastiveError> {
    let mut tape = Tape::new();
    let (l, _) = batch_forward(&mut tape, stack, propagation, h, h_aug, batch, negatives, loss)?;
    Ok(tape.value(l).get(0, 0))
}

/// [`contrastive_loss`] plus gradients in [`EncoderStack::parameters`] order.
pub fn contrastive_step(
    stack: &EncoderStack,
    propagation: &Arc<CsrMatrix>,
    h: &DenseMatrix,
    h_aug: &DenseMatrix,
    batch: &[usize],
    negatives: &[Vec<usize>],
    loss: &LossConfig,
) -> Result<StepOutput, ContrastiveError> {
    let mut tape = Tape::new();
    let (l, params) = batch_forward(&mut tape, stack, propagation, h, h_aug, batch, negatives, loss)?;
    let grads = tape.backward(l)?;
    Ok(StepOutput {
        loss: tape.value(l).get(0, 0),
        gradients: params
            .iter()
            .map(|&p| grads.get(p).cloned().expect("gradient for every parameter"))
            .collect(),
    })
}

fn check_inputs(graph: &TextAttributedGraph, h: &DenseMatrix, h_aug: &DenseMatrix) -> Result<(), ContrastiveError> {
    let n = graph.node_count();
    if h.rows() != n || h_aug.shape() != h.shape() {
        return Err(ContrastiveError::Shape(format!(
            "graph has {n} nodes, features are {:?} and {:?}",
            h.shape(),
            h_aug.shape()
        )));
    }
    if !h.is_finite() || !h_aug.is_finite() {
        return Err(ContrastiveError::Shape("features contain non-finite values".into()));
    }
    Ok(())
}

/// Original-view embeddings of `graph` under `stack`.
pub fn embed(
    graph: &TextAttributedGraph,
    h: &DenseMatrix,
    stack: &EncoderStack,
) -> Result<DenseMatrix, ContrastiveError> {
    let propagation = propagation_matrix(stack.kind, graph.adjacency())?;
    Ok(encode_nodes(&propagation, h, stack)?)
}

/// Trains the adaptor and graph encoder on the two views and returns the
/// original-view embeddings under the final weights.
pub fn train(
    graph: &TextAttributedGraph,
    h: &DenseMatrix,
    h_aug: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<TrainResult, ContrastiveError> {
    cfg.validate()?;
    check_inputs(graph, h, h_aug)?;
    let n = graph.node_count();
    let propagation = propagation_matrix(cfg.encoder.kind, graph.adjacency())?;
    let mut stack = init_stack(cfg, h.cols())?;
    let mut adam = AdamState::new(stack.parameters());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = Rng::derived(cfg.seed, STREAM_NEGATIVES, epoch as u64);
        let mut weighted = 0.0;
        for (step, batch) in plan_batches(n, cfg.batch_size, epoch, cfg.seed)?.iter().enumerate() {
            let negatives = batch_negatives(batch.len(), &cfg.loss, &mut rng)?;
            let out =
                contrastive_step(&stack, &propagation, h, h_aug, batch, &negatives, &cfg.loss).map_err(
                    |e| match e {
                        ContrastiveError::Numerics(NumericsError::NonFinite(what)) => ContrastiveError::NonFiniteLoss {
                            epoch,
                            step,
                            message: what.to_string(),
                        },
                        other => other,
                    },
                )?;
            if !out.loss.is_finite() {
                return Err(ContrastiveError::NonFiniteLoss {
                    epoch,
                    step,
                    message: format!("loss {}", out.loss),
                });
            }
            let grads: Vec<&DenseMatrix> = out.gradients.iter().collect();
            let mut params = stack.parameters_mut();
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate).map_err(|e| match e {
                NumericsError::NonFiniteGradient { param } => ContrastiveError::NonFiniteLoss {
                    epoch,
                    step,
                    message: format!("non-finite gradient for parameter {param}"),
                },
                other => other.into(),
            })?;
            weighted += out.loss * batch.len() as f64;
            steps += 1;
        }
        let mean_loss = weighted / n as f64;
        log::debug!("epoch {epoch}: mean loss {mean_loss:.6}");
        trace.push(EpochStats {
            epoch,
            mean_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let h_final = encode_nodes(&propagation, h, &stack)?;
    let metadata = TrainMetadata {
        config: cfg.clone(),
        node_count: n,
        input_dim: h.cols(),
        parameter_count: stack.parameter_count(),
        steps,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(TrainResult {
        stack,
        h_final,
        loss_trace: trace,
        metadata,
    })
}

/// Writes the loss trace with columns `epoch,mean_loss,wall_seconds`.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[EpochStats]) -> Result<(), ContrastiveError> {
    let path = path.as_ref();
    let io = |e: csv::Error| ContrastiveError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in trace {
        w.serialize(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| ContrastiveError::Io(format!("{}: {e}", path.display())))
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<EpochStats>, ContrastiveError> {
    let path = path.as_ref();
    let io = |e: csv::Error| ContrastiveError::Io(format!("{}: {e}", path.display()));
    csv::Reader::from_path(path)
        .map_err(io)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::CsrMatrix;

    fn ring(n: usize) -> TextAttributedGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        TextAttributedGraph::new(vec![String::new(); n], edges, None).unwrap()
    }

    fn features(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = Rng::seed_from(seed);
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 3,
            learning_rate: 1e-2,
            seed: 5,
            encoder: EncoderConfig {
                hidden_dim: 6,
                out_dim: 4,
                ..EncoderConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let g = ring(10);
        let (h, hs) = (features(10, 5, 1), features(10, 5, 2));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_cfg()
        };
        let r = train(&g, &h, &hs, &cfg).unwrap();
        let init = init_stack(&cfg, 5).unwrap();
        assert_eq!(r.stack, init);
        assert_eq!(r.h_final, embed(&g, &h, &init).unwrap());
        assert_eq!(r.loss_trace.len(), 3);
    }

    #[test]
    fn nonzero_step_moves_parameters() {
        let g = ring(10);
        let (h, hs) = (features(10, 5, 1), features(10, 5, 2));
        let cfg = TrainConfig {
            epochs: 1,
            ..small_cfg()
        };
        let r = train(&g, &h, &hs, &cfg).unwrap();
        assert_ne!(r.stack, init_stack(&cfg, 5).unwrap());
        assert_eq!(r.h_final.shape(), (10, 4));
        assert_eq!(r.metadata.steps, 3);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let g = ring(12);
        let (h, hs) = (features(12, 5, 3), features(12, 5, 4));
        let cfg = TrainConfig {
            loss: LossConfig {
                negatives_per_target: super::super::Negatives::Count(2),
                ..LossConfig::default()
            },
            ..small_cfg()
        };
        let a = train(&g, &h, &hs, &cfg).unwrap();
        let b = train(&g, &h, &hs, &cfg).unwrap();
        assert_eq!(a.h_final, b.h_final);
        assert_eq!(
            a.loss_trace.iter().map(|e| e.mean_loss).collect::<Vec<_>>(),
            b.loss_trace.iter().map(|e| e.mean_loss).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_mismatched_features() {
        let g = ring(6);
        let err = train(&g, &features(5, 3, 0), &features(5, 3, 1), &small_cfg());
        assert!(matches!(err, Err(ContrastiveError::Shape(_))));
        let bad = TrainConfig {
            batch_size: 1,
            ..small_cfg()
        };
        assert!(train(&g, &features(6, 3, 0), &features(6, 3, 1), &bad).is_err());
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let g = ring(6);
        let (h, hs) = (features(6, 4, 8), features(6, 4, 9));
        let mut cfg = small_cfg();
        cfg.adaptor = AdaptorConfig::with_out_dim(3);
        let stack = init_stack(&cfg, 4).unwrap();
        let prop = propagation_matrix(cfg.encoder.kind, g.adjacency()).unwrap();
        let batch = [0, 2, 3, 5];
        let negs = batch_negatives(4, &cfg.loss, &mut Rng::seed_from(0)).unwrap();
        let out = contrastive_step(&stack, &prop, &h, &hs, &batch, &negs, &cfg.loss).unwrap();
        let params: Vec<DenseMatrix> = stack.parameters().into_iter().cloned().collect();
        let fd = crate::numerics::finite_diff_gradient(
            |p| {
                let s = stack.with_parameters(p).unwrap();
                contrastive_loss(&s, &prop, &h, &hs, &batch, &negs, &cfg.loss).unwrap()
            },
            &params,
            1e-5,
        );
        for (a, n) in out.gradients.iter().zip(&fd) {
            for (x, y) in a.as_slice().iter().zip(n.as_slice()) {
                assert!(crate::numerics::relative_error(*x, *y, 1e-6) < 1e-4, "{x} vs {y}");
            }
        }
        let _ = CsrMatrix::identity(1);
    }

    #[test]
    fn trace_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let trace = vec![
            EpochStats {
                epoch: 0,
                mean_loss: 4.123456789012345,
                wall_seconds: 0.25,
            },
            EpochStats {
                epoch: 1,
                mean_loss: 3.9,
                wall_seconds: 0.5,
            },
        ];
        write_trace_csv(&p, &trace).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epoch,mean_loss,wall_seconds\n"));
        assert_eq!(read_trace_csv(&p).unwrap(), trace);
    }
}
