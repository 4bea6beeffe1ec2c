use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{mean_aggregation, normalize_adjacency, EncoderError};
use crate::numerics::{CsrMatrix, DenseMatrix, Rng, Tape, Var};

pub const DEFAULT_HIDDEN_DIM: usize = 256;
pub const DEFAULT_OUTPUT_DIM: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Gcn,
    /// GraphSAGE with a full-neighbourhood mean aggregator.
    Sage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptorConfig {
    pub enabled: bool,
    pub out_dim: usize,
}

impl Default for AdaptorConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            out_dim: 256,
        }
    }
}

impl AdaptorConfig {
    pub fn with_out_dim(out_dim: usize) -> Self {
        Self { enabled: true, out_dim }
    }
}

/// Layer widths of the graph encoder. `hidden.len() + 1` layers in total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderDims {
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            hidden: vec![DEFAULT_HIDDEN_DIM],
            output: DEFAULT_OUTPUT_DIM,
        }
    }
}

impl EncoderDims {
    pub fn layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Encoder kind and depth as they appear in configuration files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Number of graph layers `K`.
    pub layers: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Gcn,
            layers: 2,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            out_dim: DEFAULT_OUTPUT_DIM,
        }
    }
}

impl EncoderConfig {
    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            hidden: vec![self.hidden_dim; self.layers.saturating_sub(1)],
            output: self.out_dim,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.layers == 0 {
            return Err(EncoderError::Config("layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(EncoderError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphLayer {
    /// Applied to the propagated features (GCN) or to the node itself (SAGE).
    pub weight: DenseMatrix,
    /// SAGE only: applied to the neighbour mean.
    pub neighbor_weight: Option<DenseMatrix>,
    pub bias: DenseMatrix,
}

/// Adaptor (optional) followed by `K` graph layers, shared by both views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderStack {
    pub kind: EncoderKind,
    pub adaptor: Option<Linear>,
    pub layers: Vec<GraphLayer>,
}

fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized")
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights and zero biases, drawn in parameter order.
pub fn init_params(
    rng: &mut Rng,
    input_dim: usize,
    dims: &EncoderDims,
    kind: EncoderKind,
    adaptor: &AdaptorConfig,
) -> Result<EncoderStack, EncoderError> {
    let widths_ok = input_dim > 0
        && dims.output > 0
        && dims.hidden.iter().all(|&h| h > 0)
        && (!adaptor.enabled || adaptor.out_dim > 0);
    if !widths_ok {
        return Err(EncoderError::Config("all layer widths must be positive".into()));
    }
    let adaptor = adaptor.enabled.then(|| Linear {
        weight: glorot(rng, input_dim, adaptor.out_dim),
        bias: DenseMatrix::zeros(1, adaptor.out_dim),
    });
    let mut fan_in = adaptor.as_ref().map_or(input_dim, |a| a.weight.cols());
    let mut layers = Vec::with_capacity(dims.layers());
    for &fan_out in dims.hidden.iter().chain(std::iter::once(&dims.output)) {
        let weight = glorot(rng, fan_in, fan_out);
        let neighbor_weight = (kind == EncoderKind::Sage).then(|| glorot(rng, fan_in, fan_out));
        layers.push(GraphLayer {
            weight,
            neighbor_weight,
            bias: DenseMatrix::zeros(1, fan_out),
        });
        fan_in = fan_out;
    }
    Ok(EncoderStack { kind, adaptor, layers })
}

/// The graph operator a stack propagates with: `Â` for GCN, the neighbour
/// mean matrix for SAGE.
pub fn propagation_matrix(kind: EncoderKind, adjacency: &CsrMatrix) -> Result<Arc<CsrMatrix>, EncoderError> {
    Ok(Arc::new(match kind {
        EncoderKind::Gcn => normalize_adjacency(adjacency)?,
        EncoderKind::Sage => mean_aggregation(adjacency)?,
    }))
}

impl EncoderStack {
    pub fn input_dim(&self) -> usize {
        match &self.adaptor {
            Some(a) => a.weight.rows(),
            None => self.layers[0].weight.rows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    /// Trainable tensors in a fixed order: adaptor weight and bias, then per
    /// layer weight, neighbour weight (SAGE) and bias.
    pub fn parameters(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::new();
        if let Some(a) = &self.adaptor {
            out.push(&a.weight);
            out.push(&a.bias);
        }
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(n) = &l.neighbor_weight {
                out.push(n);
            }
            out.push(&l.bias);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = Vec::new();
        if let Some(a) = &mut self.adaptor {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(n) = &mut l.neighbor_weight {
                out.push(n);
            }
            out.push(&mut l.bias);
        }
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.adaptor.is_some() {
            out.push("adaptor.weight".to_string());
            out.push("adaptor.bias".to_string());
        }
        for (k, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{k}.weight"));
            if l.neighbor_weight.is_some() {
                out.push(format!("layer{k}.neighbor_weight"));
            }
            out.push(format!("layer{k}.bias"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.as_slice().len()).sum()
    }

    /// Rebuilds a stack of the same structure around new tensor values.
    pub fn with_parameters(&self, values: &[DenseMatrix]) -> Result<Self, EncoderError> {
        let mut out = self.clone();
        let slots = out.parameters_mut();
        if slots.len() != values.len() {
            return Err(EncoderError::Config(format!(
                "expected {} tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(EncoderError::Config(format!(
                    "tensor shape {:?} does not match {:?}",
                    v.shape(),
                    slot.shape()
                )));
            }
            *slot = v.clone();
        }
        Ok(out)
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundStack {
        let adaptor = self
            .adaptor
            .as_ref()
            .map(|a| (tape.param(a.weight.clone()), tape.param(a.bias.clone())));
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                weight: tape.param(l.weight.clone()),
                neighbor_weight: l.neighbor_weight.as_ref().map(|n| tape.param(n.clone())),
                bias: tape.param(l.bias.clone()),
            })
            .collect();
        BoundStack {
            kind: self.kind,
            adaptor,
            layers,
        }
    }
}

#[derive(Clone, Debug)]
struct BoundLayer {
    weight: Var,
    neighbor_weight: Option<Var>,
    bias: Var,
}

/// An [`EncoderStack`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundStack {
    kind: EncoderKind,
    adaptor: Option<(Var, Var)>,
    layers: Vec<BoundLayer>,
}

impl BoundStack {
    /// Parameter handles in [`EncoderStack::parameters`] order.
    pub fn params(&self) -> Vec<Var> {
        let mut out = Vec::new();
        if let Some((w, b)) = self.adaptor {
            out.extend([w, b]);
        }
        for l in &self.layers {
            out.push(l.weight);
            out.extend(l.neighbor_weight);
            out.push(l.bias);
        }
        out
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    /// `H·W + b`, or `H` unchanged without an adaptor.
    pub fn adaptor_forward(&self, tape: &mut Tape, h: Var) -> Result<Var, EncoderError> {
        match self.adaptor {
            None => Ok(h),
            Some((w, b)) => {
                let hw = tape.matmul(h, w)?;
                Ok(tape.add_bias(hw, b)?)
            }
        }
    }

    /// Graph layers only. ReLU between layers, identity after the last.
    pub fn graph_forward(&self, tape: &mut Tape, propagation: &Arc<CsrMatrix>, x: Var) -> Result<Var, EncoderError> {
        if propagation.rows() != tape.value(x).rows() {
            return Err(EncoderError::Numerics(crate::numerics::NumericsError::ShapeMismatch {
                op: "graph_forward",
                left: (propagation.rows(), propagation.cols()),
                right: tape.value(x).shape(),
            }));
        }
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = match self.kind {
                EncoderKind::Gcn => {
                    let hw = tape.matmul(h, layer.weight)?;
                    tape.sparse_matmul(propagation, hw)?
                }
                EncoderKind::Sage => {
                    let nbr_w = layer.neighbor_weight.ok_or(EncoderError::KindMismatch)?;
                    let own = tape.matmul(h, layer.weight)?;
                    let mean = tape.sparse_matmul(propagation, h)?;
                    let nbr = tape.matmul(mean, nbr_w)?;
                    tape.add(own, nbr)?
                }
            };
            let out = tape.add_bias(pre, layer.bias)?;
            h = if k + 1 < self.layers.len() {
                tape.relu(out)?
            } else {
                out
            };
        }
        Ok(h)
    }

    /// Adaptor then graph layers.
    pub fn encode(&self, tape: &mut Tape, propagation: &Arc<CsrMatrix>, features: Var) -> Result<Var, EncoderError> {
        let x = self.adaptor_forward(tape, features)?;
        self.graph_forward(tape, propagation, x)
    }
}

fn forward_with(
    stack: &EncoderStack,
    run: impl FnOnce(&mut Tape, &BoundStack) -> Result<Var, EncoderError>,
) -> Result<DenseMatrix, EncoderError> {
    let mut tape = Tape::new();
    let bound = stack.bind(&mut tape);
    let out = run(&mut tape, &bound)?;
    Ok(tape.value(out).clone())
}

pub fn adaptor_forward(h: &DenseMatrix, stack: &EncoderStack) -> Result<DenseMatrix, EncoderError> {
    forward_with(stack, |tape, b| {
        let x = tape.constant(h.clone());
        b.adaptor_forward(tape, x)
    })
}

/// GCN layers over a pre-normalized `Â` (the adaptor is not applied).
pub fn gcn_forward(a_hat: &CsrMatrix, x: &DenseMatrix, stack: &EncoderStack) -> Result<DenseMatrix, EncoderError> {
    if stack.kind != EncoderKind::Gcn {
        return Err(EncoderError::KindMismatch);
    }
    let prop = Arc::new(a_hat.clone());
    forward_with(stack, |tape, b| {
        let x = tape.constant(x.clone());
        b.graph_forward(tape, &prop, x)
    })
}

/// SAGE-mean layers over the raw adjacency (the adaptor is not applied).
pub fn sage_forward(adjacency: &CsrMatrix, x: &DenseMatrix, stack: &EncoderStack) -> Result<DenseMatrix, EncoderError> {
    if stack.kind != EncoderKind::Sage {
        return Err(EncoderError::KindMismatch);
    }
    let prop = Arc::new(mean_aggregation(adjacency)?);
    forward_with(stack, |tape, b| {
        let x = tape.constant(x.clone());
        b.graph_forward(tape, &prop, x)
    })
}

/// Adaptor and graph layers, for inference.
pub fn encode_nodes(
    propagation: &Arc<CsrMatrix>,
    features: &DenseMatrix,
    stack: &EncoderStack,
) -> Result<DenseMatrix, EncoderError> {
    forward_with(stack, |tape, b| {
        let x = tape.constant(features.clone());
        b.encode(tape, propagation, x)
    })
}
