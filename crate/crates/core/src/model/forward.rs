//! Graph construction for the encoder, the GRU head and the classifier.

use std::collections::BTreeMap;

use crate::autodiff::{Graph, NodeId};
use crate::autodiff::kernels::sigmoid;
use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;
use crate::model::build::{dense_bias, dense_kernel, transition_bias, transition_kernel, GATES};
use crate::model::config::{ModelConfig, DENSE_KERNEL, TRANSITION_POOL};
use crate::params::ModelParams;
use crate::tensor::Tensor;

/// Parameter tensors bound as nodes of one graph.
pub struct BoundParams {
    nodes: BTreeMap<String, NodeId>,
}

impl BoundParams {
    /// Bind as differentiable leaves.
    pub fn trainable(graph: &mut Graph, params: &ModelParams) -> Self {
        Self::bind(graph, params, true)
    }

    /// Bind as constants, for inference.
    pub fn frozen(graph: &mut Graph, params: &ModelParams) -> Self {
        Self::bind(graph, params, false)
    }

    fn bind(graph: &mut Graph, params: &ModelParams, trainable: bool) -> Self {
        let nodes = params
            .iter()
            .map(|(name, t)| {
                let id = if trainable {
                    graph.param(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (name.to_string(), id)
            })
            .collect();
        BoundParams { nodes }
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .get(name)
            .copied()
            .ok_or_else(|| Error::shape(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn check_slice(slice: &Tensor, config: &ModelConfig) -> Result<()> {
    let hw = config.input_hw;
    if slice.shape() != [1, hw, hw] {
        return Err(Error::shape(format!(
            "slice shape {:?}, model expects [1, {hw}, {hw}]",
            slice.shape()
        )));
    }
    Ok(())
}

fn check_volume(volume: &Tensor, config: &ModelConfig) -> Result<()> {
    let (s, hw) = (config.slices, config.input_hw);
    if volume.shape() != [s, 1, hw, hw] {
        return Err(Error::shape(format!(
            "volume shape {:?}, model expects [{s}, 1, {hw}, {hw}]",
            volume.shape()
        )));
    }
    Ok(())
}

/// Encoder for one `[1, H, W]` slice node; returns a `[F]` feature node.
pub fn encoder_graph(
    graph: &mut Graph,
    params: &BoundParams,
    config: &ModelConfig,
    slice: NodeId,
) -> Result<NodeId> {
    let mut x = slice;
    let blocks = config.block_layout.len();
    for (b, &layers) in config.block_layout.iter().enumerate() {
        let mut features = vec![x];
        for l in 0..layers {
            let input = if features.len() == 1 {
                features[0]
            } else {
                graph.concat_channels(&features)?
            };
            let conv = graph.conv2d(input, params.node(&dense_kernel(b, l))?, 1, DENSE_KERNEL / 2)?;
            let biased = graph.add_channel_bias(conv, params.node(&dense_bias(b, l))?)?;
            features.push(graph.relu(biased));
        }
        x = graph.concat_channels(&features)?;
        if b + 1 < blocks {
            let conv = graph.conv2d(x, params.node(&transition_kernel(b))?, 1, 0)?;
            let biased = graph.add_channel_bias(conv, params.node(&transition_bias(b))?)?;
            x = graph.pool_avg(biased, TRANSITION_POOL)?;
        }
    }
    graph.global_pool_avg(x)
}

/// Encoder applied with shared parameters to every slice of `[S, 1, H, W]`;
/// returns one `[1, F]` row node per slice.
pub fn time_distributed_graph(
    graph: &mut Graph,
    params: &BoundParams,
    config: &ModelConfig,
    volume: &Tensor,
) -> Result<Vec<NodeId>> {
    check_volume(volume, config)?;
    let f = config.feature_len();
    (0..config.slices)
        .map(|s| {
            let slice = graph.constant(volume.index_outer(s)?);
            let feat = encoder_graph(graph, params, config, slice)?;
            graph.reshape(feat, &[1, f])
        })
        .collect()
}

/// Unrolled GRU over `[1, F]` input rows from a zero initial state.
///
/// ```text
/// z = σ(x W_z + h U_z + b_z)
/// r = σ(x W_r + h U_r + b_r)
/// c = tanh(x W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ c
/// ```
pub fn gru_graph(graph: &mut Graph, params: &BoundParams, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
    let [wz, wr, wh] = GATES.map(|g| params.node(&format!("gru.w_{g}")));
    let [uz, ur, uh] = GATES.map(|g| params.node(&format!("gru.u_{g}")));
    let [bz, br, bh] = GATES.map(|g| params.node(&format!("gru.bias_{g}")));
    let (wz, wr, wh, uz, ur, uh, bz, br, bh) = (wz?, wr?, wh?, uz?, ur?, uh?, bz?, br?, bh?);
    let hidden = graph.value(uz).shape()[0];

    let gate = |graph: &mut Graph, x: NodeId, w: NodeId, h: NodeId, u: NodeId, b: NodeId| -> Result<NodeId> {
        let xw = graph.matmul(x, w)?;
        let hu = graph.matmul(h, u)?;
        let sum = graph.add(xw, hu)?;
        graph.add_row_bias(sum, b)
    };

    let mut h = graph.constant(Tensor::zeros(&[1, hidden])?);
    let ones = graph.constant(Tensor::create(&[1, hidden], crate::tensor::Fill::Constant(1.0))?);
    let mut states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let z_pre = gate(graph, x, wz, h, uz, bz)?;
        let z = graph.sigmoid(z_pre);
        let r_pre = gate(graph, x, wr, h, ur, br)?;
        let r = graph.sigmoid(r_pre);
        let rh = graph.mul(r, h)?;
        let c_pre = gate(graph, x, wh, rh, uh, bh)?;
        let candidate = graph.tanh(c_pre);
        let keep = graph.sub(ones, z)?;
        let kept = graph.mul(keep, h)?;
        let update = graph.mul(z, candidate)?;
        h = graph.add(kept, update)?;
        states.push(h);
    }
    Ok(states)
}

/// Shared affine head: `[S, Hd]` hidden states to `[S, 6]` logits.
pub fn head_graph(graph: &mut Graph, params: &BoundParams, hidden: NodeId) -> Result<NodeId> {
    let logits = graph.matmul(hidden, params.node("head.weight")?)?;
    graph.add_row_bias(logits, params.node("head.bias")?)
}

/// Full forward pass of one volume; returns the `[S, 6]` logit node.
pub fn volume_logits_graph(
    graph: &mut Graph,
    params: &BoundParams,
    config: &ModelConfig,
    volume: &Tensor,
) -> Result<NodeId> {
    let features = time_distributed_graph(graph, params, config, volume)?;
    let states = gru_graph(graph, params, &features)?;
    let hidden = graph.concat_rows(&states)?;
    head_graph(graph, params, hidden)
}

pub fn encoder_forward(slice: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    check_slice(slice, config)?;
    let mut graph = Graph::new();
    let bound = BoundParams::frozen(&mut graph, params);
    let input = graph.constant(slice.clone());
    let out = encoder_graph(&mut graph, &bound, config, input)?;
    Ok(graph.value(out).clone())
}

/// `[S, 1, H, W]` to `[S, F]`; row `i` is the encoding of slice `i`.
pub fn time_distributed_forward(
    volume: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    let mut graph = Graph::new();
    let bound = BoundParams::frozen(&mut graph, params);
    let rows = time_distributed_graph(&mut graph, &bound, config, volume)?;
    let stacked = graph.concat_rows(&rows)?;
    Ok(graph.value(stacked).clone())
}

/// `[S, F]` features to `[S, Hd]` hidden states.
pub fn gru_forward(features: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let w = params.require("gru.w_z")?;
    if features.rank() != 2 || features.shape()[1] != w.shape()[0] {
        return Err(Error::shape(format!(
            "GRU input {:?}, expected [S, {}]",
            features.shape(),
            w.shape()[0]
        )));
    }
    let mut graph = Graph::new();
    let bound = BoundParams::frozen(&mut graph, params);
    let f = features.shape()[1];
    let rows = (0..features.shape()[0])
        .map(|s| {
            let row = features.data()[s * f..(s + 1) * f].to_vec();
            Ok(graph.constant(Tensor::new(&[1, f], row)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let states = gru_graph(&mut graph, &bound, &rows)?;
    let stacked = graph.concat_rows(&states)?;
    Ok(graph.value(stacked).clone())
}

/// Per-slice logits plus volume-level scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    /// `[S, 6]` logits.
    pub slice_logits: Tensor,
    /// Per label, the maximum over slices of the sigmoid probability.
    pub volume_scores: [f64; NUM_LABELS],
}

impl Classification {
    pub fn from_logits(slice_logits: Tensor) -> Self {
        let mut volume_scores = [f64::NEG_INFINITY; NUM_LABELS];
        for row in slice_logits.data().chunks(NUM_LABELS) {
            for (score, &z) in volume_scores.iter_mut().zip(row) {
                *score = score.max(sigmoid(z));
            }
        }
        Classification {
            slice_logits,
            volume_scores,
        }
    }
}

/// `[S, Hd]` hidden states to logits and volume scores.
pub fn classify(hidden: &Tensor, params: &ModelParams) -> Result<Classification> {
    let mut graph = Graph::new();
    let bound = BoundParams::frozen(&mut graph, params);
    let h = graph.constant(hidden.clone());
    let logits = head_graph(&mut graph, &bound, h)?;
    Ok(Classification::from_logits(graph.value(logits).clone()))
}

/// End-to-end inference on one `[S, 1, H, W]` volume.
pub fn forward_volume(
    volume: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Classification> {
    let mut graph = Graph::new();
    let bound = BoundParams::frozen(&mut graph, params);
    let logits = volume_logits_graph(&mut graph, &bound, config, volume)?;
    Ok(Classification::from_logits(graph.value(logits).clone()))
}
