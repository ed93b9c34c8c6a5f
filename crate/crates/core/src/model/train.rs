use crate::autodiff::{Graph, NodeId};
use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;
use crate::model::config::ModelConfig;
use crate::model::forward::{volume_logits_graph, BoundParams, Classification};
use crate::params::ModelParams;

/// Mean per-slice BCE over a batch, as a scalar node.
pub fn batch_loss_graph(
    graph: &mut Graph,
    params: &BoundParams,
    config: &ModelConfig,
    batch: &[&VolumeSample],
) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(Error::contract("training batch is empty"));
    }
    let mut total: Option<NodeId> = None;
    for sample in batch {
        let logits = volume_logits_graph(graph, params, config, &sample.volume)?;
        let loss = graph.bce_with_logits(logits, &sample.slice_label_tensor())?;
        total = Some(match total {
            None => loss,
            Some(acc) => graph.add(acc, loss)?,
        });
    }
    let total = total.expect("batch is nonempty");
    Ok(graph.scale(total, 1.0 / batch.len() as f64))
}

/// Batch loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[&VolumeSample],
) -> Result<(f64, ModelParams)> {
    let mut graph = Graph::new();
    let bound = BoundParams::trainable(&mut graph, params);
    let loss = batch_loss_graph(&mut graph, &bound, config, batch)?;
    let mut grads = graph.backward(loss)?;
    let mut out = ModelParams::new();
    for (name, id) in bound.iter() {
        let g = grads.take(id).expect("parameter leaves always receive a gradient");
        out.insert(name, g);
    }
    Ok((graph.value(loss).data()[0], out))
}

/// One plain SGD step: `params - lr · ∇loss`. Returns the updated
/// parameters and the loss before the update.
pub fn train_step(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[&VolumeSample],
    lr: f64,
) -> Result<(ModelParams, f64)> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::domain(format!("learning rate {lr} must be finite and non-negative")));
    }
    let (loss, grads) = loss_and_gradient(params, config, batch)?;
    let updated = params.zip_with(&grads, |w, g| w - lr * g)?;
    Ok((updated, loss))
}

/// Forward pass without gradient bookkeeping.
pub fn predict(params: &ModelParams, config: &ModelConfig, sample: &VolumeSample) -> Result<Classification> {
    crate::model::forward::forward_volume(&sample.volume, params, config)
}

/// Volume-level scores for every sample plus the mean per-slice BCE.
pub fn evaluate_scores(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[VolumeSample],
) -> Result<(Vec<[f64; NUM_LABELS]>, f64)> {
    let mut scores = Vec::with_capacity(samples.len());
    let mut loss = 0.0;
    for sample in samples {
        let mut graph = Graph::new();
        let bound = BoundParams::frozen(&mut graph, params);
        let logits = volume_logits_graph(&mut graph, &bound, config, &sample.volume)?;
        let l = graph.bce_with_logits(logits, &sample.slice_label_tensor())?;
        loss += graph.value(l).data()[0];
        scores.push(Classification::from_logits(graph.value(logits).clone()).volume_scores);
    }
    let mean = if samples.is_empty() { 0.0 } else { loss / samples.len() as f64 };
    Ok((scores, mean))
}
