use crate::error::Result;
use crate::labels::NUM_LABELS;
use crate::model::config::{transition_channels, ModelConfig, DENSE_KERNEL};
use crate::params::{is_bias, ModelParams};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const GATES: [&str; 3] = ["z", "r", "h"];

pub fn dense_kernel(block: usize, layer: usize) -> String {
    format!("encoder.block{block}.layer{layer}.kernel")
}

pub fn dense_bias(block: usize, layer: usize) -> String {
    format!("encoder.block{block}.layer{layer}.bias")
}

pub fn transition_kernel(block: usize) -> String {
    format!("encoder.transition{block}.kernel")
}

pub fn transition_bias(block: usize) -> String {
    format!("encoder.transition{block}.bias")
}

/// Name and shape of every parameter tensor the configuration implies.
///
/// Dense layer `l` of a block whose input has `c` channels has a
/// `[k, c + l·k, 3, 3]` kernel and `[k]` bias. The transition after block `b`
/// has a `[c'/2, c', 1, 1]` kernel and bias. The GRU has input maps
/// `w_{z,r,h}: [F, Hd]`, recurrent maps `u_{z,r,h}: [Hd, Hd]` and biases
/// `bias_{z,r,h}: [Hd]`; the head has `weight: [Hd, 6]` and `bias: [6]`.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let k = config.growth_rate;
    let mut shapes = Vec::new();
    let mut c = 1;
    for (b, &layers) in config.block_layout.iter().enumerate() {
        for l in 0..layers {
            shapes.push((dense_kernel(b, l), vec![k, c + l * k, DENSE_KERNEL, DENSE_KERNEL]));
            shapes.push((dense_bias(b, l), vec![k]));
        }
        c += layers * k;
        if b + 1 < config.block_layout.len() {
            let out = transition_channels(c);
            shapes.push((transition_kernel(b), vec![out, c, 1, 1]));
            shapes.push((transition_bias(b), vec![out]));
            c = out;
        }
    }
    let (f, hd) = (c, config.gru_hidden);
    for gate in GATES {
        shapes.push((format!("gru.w_{gate}"), vec![f, hd]));
        shapes.push((format!("gru.u_{gate}"), vec![hd, hd]));
        shapes.push((format!("gru.bias_{gate}"), vec![hd]));
    }
    shapes.push(("head.weight".into(), vec![hd, NUM_LABELS]));
    shapes.push(("head.bias".into(), vec![NUM_LABELS]));
    shapes
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))` for a weight shape.
///
/// Matrices are `[in, out]`; convolution kernels are `[out, in, kh, kw]` with
/// the receptive field multiplying both fans.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [i, o] => (*i, *o),
        [o, i, kh, kw] => (i * kh * kw, o * kh * kw),
        _ => (shape.iter().product(), shape.iter().product()),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fresh parameters: Glorot-uniform weights and zero biases, each tensor
/// drawn from its own stream keyed by `(seed, name)`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::new();
    for (name, shape) in parameter_shapes(config) {
        let tensor = if is_bias(&name) {
            Tensor::zeros(&shape)?
        } else {
            let mut stream = rng::keyed(seed, &[tag::INIT, rng::name_key(&name)]);
            Tensor::uniform(&shape, glorot_bound(&shape), &mut stream)?
        };
        params.insert(name, tensor);
    }
    Ok(params)
}
