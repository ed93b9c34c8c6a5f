//! A seeded model and batch for finite-difference checks.

use rand::Rng;

use crate::data::VolumeSample;
use crate::error::Result;
use crate::labels::{LabelVector, NUM_LABELS};
use crate::model::{build_model, ModelConfig};
use crate::params::{is_bias, ModelParams};
use crate::rng::{keyed, name_key, tag};
use crate::tensor::Tensor;

/// Bound of the uniform bias draw. Zero biases would put every ReLU of a
/// constant input region exactly on its kink.
pub const FIXTURE_BIAS_BOUND: f64 = 0.5;
pub const FIXTURE_BATCH: usize = 2;

/// Glorot weights, uniform biases and a batch of uniform-noise volumes with
/// random subtype flags.
///
/// Generated scans are mostly flat background, which leaves many gradient
/// coordinates near the finite-difference noise floor; noise inputs keep
/// them clear of it.
pub fn gradcheck_fixture(config: &ModelConfig, seed: u64) -> Result<(ModelParams, Vec<VolumeSample>)> {
    let mut params = build_model(config, seed)?;
    for (name, t) in params.iter_mut() {
        if is_bias(name) {
            let mut rng = keyed(seed, &[tag::GRADCHECK, name_key(name)]);
            *t = Tensor::uniform(t.shape(), FIXTURE_BIAS_BOUND, &mut rng)?;
        }
    }
    let (s, hw) = (config.slices, config.input_hw);
    let mut rng = keyed(seed, &[tag::GRADCHECK, tag::DATA]);
    let mut batch = Vec::with_capacity(FIXTURE_BATCH);
    for _ in 0..FIXTURE_BATCH {
        let pixels: Vec<f64> = (0..s * hw * hw).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<LabelVector> = (0..s)
            .map(|_| {
                let mut l = [false; NUM_LABELS];
                for flag in l.iter_mut().take(NUM_LABELS - 1) {
                    *flag = rng.random_bool(0.3);
                }
                l
            })
            .collect();
        batch.push(VolumeSample::from_slices(Tensor::new(&[s, 1, hw, hw], pixels)?, labels));
    }
    Ok((params, batch))
}
