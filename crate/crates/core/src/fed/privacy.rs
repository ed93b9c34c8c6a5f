//! Update clipping and the Gaussian mechanism.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fed::ModelUpdate;
use crate::params::ModelParams;
use crate::rng::{self, tag, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    /// L2 bound on each client's weight delta. May be infinite when `sigma` is 0.
    pub clip_norm: f64,
    /// Noise standard deviation in units of `clip_norm`.
    pub sigma: f64,
    pub seed: u64,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::domain(format!("clip_norm {} must be positive", self.clip_norm)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma {} must be finite and non-negative", self.sigma)));
        }
        if self.sigma > 0.0 && self.clip_norm.is_infinite() {
            return Err(Error::domain("noise needs a finite clip_norm"));
        }
        Ok(())
    }
}

/// Scale `delta` by `C / ‖delta‖` when its global L2 norm exceeds `C`;
/// otherwise return it unchanged.
///
/// Rounding can leave the scaled norm an ulp above `C`; the factor is then
/// nudged down until the recomputed norm is within the bound.
pub fn clip_update(delta: &ModelParams, clip_norm: f64) -> ModelParams {
    let norm = delta.l2_norm();
    if !(norm > clip_norm) {
        return delta.clone();
    }
    let mut scale = clip_norm / norm;
    loop {
        let clipped = delta.map(|x| x * scale);
        if clipped.l2_norm() <= clip_norm {
            return clipped;
        }
        scale *= 1.0 - f64::EPSILON;
    }
}

/// Add i.i.d. `Normal(0, (sigma · C)²)` noise to every coordinate, drawn in
/// flatten order. `sigma = 0` returns `delta` bitwise.
pub fn gaussian_mechanism(delta: &ModelParams, sigma: f64, clip_norm: f64, rng: &mut StreamRng) -> ModelParams {
    if sigma == 0.0 {
        return delta.clone();
    }
    let std = sigma * clip_norm;
    let mut out = delta.clone();
    for (_, t) in out.iter_mut() {
        for x in t.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x += std * z;
        }
    }
    out
}

/// The noise stream of one client in one round.
pub fn noise_stream(dp: &DpConfig, round: u32, client_id: usize) -> StreamRng {
    rng::keyed(dp.seed, &[tag::NOISE, u64::from(round), client_id as u64])
}

/// Clip and noise the delta between a client's weights and the round's
/// global weights. When clipping does not bind and `sigma = 0`, the update
/// is returned unchanged, so a disabled mechanism is bitwise inert.
pub fn privatize(update: &ModelUpdate, global: &ModelParams, dp: &DpConfig, round: u32) -> Result<ModelUpdate> {
    let delta = update.params.zip_with(global, |local, g| local - g)?;
    if dp.sigma == 0.0 && delta.l2_norm() <= dp.clip_norm {
        return Ok(update.clone());
    }
    let clipped = clip_update(&delta, dp.clip_norm);
    let noised = gaussian_mechanism(&clipped, dp.sigma, dp.clip_norm, &mut noise_stream(dp, round, update.client_id));
    Ok(ModelUpdate {
        params: global.zip_with(&noised, |g, d| g + d)?,
        ..update.clone()
    })
}
