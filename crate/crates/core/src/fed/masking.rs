//! Pairwise additive masking: the server learns only the weighted sum.
//!
//! Client `k` uploads `n_k · w_k + Σ_{j>k} m_kj − Σ_{i<k} m_ik`, where each
//! `m_ij` is a Gaussian tensor drawn from the stream `(seed, MASK, round, i, j)`
//! that both members of the pair can derive. Summed over all participants
//! the masks cancel and the server divides by `Σ n_k`. There is no dropout
//! recovery: if any masked upload is missing, the sum is unusable.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fed::aggregate::{check_layouts, in_client_order};
use crate::fed::ModelUpdate;
use crate::params::ModelParams;
use crate::rng::{self, tag};

/// Standard deviation of each mask coordinate.
pub const MASK_SCALE: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedUpdate {
    pub client_id: usize,
    pub sample_count: usize,
    /// `n_k · w_k` plus the client's net mask.
    pub payload: ModelParams,
}

fn pair_mask(template: &ModelParams, seed: u64, round: u32, i: usize, j: usize) -> ModelParams {
    let mut rng = rng::keyed(seed, &[tag::MASK, u64::from(round), i as u64, j as u64]);
    let mut out = template.clone();
    for (_, t) in out.iter_mut() {
        for x in t.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = MASK_SCALE * z;
        }
    }
    out
}

pub fn mask_pairwise(updates: &[ModelUpdate], seed: u64, round: u32) -> Result<Vec<MaskedUpdate>> {
    if updates.len() < 2 {
        return Err(Error::contract(format!(
            "masking needs at least 2 participants, got {}",
            updates.len()
        )));
    }
    let sorted = in_client_order(updates)?;
    check_layouts(&sorted)?;
    let mut payloads: Vec<ModelParams> = sorted
        .iter()
        .map(|u| {
            let n = u.sample_count as f64;
            u.params.map(|w| n * w)
        })
        .collect();
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            let mask = pair_mask(&sorted[a].params, seed, round, sorted[a].client_id, sorted[b].client_id);
            payloads[a] = payloads[a].zip_with(&mask, |p, m| p + m)?;
            payloads[b] = payloads[b].zip_with(&mask, |p, m| p - m)?;
        }
    }
    Ok(sorted
        .iter()
        .zip(payloads)
        .map(|(u, payload)| MaskedUpdate {
            client_id: u.client_id,
            sample_count: u.sample_count,
            payload,
        })
        .collect())
}

/// Sum masked uploads in ascending client order and divide by `Σ n_k`.
///
/// `participants` is the set the masks were generated for; any missing or
/// extra upload makes the sum unrecoverable.
pub fn unmask_aggregate(masked: &[MaskedUpdate], participants: &[usize]) -> Result<ModelParams> {
    let mut received: Vec<usize> = masked.iter().map(|m| m.client_id).collect();
    received.sort_unstable();
    let mut expected = participants.to_vec();
    expected.sort_unstable();
    if received != expected {
        return Err(Error::UnrecoverableSum(format!(
            "masks were agreed among clients {expected:?} but uploads arrived from {received:?}"
        )));
    }
    let mut sorted: Vec<&MaskedUpdate> = masked.iter().collect();
    sorted.sort_by_key(|m| m.client_id);
    let total: f64 = sorted.iter().map(|m| m.sample_count as f64).sum();
    let mut sum = sorted[0].payload.clone();
    for m in &sorted[1..] {
        sum = sum.zip_with(&m.payload, |a, b| a + b)?;
    }
    Ok(sum.map(|x| x / total))
}
