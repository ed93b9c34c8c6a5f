use crate::error::{Error, Result};
use crate::fed::ModelUpdate;
use crate::params::ModelParams;

/// Updates sorted by client id; duplicate ids are a protocol error.
pub(crate) fn in_client_order(updates: &[ModelUpdate]) -> Result<Vec<&ModelUpdate>> {
    let mut sorted: Vec<&ModelUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::Protocol(format!("client {} sent two updates", w[0].client_id)));
    }
    Ok(sorted)
}

pub(crate) fn check_layouts(updates: &[&ModelUpdate]) -> Result<()> {
    let first = &updates[0].params;
    for u in &updates[1..] {
        if !u.params.same_layout(first) {
            return Err(Error::Protocol(format!(
                "update from client {} has a different parameter layout than client {}",
                u.client_id, updates[0].client_id
            )));
        }
    }
    Ok(())
}

/// Sample-weighted FedAvg of full weights.
///
/// Each coordinate is `Σ_k (n_k / N) · w_k`, summed in ascending client id
/// order, then clamped to the participants' range so rounding can never
/// leave the convex hull. A single update comes back bitwise unchanged.
pub fn fedavg_aggregate(updates: &[ModelUpdate]) -> Result<ModelParams> {
    if updates.is_empty() {
        return Err(Error::contract("no updates to aggregate"));
    }
    let sorted = in_client_order(updates)?;
    check_layouts(&sorted)?;
    if let Some(u) = sorted.iter().find(|u| u.sample_count == 0) {
        return Err(Error::Protocol(format!("client {} reported zero samples", u.client_id)));
    }
    let total: f64 = sorted.iter().map(|u| u.sample_count as f64).sum();
    let weights: Vec<f64> = sorted.iter().map(|u| u.sample_count as f64 / total).collect();

    let mut out = sorted[0].params.clone();
    for (name, tensor) in out.iter_mut() {
        let sources: Vec<&[f64]> = sorted
            .iter()
            .map(|u| u.params.get(name).expect("layouts checked").data())
            .collect();
        for (i, slot) in tensor.data_mut().iter_mut().enumerate() {
            let mut acc = weights[0] * sources[0][i];
            let (mut lo, mut hi) = (sources[0][i], sources[0][i]);
            for (w, src) in weights.iter().zip(&sources).skip(1) {
                acc += w * src[i];
                lo = lo.min(src[i]);
                hi = hi.max(src[i]);
            }
            *slot = acc.clamp(lo, hi);
        }
    }
    Ok(out)
}
