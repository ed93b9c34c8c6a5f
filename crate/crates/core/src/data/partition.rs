//! Label-skewed client partitioning.
//!
//! Samples are bucketed by their dominant label, then each bucket is split
//! across clients with proportions drawn from a symmetric Dirichlet
//! distribution. Small concentrations give each client a few dominant
//! buckets; large ones approach an even split.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::labels::{NUM_LABELS, NUM_SUBTYPES};
use crate::rng::{self, tag, StreamRng};

/// "No hemorrhage" plus one group per label.
pub const NUM_GROUPS: usize = NUM_LABELS + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub num_clients: usize,
    /// Dirichlet concentration.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec { num_clients: 2, alpha: 1.0, seed: 0 }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::domain("partition.num_clients must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!(
                "partition.alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Group 0 for volumes without hemorrhage, otherwise `1 +` the index of the
/// first positive subtype. The `any` group (6) is never produced because a
/// positive `any` always has a positive subtype before it.
pub fn label_group(sample: &VolumeSample) -> usize {
    sample.volume_labels[..NUM_SUBTYPES]
        .iter()
        .position(|&b| b)
        .map_or(0, |i| i + 1)
}

fn dirichlet(alpha: f64, k: usize, rng: &mut StreamRng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter().map(|d| d / total).collect()
    } else {
        // Every draw underflowed: put all mass on one client.
        let pick = rng.random_range(0..k);
        (0..k).map(|i| if i == pick { 1.0 } else { 0.0 }).collect()
    }
}

/// Split dataset indices across `spec.num_clients` clients.
///
/// The result is a set partition of `0..dataset.len()`, each shard sorted
/// ascending. When there are at least as many samples as clients, empty
/// shards are filled by moving the highest index out of the largest shard.
pub fn partition_dirichlet(dataset: &[VolumeSample], spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("cannot partition an empty dataset"));
    }
    let k = spec.num_clients;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_GROUPS];
    for (i, sample) in dataset.iter().enumerate() {
        groups[label_group(sample)].push(i);
    }

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (g, members) in groups.iter_mut().enumerate() {
        let mut rng = rng::keyed(spec.seed, &[tag::PARTITION, g as u64]);
        let proportions = dirichlet(spec.alpha, k, &mut rng);
        members.shuffle(&mut rng);
        let m = members.len();
        let mut cumulative = 0.0;
        let mut start = 0;
        for (client, p) in proportions.iter().enumerate() {
            cumulative += p;
            let end = if client + 1 == k {
                m
            } else {
                ((cumulative * m as f64).round() as usize).clamp(start, m)
            };
            shards[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    if dataset.len() >= k {
        while let Some(empty) = shards.iter().position(Vec::is_empty) {
            let donor = (0..k)
                .max_by_key(|&c| (shards[c].len(), std::cmp::Reverse(c)))
                .expect("k >= 1");
            let moved = *shards[donor].iter().max().expect("donor is nonempty");
            shards[donor].retain(|&i| i != moved);
            shards[empty].push(moved);
        }
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

/// Per-client label-group histogram, normalized.
pub fn group_distribution(dataset: &[VolumeSample], indices: &[usize]) -> [f64; NUM_GROUPS] {
    let mut hist = [0.0; NUM_GROUPS];
    for &i in indices {
        hist[label_group(&dataset[i])] += 1.0;
    }
    let n = indices.len().max(1) as f64;
    hist.map(|h| h / n)
}
