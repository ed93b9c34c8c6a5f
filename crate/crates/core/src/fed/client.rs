use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::model::{train_step, ModelConfig};
use crate::params::ModelParams;
use crate::rng::{self, tag};

/// A simulated hospital: its shard of the training set and how it trains.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    /// Indices into the training set.
    pub shard: Vec<usize>,
    /// Per-round probability of being reachable.
    pub availability: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl ClientState {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.availability) {
            return Err(Error::domain(format!(
                "client {}: availability {} outside [0, 1]",
                self.client_id, self.availability
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain(format!(
                "client {}: local_epochs and batch_size must be at least 1",
                self.client_id
            )));
        }
        if let Some(&bad) = self.shard.iter().find(|&&i| i >= dataset_len) {
            return Err(Error::contract(format!(
                "client {}: shard index {bad} outside a dataset of {dataset_len}",
                self.client_id
            )));
        }
        Ok(())
    }
}

/// What a client sends to the server: weights and a sample count, nothing
/// derived from individual volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelUpdate {
    pub params: ModelParams,
    pub sample_count: usize,
    pub client_id: usize,
}

/// Training hyperparameters shared by every client in a round.
#[derive(Clone, Copy, Debug)]
pub struct LocalTraining<'a> {
    pub model: &'a ModelConfig,
    pub lr: f64,
    /// Base seed of the run; shuffles use the stream `(seed, SHUFFLE, round, client, epoch)`.
    pub seed: u64,
    pub round: u32,
}

#[derive(Clone, Debug)]
pub struct LocalOutcome {
    pub update: ModelUpdate,
    /// Mean of the pre-step batch losses.
    pub mean_loss: f64,
    pub steps: usize,
}

/// The batches a client visits in `epoch`, in order.
pub fn epoch_batches(
    client: &ClientState,
    seed: u64,
    round: u32,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut order = client.shard.clone();
    let mut rng = rng::keyed(
        seed,
        &[tag::SHUFFLE, u64::from(round), client.client_id as u64, epoch as u64],
    );
    order.shuffle(&mut rng);
    order.chunks(client.batch_size).map(<[usize]>::to_vec).collect()
}

/// Run `local_epochs` passes of SGD over the client's shard, starting from
/// a copy of `global`.
pub fn local_train(
    client: &ClientState,
    global: &ModelParams,
    dataset: &[VolumeSample],
    training: &LocalTraining<'_>,
) -> Result<LocalOutcome> {
    if client.shard.is_empty() {
        return Err(Error::contract(format!("client {} has an empty shard", client.client_id)));
    }
    client.validate(dataset.len())?;
    let mut params = global.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0;
    for epoch in 0..client.local_epochs {
        for batch in epoch_batches(client, training.seed, training.round, epoch) {
            let samples: Vec<&VolumeSample> = batch.iter().map(|&i| &dataset[i]).collect();
            let (next, loss) = train_step(&params, training.model, &samples, training.lr)?;
            params = next;
            loss_sum += loss;
            steps += 1;
        }
    }
    if !params.all_finite() {
        return Err(Error::domain(format!(
            "client {} diverged in round {}: non-finite weights",
            client.client_id, training.round
        )));
    }
    Ok(LocalOutcome {
        update: ModelUpdate {
            params,
            sample_count: client.shard.len(),
            client_id: client.client_id,
        },
        mean_loss: loss_sum / steps as f64,
        steps,
    })
}

/// `ceil(fraction · available)`, tolerant of products such as `0.7 · 10`
/// landing a hair above an integer.
pub fn selection_size(fraction: f64, available: usize) -> usize {
    let exact = fraction * available as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(available)
}

/// Pick this round's participants.
///
/// Each client is reachable with its own Bernoulli draw from the stream
/// `(seed, AVAILABILITY, round, client)`. Among reachable clients with a
/// nonempty shard, `ceil(fraction · reachable)` are drawn uniformly without
/// replacement from `(seed, SELECTION, round)`. The result is ascending and
/// may be empty.
pub fn schedule_round(clients: &[ClientState], fraction: f64, round: u32, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain(format!("participation fraction {fraction} outside (0, 1]")));
    }
    let available: Vec<usize> = clients
        .iter()
        .filter(|c| {
            let mut rng = rng::keyed(seed, &[tag::AVAILABILITY, u64::from(round), c.client_id as u64]);
            rng.random_bool(c.availability.clamp(0.0, 1.0))
        })
        .filter(|c| !c.shard.is_empty())
        .map(|c| c.client_id)
        .collect();
    let take = selection_size(fraction, available.len());
    let mut rng = rng::keyed(seed, &[tag::SELECTION, u64::from(round)]);
    let mut picked: Vec<usize> = index::sample(&mut rng, available.len(), take)
        .into_iter()
        .map(|i| available[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}
