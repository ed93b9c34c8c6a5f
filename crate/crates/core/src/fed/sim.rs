//! The round engine.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::fed::{
    fedavg_aggregate, local_train, mask_pairwise, privatize, schedule_round, unmask_aggregate,
    ClientState, CommsLedger, DpConfig, LocalOutcome, LocalTraining,
};
use crate::labels::LabelVector;
use crate::metrics::{summarize, EvalSummary};
use crate::model::{build_model, evaluate_scores, ModelConfig};
use crate::params::ModelParams;
use crate::store::RoundReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub rounds: u32,
    /// Share of reachable clients selected each round, in `(0, 1]`.
    pub fraction: f64,
    pub lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Per-round reachability probability of every client.
    pub availability: f64,
    /// Drives initialization, shuffling, availability, selection and masks.
    pub seed: u64,
    pub masking: bool,
    pub dp: Option<DpConfig>,
    /// Train the selected clients on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for FedConfig {
    /// Three rounds of one local epoch, everyone participating, no privacy
    /// layers.
    fn default() -> Self {
        FedConfig {
            rounds: 3,
            fraction: 1.0,
            lr: 0.5,
            local_epochs: 1,
            batch_size: 8,
            availability: 1.0,
            seed: 0,
            masking: false,
            dp: None,
            parallel: false,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::domain("rounds must be at least 1"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::domain(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::domain(format!("lr {} must be finite and positive", self.lr)));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("local_epochs and batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.availability) {
            return Err(Error::domain(format!("availability {} outside [0, 1]", self.availability)));
        }
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        Ok(())
    }

    /// One client per shard, with ids equal to shard positions.
    pub fn clients(&self, shards: &[Vec<usize>]) -> Vec<ClientState> {
        shards
            .iter()
            .enumerate()
            .map(|(client_id, shard)| ClientState {
                client_id,
                shard: shard.clone(),
                availability: self.availability,
                local_epochs: self.local_epochs,
                batch_size: self.batch_size,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock seconds per round. Off by default so that report
    /// files are reproducible byte for byte.
    pub timings: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<RoundReport>,
    pub params: ModelParams,
    pub ledger: CommsLedger,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub eval_loss: f64,
    pub summary: EvalSummary,
}

/// Held-out loss, accuracy and average precision of `params`.
pub fn evaluate_model(params: &ModelParams, model: &ModelConfig, eval: &[VolumeSample]) -> Result<Evaluation> {
    if eval.is_empty() {
        return Err(Error::contract("evaluation set is empty"));
    }
    let (scores, eval_loss) = evaluate_scores(params, model, eval)?;
    let labels: Vec<LabelVector> = eval.iter().map(|s| s.volume_labels).collect();
    Ok(Evaluation { eval_loss, summary: summarize(&scores, &labels)? })
}

fn report(round: u32, clients: Vec<usize>, train_loss: Option<f64>, eval: &Evaluation, bytes: (u64, u64), wall_s: f64) -> RoundReport {
    RoundReport {
        round,
        clients,
        train_loss,
        eval_loss: eval.eval_loss,
        accuracy: eval.summary.accuracy,
        ap: eval.summary.per_label_ap,
        mean_ap: eval.summary.mean_ap,
        downlink: bytes.0,
        uplink: bytes.1,
        wall_s,
    }
}

fn elapsed(start: Instant, options: RunOptions) -> f64 {
    if options.timings {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Federated training from `build_model(model, fed.seed)`.
///
/// Each round schedules participants, trains them from the current global
/// weights, optionally clips and noises their deltas, optionally masks the
/// uploads, aggregates in ascending client order and evaluates on `eval`.
/// A round without participants leaves the global model unchanged. With
/// masking on, a round with a single participant is skipped as well, since
/// one masked upload cannot be unmasked without revealing it.
pub fn run_federated(
    model: &ModelConfig,
    fed: &FedConfig,
    clients: &[ClientState],
    train: &[VolumeSample],
    eval: &[VolumeSample],
    options: RunOptions,
) -> Result<RunOutput> {
    model.validate()?;
    fed.validate()?;
    for c in clients {
        c.validate(train.len())?;
    }
    let mut global = build_model(model, fed.seed)?;
    let parameter_count = global.parameter_count() as u64;
    let mut ledger = CommsLedger::default();
    let mut reports = Vec::with_capacity(fed.rounds as usize);

    for round in 1..=fed.rounds {
        let start = Instant::now();
        let mut selected = schedule_round(clients, fed.fraction, round, fed.seed)?;
        if fed.masking && selected.len() < 2 {
            selected.clear();
        }
        let training = LocalTraining { model, lr: fed.lr, seed: fed.seed, round };
        let participants: Vec<&ClientState> = selected
            .iter()
            .map(|&id| clients.iter().find(|c| c.client_id == id).expect("scheduled from this list"))
            .collect();
        let train_one = |c: &&ClientState| local_train(c, &global, train, &training);
        let outcomes: Vec<LocalOutcome> = if fed.parallel {
            participants.par_iter().map(train_one).collect::<Result<_>>()?
        } else {
            participants.iter().map(train_one).collect::<Result<_>>()?
        };

        let mut train_loss = None;
        if !outcomes.is_empty() {
            let total: f64 = outcomes.iter().map(|o| o.update.sample_count as f64).sum();
            train_loss = Some(
                outcomes
                    .iter()
                    .map(|o| o.update.sample_count as f64 / total * o.mean_loss)
                    .sum(),
            );
            let mut updates: Vec<_> = outcomes.into_iter().map(|o| o.update).collect();
            if let Some(dp) = &fed.dp {
                updates = updates
                    .iter()
                    .map(|u| privatize(u, &global, dp, round))
                    .collect::<Result<_>>()?;
            }
            global = if fed.masking {
                let masked = mask_pairwise(&updates, fed.seed, round)?;
                unmask_aggregate(&masked, &selected)?
            } else {
                fedavg_aggregate(&updates)?
            };
        }
        let comms = ledger.record(round, parameter_count, selected.len() as u64);
        let evaluation = evaluate_model(&global, model, eval)?;
        reports.push(report(
            round,
            selected,
            train_loss,
            &evaluation,
            (comms.downlink, comms.uplink),
            elapsed(start, options),
        ));
    }
    Ok(RunOutput { reports, params: global, ledger })
}

/// Single-worker training on the whole training set.
///
/// This is a federated run with one always-available pseudo-client (id 0)
/// holding every training index, so it visits exactly the batches a
/// one-client federated run would and ends on bitwise-identical weights.
/// Its reports carry no participants and no traffic.
pub fn run_central(
    model: &ModelConfig,
    fed: &FedConfig,
    train: &[VolumeSample],
    eval: &[VolumeSample],
    options: RunOptions,
) -> Result<RunOutput> {
    model.validate()?;
    fed.validate()?;
    let client = ClientState {
        client_id: 0,
        shard: (0..train.len()).collect(),
        availability: 1.0,
        local_epochs: fed.local_epochs,
        batch_size: fed.batch_size,
    };
    let mut params = build_model(model, fed.seed)?;
    let mut ledger = CommsLedger::default();
    let mut reports = Vec::with_capacity(fed.rounds as usize);
    for round in 1..=fed.rounds {
        let start = Instant::now();
        let training = LocalTraining { model, lr: fed.lr, seed: fed.seed, round };
        let outcome = local_train(&client, &params, train, &training)?;
        params = outcome.update.params;
        let comms = ledger.record(round, params.parameter_count() as u64, 0);
        let evaluation = evaluate_model(&params, model, eval)?;
        reports.push(report(
            round,
            Vec::new(),
            Some(outcome.mean_loss),
            &evaluation,
            (comms.downlink, comms.uplink),
            elapsed(start, options),
        ));
    }
    Ok(RunOutput { reports, params, ledger })
}
