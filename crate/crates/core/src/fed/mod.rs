//! Federated averaging across simulated hospitals.
//!
//! Clients hold index shards into a training set that never leaves the
//! client side of the API: everything that reaches the server is a
//! [`ModelUpdate`], which carries weights and a sample count only.

mod aggregate;
mod client;
mod comms;
mod masking;
mod privacy;
mod sim;

pub use aggregate::fedavg_aggregate;
pub use client::{
    epoch_batches, local_train, schedule_round, selection_size, ClientState, LocalOutcome,
    LocalTraining, ModelUpdate,
};
pub use comms::{comms_account, CommsLedger, RoundComms};
pub use masking::{mask_pairwise, unmask_aggregate, MaskedUpdate, MASK_SCALE};
pub use privacy::{clip_update, gaussian_mechanism, noise_stream, privatize, DpConfig};
pub use sim::{
    evaluate_model, run_central, run_federated, Evaluation, FedConfig, RunOptions, RunOutput,
};
