//! Analytical wire cost: `f32` weights in both directions plus an 8-byte
//! sample count on each upload.

/// `(downlink, uplink)` bytes for a round with `participants` clients and a
/// model of `parameter_count` scalars.
pub fn comms_account(parameter_count: u64, participants: u64) -> (u64, u64) {
    let down = participants * 4 * parameter_count;
    let up = participants * (4 * parameter_count + 8);
    (down, up)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundComms {
    pub round: u32,
    pub participants: u64,
    pub downlink: u64,
    pub uplink: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommsLedger {
    pub rounds: Vec<RoundComms>,
}

impl CommsLedger {
    pub fn record(&mut self, round: u32, parameter_count: u64, participants: u64) -> RoundComms {
        let (downlink, uplink) = comms_account(parameter_count, participants);
        let entry = RoundComms { round, participants, downlink, uplink };
        self.rounds.push(entry);
        entry
    }

    /// `(downlink, uplink)` summed over all recorded rounds.
    pub fn totals(&self) -> (u64, u64) {
        self.rounds
            .iter()
            .fold((0, 0), |(d, u), r| (d + r.downlink, u + r.uplink))
    }
}
