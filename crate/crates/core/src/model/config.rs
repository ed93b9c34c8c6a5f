use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;

/// Dense-block kernel size and padding ("same" spatial size).
pub const DENSE_KERNEL: usize = 3;
pub const TRANSITION_POOL: usize = 2;

/// Architecture hyperparameters of the slice-sequence model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Slice height and width in pixels.
    pub input_hw: usize,
    /// Slices per volume.
    pub slices: usize,
    /// Channels each dense layer adds.
    pub growth_rate: usize,
    /// Number of dense layers in each block.
    pub block_layout: Vec<usize>,
    pub gru_hidden: usize,
    pub num_labels: usize,
}

impl Default for ModelConfig {
    /// The reference tiny configuration: 16×16 slices, 3 per volume, two
    /// blocks of two layers with growth rate 4, 8 hidden units.
    fn default() -> Self {
        ModelConfig {
            input_hw: 16,
            slices: 3,
            growth_rate: 4,
            block_layout: vec![2, 2],
            gru_hidden: 8,
            num_labels: NUM_LABELS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_hw", self.input_hw),
            ("slices", self.slices),
            ("growth_rate", self.growth_rate),
            ("gru_hidden", self.gru_hidden),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::domain(format!("model.{name} must be at least 1")));
        }
        if self.num_labels != NUM_LABELS {
            return Err(Error::domain(format!(
                "model.num_labels must be {NUM_LABELS}, got {}",
                self.num_labels
            )));
        }
        if self.block_layout.is_empty() || self.block_layout.contains(&0) {
            return Err(Error::domain(
                "model.block_layout needs at least one block and every block at least one layer",
            ));
        }
        let downsample = TRANSITION_POOL.pow(self.block_layout.len() as u32 - 1);
        if self.input_hw % downsample != 0 {
            return Err(Error::domain(format!(
                "model.input_hw {} must be divisible by {downsample} for {} blocks",
                self.input_hw,
                self.block_layout.len()
            )));
        }
        Ok(())
    }

    /// Channel count entering each block, plus the final count as last entry.
    ///
    /// A block with `n` layers maps `c` channels to `c + n·k`; a transition
    /// maps `c` to `max(1, c / 2)`. The slice input has one channel.
    pub fn channel_plan(&self) -> Vec<usize> {
        let mut plan = vec![1];
        let mut c = 1;
        for (b, &layers) in self.block_layout.iter().enumerate() {
            c += layers * self.growth_rate;
            if b + 1 < self.block_layout.len() {
                c = transition_channels(c);
            }
            plan.push(c);
        }
        plan
    }

    /// Length of the per-slice feature vector produced by the encoder.
    pub fn feature_len(&self) -> usize {
        *self.channel_plan().last().expect("plan is nonempty")
    }

    /// Spatial side length entering block `b`.
    pub fn block_hw(&self, block: usize) -> usize {
        self.input_hw / TRANSITION_POOL.pow(block as u32)
    }

    /// Stable 64-bit digest of the architecture, stored in checkpoints.
    pub fn config_hash(&self) -> u64 {
        let layout: Vec<String> = self.block_layout.iter().map(usize::to_string).collect();
        let canonical = format!(
            "input_hw={};slices={};growth_rate={};block_layout={};gru_hidden={};num_labels={}",
            self.input_hw,
            self.slices,
            self.growth_rate,
            layout.join(","),
            self.gru_hidden,
            self.num_labels
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

pub fn transition_channels(c: usize) -> usize {
    (c / 2).max(1)
}
