//! Synthetic CT volumes, their on-disk format, and non-IID client partitioning.

pub mod partition;
pub mod synth;
pub mod volume_file;

pub use partition::{group_distribution, label_group, partition_dirichlet, PartitionSpec, NUM_GROUPS};
pub use synth::{generate_dataset, generate_volume, train_eval_split};
pub use volume_file::{load_volume, read_volume, save_volume, write_volume};

use crate::labels::{with_any, LabelVector, NUM_LABELS};
use crate::tensor::Tensor;

/// One CT volume with per-slice and per-volume labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeSample {
    /// `[S, 1, H, W]` intensities in `[0, 1]`.
    pub volume: Tensor,
    pub slice_labels: Vec<LabelVector>,
    pub volume_labels: LabelVector,
}

impl VolumeSample {
    /// Build a sample whose `any` flags and volume labels are derived from
    /// the slice subtype flags.
    pub fn from_slices(volume: Tensor, slice_labels: Vec<LabelVector>) -> Self {
        let slice_labels: Vec<LabelVector> = slice_labels.into_iter().map(with_any).collect();
        let mut volume_labels = [false; NUM_LABELS];
        for s in &slice_labels {
            for (v, &b) in volume_labels.iter_mut().zip(s) {
                *v |= b;
            }
        }
        VolumeSample {
            volume,
            slice_labels,
            volume_labels,
        }
    }

    pub fn slices(&self) -> usize {
        self.volume.shape()[0]
    }

    /// `[S, 6]` tensor of 0/1 slice labels.
    pub fn slice_label_tensor(&self) -> Tensor {
        let data = self
            .slice_labels
            .iter()
            .flat_map(crate::labels::as_f64)
            .collect();
        Tensor::new(&[self.slice_labels.len(), NUM_LABELS], data)
            .expect("at least one slice")
    }

    /// Volume labels are the OR of slice labels, `any` is the OR of the
    /// subtypes at both levels, and intensities lie in `[0, 1]`.
    pub fn labels_consistent(&self) -> bool {
        let rebuilt = VolumeSample::from_slices(Tensor::scalar(0.0), self.slice_labels.clone());
        rebuilt.slice_labels == self.slice_labels
            && rebuilt.volume_labels == self.volume_labels
            && self.slice_labels.len() == self.slices()
            && self.volume.data().iter().all(|v| (0.0..=1.0).contains(v))
    }
}
