//! Deterministic synthetic head-CT volumes.
//!
//! Each slice is a dim disk ("brain", level 0.1) on a black background with
//! smooth low-amplitude noise. About half of the volumes contain one
//! hemorrhage, occasionally two; each is a bright ellipse drawn on a
//! contiguous run of slices. Its location family, shape and density depend on
//! the subtype:
//!
//! | subtype           | placement                                   | semi-axes   | added level |
//! |-------------------|---------------------------------------------|-------------|-------------|
//! | epidural          | lens hugging the rim, radius 0.68           | 0.32 × 0.6  | 1.05        |
//! | intraparenchymal  | round blob centered within 0.3 of the middle | 0.48        | 1.1         |
//! | intraventricular  | tall narrow blob on the vertical midline    | 0.2 × 0.8   | 0.95        |
//! | subarachnoid      | long thin arc along the rim, radius 0.8     | 0.16 × 1.4  | 0.65        |
//! | subdural          | crescent along the rim, radius 0.72         | 0.4 × 1.1   | 0.9         |
//!
//! Coordinates are normalized to `[-1, 1]` across the slice, so the geometry
//! is the same at every resolution. Blobs shrink toward the ends of their
//! slice run. Intensities are clamped to `[0, 1]` and rounded to `f32` so that
//! volume files reproduce them exactly.

use std::f64::consts::PI;

use rand::Rng;

use crate::data::VolumeSample;
use crate::labels::{NUM_LABELS, NUM_SUBTYPES};
use crate::model::ModelConfig;
use crate::rng::{self, tag, StreamRng};
use crate::tensor::Tensor;

/// Probability that a volume contains any hemorrhage.
pub const POSITIVE_RATE: f64 = 0.5;
/// Probability that a positive volume has a second, different subtype.
pub const SECOND_SUBTYPE_RATE: f64 = 0.1;

const BRAIN_RADIUS: f64 = 0.9;
const NOISE_GRID: usize = 4;
const NOISE_AMPLITUDE: f64 = 0.02;
const BRAIN_LEVEL: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    /// Semi-axis along `angle` and perpendicular to it.
    ra: f64,
    rb: f64,
    angle: f64,
    intensity: f64,
    /// Crescents subtract a second ellipse shifted toward the center.
    crescent: bool,
}

impl Blob {
    fn for_subtype(subtype: usize, rng: &mut StreamRng) -> Blob {
        let theta = rng.random_range(0.0..2.0 * PI);
        let on_ring = |r: f64| (r * theta.cos(), r * theta.sin());
        match subtype {
            0 => {
                let (cx, cy) = on_ring(0.68);
                Blob { cx, cy, ra: 0.32, rb: 0.6, angle: theta, intensity: 1.05, crescent: false }
            }
            1 => {
                let r = rng.random_range(0.0..0.3);
                let (cx, cy) = on_ring(r);
                Blob { cx, cy, ra: 0.48, rb: 0.48, angle: 0.0, intensity: 1.1, crescent: false }
            }
            2 => {
                let cy = rng.random_range(-0.3..0.3);
                Blob { cx: 0.0, cy, ra: 0.2, rb: 0.8, angle: 0.0, intensity: 0.95, crescent: false }
            }
            3 => {
                let (cx, cy) = on_ring(0.8);
                Blob { cx, cy, ra: 0.16, rb: 1.4, angle: theta, intensity: 0.65, crescent: false }
            }
            _ => {
                let (cx, cy) = on_ring(0.72);
                Blob { cx, cy, ra: 0.4, rb: 1.1, angle: theta, intensity: 0.9, crescent: true }
            }
        }
    }

    /// Squared normalized ellipse distance of `(x, y)` from a center.
    fn dist2(&self, x: f64, y: f64, cx: f64, cy: f64, scale: f64) -> f64 {
        let (dx, dy) = (x - cx, y - cy);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let a = (dx * c + dy * s) / (self.ra * scale);
        let b = (-dx * s + dy * c) / (self.rb * scale);
        a * a + b * b
    }

    /// Added intensity at `(x, y)`; `scale` shrinks the blob toward the ends
    /// of its slice run.
    fn value(&self, x: f64, y: f64, scale: f64) -> f64 {
        let d = self.dist2(x, y, self.cx, self.cy, scale);
        let mut v = (1.5 * (1.0 - d)).clamp(0.0, 1.0);
        if self.crescent && v > 0.0 {
            let shift = 0.5 * self.ra;
            let (ix, iy) = (self.cx - shift * self.angle.cos(), self.cy - shift * self.angle.sin());
            if self.dist2(x, y, ix, iy, scale) < 0.6 {
                v = 0.0;
            }
        }
        self.intensity * v
    }
}

fn smooth_noise(hw: usize, amplitude: f64, rng: &mut StreamRng) -> Vec<f64> {
    let g = NOISE_GRID + 1;
    let grid: Vec<f64> = (0..g * g).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; hw * hw];
    for y in 0..hw {
        for x in 0..hw {
            let fy = (y as f64 + 0.5) / hw as f64 * NOISE_GRID as f64;
            let fx = (x as f64 + 0.5) / hw as f64 * NOISE_GRID as f64;
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            let at = |yy: usize, xx: usize| grid[yy.min(NOISE_GRID) * g + xx.min(NOISE_GRID)];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out[y * hw + x] = amplitude * (top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn coord(i: usize, hw: usize) -> f64 {
    (i as f64 + 0.5) / hw as f64 * 2.0 - 1.0
}

/// Generate the volume with index `index` of the dataset keyed by `seed`.
pub fn generate_volume(config: &ModelConfig, seed: u64, index: u64) -> VolumeSample {
    let mut rng = rng::keyed(seed, &[tag::DATA, index]);
    let (slices, hw) = (config.slices, config.input_hw);

    let mut lesions: Vec<(usize, Blob, usize, usize)> = Vec::new();
    if rng.random_bool(POSITIVE_RATE) {
        let first = rng.random_range(0..NUM_SUBTYPES);
        let mut subtypes = vec![first];
        if rng.random_bool(SECOND_SUBTYPE_RATE) {
            let offset = rng.random_range(1..NUM_SUBTYPES);
            subtypes.push((first + offset) % NUM_SUBTYPES);
        }
        for subtype in subtypes {
            let blob = Blob::for_subtype(subtype, &mut rng);
            let len = rng.random_range(1..=slices);
            let start = rng.random_range(0..=slices - len);
            lesions.push((subtype, blob, start, len));
        }
    }

    let mut data = Vec::with_capacity(slices * hw * hw);
    let mut slice_labels = vec![[false; NUM_LABELS]; slices];
    for (s, labels) in slice_labels.iter_mut().enumerate() {
        let noise = smooth_noise(hw, NOISE_AMPLITUDE, &mut rng);
        for y in 0..hw {
            for x in 0..hw {
                let (u, v) = (coord(x, hw), coord(y, hw));
                let inside = (u * u + v * v).sqrt() <= BRAIN_RADIUS;
                let mut value = if inside { BRAIN_LEVEL } else { 0.0 } + noise[y * hw + x];
                for (_, blob, start, len) in &lesions {
                    if (*start..start + len).contains(&s) {
                        // Ellipsoid profile along the slice axis.
                        let mid = *start as f64 + (*len as f64 - 1.0) / 2.0;
                        let t = (s as f64 - mid) / (*len as f64 / 2.0 + 0.5);
                        let scale = (1.0 - t * t).sqrt().max(0.6);
                        value += blob.value(u, v, scale);
                    }
                }
                data.push(f64::from(value.clamp(0.0, 1.0) as f32));
            }
        }
        for (subtype, _, start, len) in &lesions {
            if (*start..start + len).contains(&s) {
                labels[*subtype] = true;
            }
        }
    }

    let volume = Tensor::new(&[slices, 1, hw, hw], data).expect("dims from validated config");
    VolumeSample::from_slices(volume, slice_labels)
}

/// `n` volumes; volume `i` depends only on `(config, seed, i)`.
pub fn generate_dataset(n: usize, config: &ModelConfig, seed: u64) -> Vec<VolumeSample> {
    (0..n as u64).map(|i| generate_volume(config, seed, i)).collect()
}

/// Number of held-out volumes for a dataset of `n`: `round(eval_fraction · n)`,
/// at least one when `n > 1`, and never the whole dataset.
pub fn eval_count(n: usize, eval_fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((eval_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Split off the last `eval_count(n, eval_fraction)` volumes as held-out data.
pub fn train_eval_split(
    mut samples: Vec<VolumeSample>,
    eval_fraction: f64,
) -> (Vec<VolumeSample>, Vec<VolumeSample>) {
    let n_eval = eval_count(samples.len(), eval_fraction);
    let eval = samples.split_off(samples.len() - n_eval);
    (samples, eval)
}

pub fn label_counts(samples: &[VolumeSample]) -> [usize; NUM_LABELS] {
    let mut counts = [0; NUM_LABELS];
    for s in samples {
        for (c, &b) in counts.iter_mut().zip(&s.volume_labels) {
            *c += usize::from(b);
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::ANY;
    use proptest::prelude::*;

    fn cfg() -> ModelConfig {
        ModelConfig { input_hw: 16, slices: 4, ..ModelConfig::default() }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(12, &cfg(), 3);
        let b = generate_dataset(12, &cfg(), 3);
        assert_eq!(a, b);
        let c = generate_dataset(12, &cfg(), 4);
        assert_ne!(a, c);
    }

    #[test]
    fn positive_slices_are_brighter() {
        let data = generate_dataset(200, &cfg(), 11);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for sample in &data {
            for (s, labels) in sample.slice_labels.iter().enumerate() {
                let mean = sample.volume.index_outer(s).unwrap().sum() / (16.0 * 16.0);
                if labels[ANY] { pos.push(mean) } else { neg.push(mean) }
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(!pos.is_empty() && !neg.is_empty());
        assert!(avg(&pos) > avg(&neg), "{} vs {}", avg(&pos), avg(&neg));
    }

    #[test]
    fn about_half_are_negative() {
        let data = generate_dataset(400, &cfg(), 5);
        let negatives = data.iter().filter(|s| !s.volume_labels[ANY]).count();
        assert!((160..=240).contains(&negatives), "{negatives}");
    }

    #[test]
    fn every_subtype_occurs() {
        let counts = label_counts(&generate_dataset(300, &cfg(), 2));
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn split_sizes() {
        let data = generate_dataset(10, &cfg(), 1);
        let (train, eval) = train_eval_split(data.clone(), 0.2);
        assert_eq!((train.len(), eval.len()), (8, 2));
        assert_eq!(eval[0], data[8]);
        assert_eq!(eval_count(1, 0.5), 0);
        assert_eq!(eval_count(3, 0.0), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_labels_are_consistent(seed in any::<u64>(), index in 0u64..1000, slices in 1usize..6) {
            let config = ModelConfig { input_hw: 8, slices, ..ModelConfig::default() };
            let sample = generate_volume(&config, seed, index);
            prop_assert!(sample.labels_consistent());
            prop_assert!(sample.volume.data().iter().all(|&v| f64::from(v as f32) == v));
        }
    }
}
