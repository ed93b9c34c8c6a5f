//! Binary volume files.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "FSCN"
//! 4       2         format version, u16 LE (= 1)
//! 6       2·3       S, H, W as u16 LE
//! 12      6         volume labels, one byte (0/1) per label
//! 18      6·S       slice labels, slice-major
//! 18+6S   4·S·H·W   intensities, f32 LE, slice-major then row-major
//! ```

use std::fs;
use std::path::Path;

use crate::data::VolumeSample;
use crate::error::{Error, Result};
use crate::labels::{LabelVector, NUM_LABELS};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FSCN";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 12;

/// Encode a sample. Intensities are narrowed to `f32`.
pub fn write_volume(sample: &VolumeSample) -> Result<Vec<u8>> {
    let shape = sample.volume.shape();
    let [s, 1, h, w] = *shape else {
        return Err(Error::shape(format!(
            "volume must be [S, 1, H, W], got {shape:?}"
        )));
    };
    let dims = [s, h, w]
        .map(|d| u16::try_from(d).map_err(|_| Error::shape(format!("dimension {d} exceeds u16"))));
    let [s16, h16, w16] = dims;
    if sample.slice_labels.len() != s {
        return Err(Error::shape(format!(
            "{} slice label rows for {s} slices",
            sample.slice_labels.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + NUM_LABELS * (s + 1) + 4 * sample.volume.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [s16?, h16?, w16?] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend(sample.volume_labels.iter().map(|&b| u8::from(b)));
    for row in &sample.slice_labels {
        out.extend(row.iter().map(|&b| u8::from(b)));
    }
    for &v in sample.volume.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            ));
        };
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn labels(&mut self, what: &str) -> Result<LabelVector> {
        let at = self.pos;
        let raw = self.take(NUM_LABELS, what)?;
        let mut out = [false; NUM_LABELS];
        for (i, (&b, o)) in raw.iter().zip(out.iter_mut()).enumerate() {
            *o = match b {
                0 => false,
                1 => true,
                _ => return Err(Error::format((at + i) as u64, format!("{what}: label byte {b} is not 0 or 1"))),
            };
        }
        Ok(out)
    }
}

/// Decode a volume file. Any structural problem is a format error carrying
/// the byte offset; nothing is returned on failure.
pub fn read_volume(bytes: &[u8]) -> Result<VolumeSample> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"FSCN\""));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = usize::from(cur.u16("dimensions")?);
        if *d == 0 {
            return Err(Error::format(6 + 2 * i as u64, "zero dimension"));
        }
    }
    let [s, h, w] = dims;
    let volume_labels = cur.labels("volume labels")?;
    let slice_labels = (0..s)
        .map(|_| cur.labels("slice labels"))
        .collect::<Result<Vec<_>>>()?;

    let payload_at = cur.pos;
    let expected = s * h * w * 4;
    let remaining = bytes.len() - payload_at;
    if remaining < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("declared {s}x{h}x{w} volume needs {expected} payload bytes, file has {remaining}"),
        ));
    }
    if remaining > expected {
        return Err(Error::format(
            (payload_at + expected) as u64,
            format!("{} trailing bytes after payload", remaining - expected),
        ));
    }
    let mut data = Vec::with_capacity(s * h * w);
    for (i, chunk) in cur.take(expected, "payload")?.chunks_exact(4).enumerate() {
        let v = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::format(
                (payload_at + 4 * i) as u64,
                format!("intensity {v} outside [0, 1]"),
            ));
        }
        data.push(v);
    }
    let sample = VolumeSample {
        volume: Tensor::new(&[s, 1, h, w], data)?,
        slice_labels,
        volume_labels,
    };
    if !sample.labels_consistent() {
        return Err(Error::format(12, "volume labels disagree with slice labels"));
    }
    Ok(sample)
}

pub fn save_volume(sample: &VolumeSample, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_volume(sample)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VolumeSample> {
    read_volume(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_volume;
    use crate::model::ModelConfig;

    fn sample() -> VolumeSample {
        let cfg = ModelConfig { input_hw: 8, slices: 3, ..ModelConfig::default() };
        (0..50)
            .map(|i| generate_volume(&cfg, 4, i))
            .find(|s| s.volume_labels.iter().any(|&b| b))
            .expect("some positive volume")
    }

    #[test]
    fn round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.fscn");
        let original = sample();
        save_volume(&original, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.slice_labels, original.slice_labels);
        assert_eq!(back.volume_labels, original.volume_labels);
        let worst = back
            .volume
            .data()
            .iter()
            .zip(original.volume.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7);
    }

    #[test]
    fn header_layout() {
        let bytes = write_volume(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"FSCN");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 3);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 8);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 8);
        assert_eq!(bytes.len(), 12 + 6 + 18 + 4 * 3 * 64);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_volume(&sample()).unwrap();
        bytes[1] = b'X';
        assert!(matches!(read_volume(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn declared_dims_exceed_payload() {
        let mut bytes = write_volume(&sample()).unwrap();
        // Claim 9 rows per slice while the payload holds 8.
        bytes[8..10].copy_from_slice(&9u16.to_le_bytes());
        let err = read_volume(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset == bytes.len() as u64), "{err}");

        let good = write_volume(&sample()).unwrap();
        let truncated = &good[..good.len() - 3];
        assert!(matches!(read_volume(truncated), Err(Error::Format { .. })));
        assert!(matches!(read_volume(&good[..5]), Err(Error::Format { .. })));
    }

    #[test]
    fn zero_dimension_and_bad_label_bytes() {
        let mut bytes = write_volume(&sample()).unwrap();
        bytes[8..10].copy_from_slice(&0u16.to_le_bytes());
        assert!(matches!(read_volume(&bytes), Err(Error::Format { offset: 8, .. })));

        let mut bytes = write_volume(&sample()).unwrap();
        bytes[13] = 7;
        assert!(matches!(read_volume(&bytes), Err(Error::Format { offset: 13, .. })));
    }

    #[test]
    fn inconsistent_labels_rejected() {
        let mut bytes = write_volume(&sample()).unwrap();
        // Flip the volume-level "any" flag.
        bytes[12 + 5] ^= 1;
        assert!(matches!(read_volume(&bytes), Err(Error::Format { .. })));
    }
}
