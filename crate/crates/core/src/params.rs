//! Named parameter collections.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered map from parameter name to tensor.
///
/// Iteration order is lexicographic by name, which fixes the layout of
/// [`ModelParams::flatten`], the checkpoint format and pruning tie-breaks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

/// Biases are exempt from pruning. A parameter is a bias when the last
/// dotted segment of its name starts with `bias`.
pub fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|s| s.starts_with("bias"))
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Like [`ModelParams::get`] but a missing name is a shape error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::shape(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn same_layout(&self, other: &ModelParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for t in self.tensors.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuild a collection with this one's layout from a flat buffer.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "flat buffer has {} values, layout needs {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        let mut tensors = BTreeMap::new();
        for (name, t) in &self.tensors {
            let data = flat[offset..offset + t.len()].to_vec();
            offset += t.len();
            tensors.insert(name.clone(), Tensor::new(t.shape(), data)?);
        }
        Ok(ModelParams { tensors })
    }

    /// Coordinate-wise combination of two collections with the same layout.
    pub fn zip_with(&self, other: &ModelParams, f: impl Fn(f64, f64) -> f64) -> Result<ModelParams> {
        if !self.same_layout(other) {
            return Err(Error::Protocol(
                "parameter collections have different layouts".into(),
            ));
        }
        let tensors = self
            .tensors
            .iter()
            .zip(other.tensors.values())
            .map(|((name, a), b)| Ok((name.clone(), a.zip_map(b, &f)?)))
            .collect::<Result<_>>()?;
        Ok(ModelParams { tensors })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ModelParams {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), t.map(&f)))
                .collect(),
        }
    }

    /// Euclidean norm over every coordinate.
    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .values()
            .map(Tensor::sum_squares)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0` and comparing NaN payloads.
    pub fn bitwise_eq(&self, other: &ModelParams) -> bool {
        self.same_layout(other)
            && self.flatten().iter().zip(other.flatten()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("b.weight", Tensor::new(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        p.insert("a.bias", Tensor::vector(vec![0.25, -0.0]).unwrap());
        p
    }

    #[test]
    fn flatten_follows_name_order() {
        assert_eq!(sample().flatten(), vec![0.25, -0.0, 1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn bias_detection() {
        assert!(is_bias("head.bias"));
        assert!(is_bias("gru.bias_z"));
        assert!(!is_bias("gru.w_z"));
        assert!(!is_bias("encoder.block0.layer1.kernel"));
    }

    proptest! {
        #[test]
        fn unflatten_round_trips_bitwise(values in proptest::collection::vec(any::<f64>(), 6)) {
            let layout = sample();
            let rebuilt = layout.unflatten(&values).unwrap();
            let back = rebuilt.flatten();
            prop_assert!(values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
