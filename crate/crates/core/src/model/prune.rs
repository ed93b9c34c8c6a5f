use crate::error::{Error, Result};
use crate::params::{is_bias, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct Pruned {
    pub params: ModelParams,
    /// 1.0 where a weight survived, 0.0 where it was zeroed. Biases are
    /// always 1.0.
    pub mask: ModelParams,
}

/// Number of weights left nonzero: `ceil((1 - fraction) · total)`, with a
/// 1e-9 allowance so that products such as `0.7 · 10` land on 7.
pub fn surviving_count(total: usize, fraction: f64) -> usize {
    let keep = ((1.0 - fraction) * total as f64 - 1e-9).ceil();
    (keep.max(0.0) as usize).min(total)
}

/// Globally zero the smallest-magnitude `fraction` of weight coordinates.
///
/// Biases are never pruned. Magnitude ties are resolved by parameter name
/// order and then flat index, smallest first.
pub fn prune_by_magnitude(params: &ModelParams, fraction: f64) -> Result<Pruned> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::domain(format!("prune fraction {fraction} outside [0, 1]")));
    }
    let mut coords: Vec<(f64, usize, usize)> = Vec::new();
    let weights: Vec<&str> = params.names().filter(|n| !is_bias(n)).collect();
    for (t_idx, name) in weights.iter().enumerate() {
        let t = params.get(name).expect("name from same collection");
        coords.extend(t.data().iter().enumerate().map(|(i, v)| (v.abs(), t_idx, i)));
    }
    // Stable sort keeps (name, index) order among equal magnitudes.
    coords.sort_by(|a, b| a.0.total_cmp(&b.0));
    let drop = coords.len() - surviving_count(coords.len(), fraction);

    let mut pruned = params.clone();
    let mut mask = params.map(|_| 1.0);
    for &(_, t_idx, i) in &coords[..drop] {
        let name = weights[t_idx];
        pruned.get_mut(name).expect("present").data_mut()[i] = 0.0;
        mask.get_mut(name).expect("present").data_mut()[i] = 0.0;
    }
    Ok(Pruned { params: pruned, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn simple() -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::vector(vec![1.0, -4.0, 2.0, -3.0]).unwrap());
        p.insert("w.bias", Tensor::vector(vec![0.1, -0.2]).unwrap());
        p
    }

    #[test]
    fn zero_fraction_is_identity() {
        let out = prune_by_magnitude(&simple(), 0.0).unwrap();
        assert!(out.params.bitwise_eq(&simple()));
    }

    #[test]
    fn full_fraction_keeps_biases() {
        let out = prune_by_magnitude(&simple(), 1.0).unwrap();
        assert_eq!(out.params.get("w").unwrap().data(), &[0.0; 4]);
        assert_eq!(out.params.get("w.bias").unwrap().data(), &[0.1, -0.2]);
    }

    #[test]
    fn half_removes_smallest_magnitudes() {
        let out = prune_by_magnitude(&simple(), 0.5).unwrap();
        assert_eq!(out.params.get("w").unwrap().data(), &[0.0, -4.0, 0.0, -3.0]);
        assert_eq!(out.mask.get("w").unwrap().data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_break_by_name_then_index() {
        let mut p = ModelParams::new();
        p.insert("b", Tensor::vector(vec![1.0, 1.0]).unwrap());
        p.insert("a", Tensor::vector(vec![1.0, -1.0]).unwrap());
        let out = prune_by_magnitude(&p, 0.5).unwrap();
        assert_eq!(out.params.get("a").unwrap().data(), &[0.0, 0.0]);
        assert_eq!(out.params.get("b").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn out_of_range_fraction() {
        assert!(matches!(prune_by_magnitude(&simple(), 1.5), Err(Error::Domain(_))));
        assert!(matches!(prune_by_magnitude(&simple(), -0.1), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn surviving_weight_count(values in proptest::collection::vec(0.01f64..10.0, 1..60),
                                  fraction in 0.0f64..=1.0) {
            let mut p = ModelParams::new();
            let n = values.len();
            p.insert("w", Tensor::vector(values).unwrap());
            let out = prune_by_magnitude(&p, fraction).unwrap();
            let nonzero = out.params.get("w").unwrap().data().iter().filter(|v| **v != 0.0).count();
            prop_assert_eq!(nonzero, surviving_count(n, fraction));
            let exact = ((1.0 - fraction) * n as f64).ceil() as usize;
            prop_assert!(nonzero.abs_diff(exact) <= 1);
        }
    }
}
