use super::model::Network;
use super::scalar::Real;
use crate::error::{Error, Result};

/// Zeroes all but the `⌈keep·n⌉` largest-magnitude weights of every dense
/// layer. Biases and other layers are untouched; among equal magnitudes the
/// earlier weight is kept.
pub fn prune_dense<T: Real>(net: &Network<T>, keep_fraction: f64) -> Result<Network<T>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let mut out = net.clone();
    for range in net.dense_weight_ranges() {
        let w = &mut out.params[range];
        let keep = (keep_fraction * w.len() as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].abs().partial_cmp(&w[a].abs()).unwrap_or(std::cmp::Ordering::Equal));
        for &i in &order[keep..] {
            w[i] = T::zero();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::ModelSpec;

    #[test]
    fn full_keep_is_identity() {
        let net = Network::<f32>::new(ModelSpec::tiny(), 3).unwrap();
        assert_eq!(prune_dense(&net, 1.0).unwrap().params, net.params);
    }

    #[test]
    fn half_keep_leaves_exact_count_of_largest() {
        let net = Network::<f32>::new(ModelSpec::compact(), 3).unwrap();
        let pruned = prune_dense(&net, 0.5).unwrap();
        for r in net.dense_weight_ranges() {
            let before = &net.params[r.clone()];
            let after = &pruned.params[r];
            let nz = after.iter().filter(|v| **v != 0.0).count();
            assert_eq!(nz, before.len().div_ceil(2));
            let min_kept = after.iter().filter(|v| **v != 0.0).fold(f32::INFINITY, |m, v| m.min(v.abs()));
            let max_zeroed = before
                .iter()
                .zip(after)
                .filter(|(_, a)| **a == 0.0)
                .fold(0f32, |m, (b, _)| m.max(b.abs()));
            assert!(min_kept >= max_zeroed);
        }
        let outside: Vec<usize> = (0..net.params.len())
            .filter(|i| !net.dense_weight_ranges().iter().any(|r| r.contains(i)))
            .collect();
        assert!(outside.iter().all(|&i| net.params[i] == pruned.params[i]));
    }

    #[test]
    fn invalid_fraction_rejected() {
        let net = Network::<f32>::new(ModelSpec::tiny(), 3).unwrap();
        for f in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(prune_dense(&net, f).is_err());
        }
    }
}
