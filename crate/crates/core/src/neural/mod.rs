//! Mask-then-classify neural decoder: network, training, pruning and
//! checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod prune;
pub mod scalar;
pub mod train;

use std::path::Path;

pub use checkpoint::{Checkpoint, TrainMeta};
pub use gradcheck::{grad_check, GradCheck};
pub use model::{ConvSpec, ModelSpec, Network, PARAM_BUDGET};
pub use prune::prune_dense;
pub use train::{train, train_with_progress, EpochLog, LabeledSymbol, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::features::{stft_features, Spectrogram};
use crate::phy::IqBuffer;
use model::argmax;

/// Inference wrapper around a trained network.
#[derive(Debug, Clone)]
pub struct NeuralDecoder {
    net: Network<f32>,
}

impl NeuralDecoder {
    pub fn new(net: Network<f32>) -> Self {
        Self { net }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self::new(ck.network()?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn features(&self, sym: &IqBuffer) -> Result<Spectrogram> {
        let s = self.net.spec();
        stft_features(sym, s.input[1], s.input[2])
    }

    pub fn logits(&self, spec: &Spectrogram) -> Result<[f32; 4]> {
        let want = self.net.spec().input;
        if spec.shape() != want {
            return Err(Error::shape(format!("{want:?}"), format!("{:?}", spec.shape())));
        }
        let out = self.net.forward(&spec.data, 1)?;
        Ok([out[0], out[1], out[2], out[3]])
    }

    pub fn classify(&self, spec: &Spectrogram) -> Result<u8> {
        Ok(argmax(&self.logits(spec)?))
    }

    /// Decodes several symbol windows in one batched pass.
    pub fn decode_batch(&self, syms: &[IqBuffer]) -> Result<Vec<u8>> {
        if syms.is_empty() {
            return Ok(Vec::new());
        }
        let mut flat = Vec::with_capacity(syms.len() * self.net.spec().input_len());
        for s in syms {
            flat.extend_from_slice(&self.features(s)?.data);
        }
        let logits = self.net.forward(&flat, syms.len())?;
        Ok(logits.chunks_exact(4).map(argmax).collect())
    }

    pub fn decode(&self, sym: &IqBuffer) -> Result<u8> {
        self.classify(&self.features(sym)?)
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{batch_gradient, batch_loss};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tiny_batch(batch: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = ModelSpec::tiny().input_len();
        let x = (0..batch * n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y = (0..batch).map(|b| (b % 4) as u8).collect();
        (x, y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = Network::<f64>::new(ModelSpec::tiny(), 5).unwrap();
        assert!(net.param_count() <= 5000);
        let (x, y) = tiny_batch(3, 6);
        let gc = grad_check(&net, &x, &y).unwrap();
        assert_eq!(gc.checked, net.param_count());
        assert!(gc.max_rel_err < 1e-3, "max relative error {}", gc.max_rel_err);
    }

    #[test]
    fn saturated_correct_predictions_have_vanishing_gradient() {
        let mut net = Network::<f64>::new(ModelSpec::tiny(), 5).unwrap();
        // steer the output bias so class 2 wins by a wide margin
        let (x, _) = tiny_batch(2, 7);
        let r = net.dense_weight_ranges().last().unwrap().clone();
        net.params[r.clone()].iter_mut().for_each(|w| *w = 0.0);
        let bias = r.end..r.end + 4;
        for (k, b) in net.params[bias].iter_mut().enumerate() {
            *b = if k == 2 { 60.0 } else { -60.0 };
        }
        let g = batch_gradient(&net, &x, &[2, 2]).unwrap();
        assert!(batch_loss(&net, &x, &[2, 2]).unwrap() < 1e-40);
        assert!(g.iter().all(|v| v.abs() < 1e-40));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let net = Network::<f64>::new(ModelSpec::tiny(), 8).unwrap();
        let (x, y) = tiny_batch(1, 9);
        // normalisation statistics depend on the batch, so compare in a
        // batch of two copies against the same batch's per-sample split
        let two: Vec<f64> = x.iter().chain(&x).copied().collect();
        let g2 = batch_gradient(&net, &two, &[y[0], y[0]]).unwrap();
        let trace = net.run(&two, 2, model::Mode::Train).unwrap();
        let (_, mut d) = model::cross_entropy(&trace.logits, &[y[0], y[0]], 4);
        d[4..].iter_mut().for_each(|v| *v = 0.0);
        let g1 = net.backward(&trace, &d);
        let scale = g2.iter().fold(0f64, |m, v| m.max(v.abs()));
        for (a, b) in g2.iter().zip(&g1) {
            assert!((a - 2.0 * b).abs() <= 1e-12 * scale, "{a} vs 2×{b}");
        }
    }

    #[test]
    fn decoder_checks_feature_shape() {
        let dec = NeuralDecoder::new(Network::new(ModelSpec::tiny(), 1).unwrap());
        let wrong = Spectrogram {
            data: vec![0.0; 2 * 64 * 129],
            f_bins: 64,
            t_frames: 129,
        };
        assert!(matches!(dec.logits(&wrong), Err(Error::Shape { .. })));
    }
}
