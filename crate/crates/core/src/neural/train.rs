//! Training from a handful of clean symbols per class.
//!
//! Clean symbols are split 80/20 per class. Every epoch draws fresh
//! augmentations (random phase, random SNR) of each training symbol, so the
//! network never sees the same noisy sample twice. Validation accuracy is
//! measured on the held-out clean symbols under random phase.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, TrainMeta};
use super::model::{argmax, cross_entropy, Mode, ModelSpec, Network};
use crate::error::{Error, Result};
use crate::features::{augment, stft_features};
use crate::phy::IqBuffer;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSymbol {
    pub label: u8,
    pub iq: IqBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub snr_range_db: (f64, f64),
    /// Augmented copies of each training symbol per epoch.
    pub augmentations: usize,
    pub val_fraction: f64,
    /// Epochs over which the lower SNR bound is lowered in equal steps from
    /// the upper bound to its final value; 0 trains on the full range from
    /// the start.
    pub warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            spec: ModelSpec::standard(),
            epochs: 30,
            batch: 64,
            lr: 1e-3,
            seed: 0,
            snr_range_db: (-40.0, 0.0),
            augmentations: 200,
            val_fraction: 0.2,
            warmup_epochs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample cross-entropy.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Adam with the usual defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// SNR range used in `epoch`.
pub fn epoch_snr_range(cfg: &TrainConfig, epoch: usize) -> (f64, f64) {
    let (lo, hi) = cfg.snr_range_db;
    if epoch >= cfg.warmup_epochs {
        return (lo, hi);
    }
    let frac = (epoch + 1) as f64 / (cfg.warmup_epochs + 1) as f64;
    (hi - (hi - lo) * frac, hi)
}

/// SHA-256 over labels and sample bits, hex.
pub fn dataset_digest(data: &[LabeledSymbol]) -> String {
    let mut h = Sha256::new();
    for s in data {
        h.update([s.label]);
        h.update((s.iq.len() as u64).to_le_bytes());
        for c in s.iq.samples() {
            h.update(c.re.to_le_bytes());
            h.update(c.im.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-class 80/20 split (at least one symbol of each class for training).
/// Returns `(train, validation)` indices.
pub fn split_indices(data: &[LabeledSymbol], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Parameter(format!("validation fraction {val_fraction} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x5917]));
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 0..4u8 {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == class).collect();
        if idx.is_empty() {
            return Err(Error::Dataset(format!("class {class} has no symbols")));
        }
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).min(idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    Ok((train, val))
}

fn features(spec: &ModelSpec, iq: &IqBuffer) -> Result<Vec<f32>> {
    Ok(stft_features(iq, spec.input[1], spec.input[2])?.data)
}

/// Classification accuracy of `net` on `(features, label)` pairs.
pub fn accuracy(net: &Network<f32>, inputs: &[Vec<f32>], labels: &[u8], batch: usize) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut correct = 0;
    for (xs, ys) in inputs.chunks(batch.max(1)).zip(labels.chunks(batch.max(1))) {
        let flat: Vec<f32> = xs.iter().flatten().copied().collect();
        let logits = net.forward(&flat, xs.len())?;
        correct += logits
            .chunks_exact(4)
            .zip(ys)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    Ok(correct as f64 / inputs.len() as f64)
}

/// Clean symbols under a seeded random phase, as network inputs.
fn clean_inputs(spec: &ModelSpec, data: &[LabeledSymbol], idx: &[usize], seed: u64) -> Result<(Vec<Vec<f32>>, Vec<u8>)> {
    let xs = idx
        .iter()
        .map(|&i| {
            let rotated = augment(&data[i].iq, (300.0, 300.0), derive_seed(&[seed, i as u64]))?;
            features(spec, &rotated)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((xs, idx.iter().map(|&i| data[i].label).collect()))
}

pub fn train(data: &[LabeledSymbol], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(data, cfg, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    data: &[LabeledSymbol],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if cfg.batch == 0 || cfg.epochs == 0 || cfg.augmentations == 0 {
        return Err(Error::Config("batch, epochs and augmentations must be positive".into()));
    }
    if data.iter().any(|s| s.label > 3) {
        return Err(Error::Dataset("labels must be in 0..4".into()));
    }
    let (train_idx, val_idx) = split_indices(data, cfg.val_fraction, cfg.seed)?;
    let mut net = Network::<f32>::new(cfg.spec.clone(), derive_seed(&[cfg.seed, 0x1417]))?;
    let mut opt = Adam::new(net.param_count(), cfg.lr);

    // (symbol index, augmentation index) pairs visited each epoch
    let mut jobs: Vec<(usize, usize)> = train_idx
        .iter()
        .flat_map(|&i| (0..cfg.augmentations).map(move |a| (i, a)))
        .collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 0xe90c, epoch as u64]));
        jobs.shuffle(&mut rng);
        let range = epoch_snr_range(cfg, epoch);
        let mut total = 0.0;
        for chunk in jobs.chunks(cfg.batch) {
            let xs = chunk
                .par_iter()
                .map(|&(i, a)| {
                    let s = derive_seed(&[cfg.seed, epoch as u64, i as u64, a as u64]);
                    features(&cfg.spec, &augment(&data[i].iq, range, s)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<u8> = chunk.iter().map(|&(i, _)| data[i].label).collect();
            let flat: Vec<f32> = xs.into_iter().flatten().collect();
            let trace = net.run(&flat, chunk.len(), Mode::Train)?;
            let (loss, dlogits) = cross_entropy(&trace.logits, &labels, 4);
            let grads = net.backward(&trace, &dlogits);
            net.update_running_stats(&trace);
            opt.step(&mut net.params, &grads);
            total += loss as f64;
        }
        let entry = EpochLog {
            epoch,
            loss: total / jobs.len() as f64,
        };
        progress(&entry);
        log.push(entry);
    }

    let (tx, ty) = clean_inputs(&cfg.spec, data, &train_idx, derive_seed(&[cfg.seed, 0xacc0]))?;
    let (vx, vy) = clean_inputs(&cfg.spec, data, &val_idx, derive_seed(&[cfg.seed, 0xacc1]))?;
    let meta = TrainMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        dataset_digest: dataset_digest(data),
        train_accuracy: accuracy(&net, &tx, &ty, cfg.batch)?,
        val_accuracy: accuracy(&net, &vx, &vy, cfg.batch)?,
        final_loss: log.last().map_or(f64::NAN, |l| l.loss),
        snr_range_db: cfg.snr_range_db,
        augmentations: cfg.augmentations,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_network(&net, meta),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::morph::{morph_symbol, SfSet};
    use crate::phy::DEFAULT_BW;

    fn clean_set(per_class: usize) -> Vec<LabeledSymbol> {
        (0..4u8)
            .flat_map(|v| {
                (0..per_class).map(move |_| LabeledSymbol {
                    label: v,
                    iq: morph_symbol(v, SfSet::SH9_12, DEFAULT_BW).unwrap(),
                })
            })
            .collect()
    }

    #[test]
    fn empty_class_is_dataset_error() {
        let mut data = clean_set(2);
        data.retain(|s| s.label != 3);
        let cfg = TrainConfig {
            spec: ModelSpec::compact(),
            ..Default::default()
        };
        assert!(matches!(train(&data, &cfg), Err(Error::Dataset(_))));
    }

    #[test]
    fn split_is_per_class_and_disjoint() {
        let data = clean_set(20);
        let (tr, va) = split_indices(&data, 0.2, 4).unwrap();
        assert_eq!(tr.len(), 64);
        assert_eq!(va.len(), 16);
        for c in 0..4u8 {
            assert_eq!(va.iter().filter(|&&i| data[i].label == c).count(), 4);
        }
        assert!(tr.iter().all(|i| !va.contains(i)));
    }

    #[test]
    fn warmup_lowers_the_floor_in_steps() {
        let cfg = TrainConfig {
            snr_range_db: (-30.0, 0.0),
            warmup_epochs: 2,
            ..Default::default()
        };
        assert_eq!(epoch_snr_range(&cfg, 0), (-10.0, 0.0));
        assert_eq!(epoch_snr_range(&cfg, 1), (-20.0, 0.0));
        assert_eq!(epoch_snr_range(&cfg, 2), (-30.0, 0.0));
        assert_eq!(epoch_snr_range(&cfg, 9), (-30.0, 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Adam::new(2, 0.01);
        let mut p = [1.0f32, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 0.99).abs() < 1e-6);
    }
}
