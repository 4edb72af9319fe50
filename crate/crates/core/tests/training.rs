use morph::codec::morph::{morph_symbol, SfSet};
use morph::harness::{build_dataset, DatasetScheme, SnrPolicy};
use morph::neural::{prune_dense, train, Checkpoint, ModelSpec, NeuralDecoder, TrainConfig};
use morph::phy::DEFAULT_BW;

fn clean_set(per_class: usize) -> Vec<morph::neural::LabeledSymbol> {
    build_dataset(DatasetScheme::Morph(SfSet::SH9_12), DEFAULT_BW, per_class, SnrPolicy::Clean, 0)
        .unwrap()
        .labeled()
}

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        spec: ModelSpec::tiny(),
        epochs: 4,
        batch: 16,
        lr: 5e-3,
        seed,
        snr_range_db: (0.0, 10.0),
        augmentations: 8,
        ..Default::default()
    }
}

#[test]
fn same_seed_same_weights_and_losses() {
    let data = clean_set(5);
    let a = train(&data, &tiny_config(3)).unwrap();
    let b = train(&data, &tiny_config(3)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    let c = train(&data, &tiny_config(4)).unwrap();
    assert_ne!(a.checkpoint.params, c.checkpoint.params);
}

#[test]
fn loss_falls_over_the_first_epochs() {
    let data = clean_set(5);
    let out = train(&data, &tiny_config(1)).unwrap();
    let first = out.log[0].loss;
    let last = out.log.last().unwrap().loss;
    assert!(first.is_finite() && last < first, "{:?}", out.log);
    assert_eq!(out.checkpoint.meta.epochs, 4);
    assert_eq!(out.checkpoint.meta.dataset_digest.len(), 64);
}

#[test]
fn warmup_still_trains_on_the_full_range_eventually() {
    let data = clean_set(5);
    let cfg = TrainConfig {
        warmup_epochs: 2,
        snr_range_db: (-10.0, 10.0),
        ..tiny_config(2)
    };
    let out = train(&data, &cfg).unwrap();
    assert_eq!(out.log.len(), 4);
    assert!(out.log.iter().all(|l| l.loss.is_finite()));
}

#[test]
fn single_class_dataset_rejected() {
    let data: Vec<_> = clean_set(3).into_iter().filter(|s| s.label == 0).collect();
    assert!(train(&data, &tiny_config(0)).is_err());
}

#[test]
fn trained_decoder_ignores_carrier_phase() {
    let data = clean_set(10);
    let cfg = TrainConfig {
        spec: ModelSpec::compact(),
        epochs: 3,
        batch: 32,
        lr: 2e-3,
        seed: 6,
        snr_range_db: (0.0, 10.0),
        augmentations: 12,
        ..Default::default()
    };
    let out = train(&data, &cfg).unwrap();
    let dec = NeuralDecoder::from_checkpoint(&out.checkpoint).unwrap();
    let mut wrong = 0;
    for v in 0..4u8 {
        for k in 0..8 {
            let mut sym = morph_symbol(v, SfSet::SH9_12, DEFAULT_BW).unwrap();
            sym.rotate(k as f64 * std::f64::consts::FRAC_PI_4 + 0.1);
            wrong += usize::from(dec.decode(&sym).unwrap() != v);
        }
    }
    assert_eq!(wrong, 0);

    // the saved file decodes identically
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    out.checkpoint.save(&path).unwrap();
    let back = NeuralDecoder::load(&path).unwrap();
    let sym = morph_symbol(2, SfSet::SH9_12, DEFAULT_BW).unwrap();
    let f = dec.features(&sym).unwrap();
    assert_eq!(dec.logits(&f).unwrap(), back.logits(&f).unwrap());
    assert_eq!(Checkpoint::load(&path).unwrap().meta, out.checkpoint.meta);

    // pruning keeps the decoder working on clean symbols
    let pruned = NeuralDecoder::new(prune_dense(dec.network(), 0.5).unwrap());
    assert_eq!(pruned.decode(&sym).unwrap(), 2);
}
