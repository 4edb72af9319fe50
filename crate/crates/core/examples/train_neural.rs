//! Train the compact neural decoder from 20 clean symbols per class, save a
//! checkpoint, then compare it with Cor at a few SNRs and prune it.
//!
//! cargo run --release --example train_neural -- 6 /tmp/morph.bin

use std::sync::Arc;

use morph::codec::morph::SfSet;
use morph::codec::CorMode;
use morph::harness::{build_dataset, run_ser_sweep, DatasetScheme, Scheme, SnrPolicy, SweepConfig};
use morph::neural::{prune_dense, train_with_progress, ModelSpec, NeuralDecoder, TrainConfig};
use morph::phy::DEFAULT_BW;

fn main() -> morph::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let out = args.next().unwrap_or_else(|| "morph_compact.bin".into());

    let data = build_dataset(DatasetScheme::Morph(SfSet::SH9_12), DEFAULT_BW, 20, SnrPolicy::Clean, 1)?;
    let cfg = TrainConfig {
        spec: ModelSpec::compact(),
        epochs,
        lr: 2e-3,
        snr_range_db: (-28.0, -8.0),
        augmentations: 50,
        warmup_epochs: epochs / 3,
        ..Default::default()
    };
    let trained = train_with_progress(&data.labeled(), &cfg, |e| eprintln!("epoch {} loss {:.4}", e.epoch, e.loss))?;
    trained.checkpoint.save(&out)?;
    println!("saved {out}: {:?}", trained.checkpoint.meta);

    let decoder = Arc::new(NeuralDecoder::from_checkpoint(&trained.checkpoint)?);
    let pruned = Arc::new(NeuralDecoder::new(prune_dense(decoder.network(), 0.5)?));
    let grid = [-20.0, -16.0, -12.0];
    let sweep = SweepConfig::new(200, 3);
    for s in [
        Scheme::Cor {
            sf_set: SfSet::SH9_12,
            mode: CorMode::Coherent,
        },
        Scheme::MorphNeural {
            sf_set: SfSet::SH9_12,
            decoder,
        },
        Scheme::MorphNeural {
            sf_set: SfSet::SH9_12,
            decoder: pruned,
        },
    ] {
        let c = run_ser_sweep(&s, &grid, &sweep)?;
        let sers: Vec<String> = c.points.iter().map(|p| format!("{}dB:{:.3}", p.snr_db, p.ser)).collect();
        println!("{:<8} {}", s.id(), sers.join("  "));
    }
    Ok(())
}
