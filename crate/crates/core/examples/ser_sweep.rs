//! SER curves and 1% thresholds for the classical decoders, written as CSV.
//!
//! cargo run --release --example ser_sweep -- 1000 > curves.csv

use morph::codec::morph::SfSet;
use morph::codec::CorMode;
use morph::harness::{compare_report, run_ser_sweep, snr_grid, Scheme, SweepConfig, DEFAULT_TARGET_SER};

fn main() -> morph::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let cfg = SweepConfig::new(trials, 1);
    let grid = snr_grid(-34.0, -14.0, 1.0)?;
    let schemes = [
        Scheme::Dechirp { sf: 12 },
        Scheme::Cor {
            sf_set: SfSet::SH9_12,
            mode: CorMode::Coherent,
        },
        Scheme::Cor {
            sf_set: SfSet::SH9_12,
            mode: CorMode::Noncoherent,
        },
        Scheme::Ifo2 { sf: 12 },
        Scheme::Ostinato { repeats: 4 },
    ];
    let mut curves = Vec::new();
    for s in &schemes {
        eprintln!("sweeping {} {}", s.id(), s.config());
        curves.push(run_ser_sweep(s, &grid, &cfg)?);
    }
    let report = compare_report(&curves, DEFAULT_TARGET_SER)?;
    eprint!("{}", report.table());
    print!("{}", report.csv);
    Ok(())
}
