//! Monte-Carlo SER sweeps, SNR thresholds, labelled datasets and comparison
//! reports.
//!
//! Every trial draws a uniformly random symbol, rotates it by a uniformly
//! random phase, adds white Gaussian noise referenced to the clean symbol
//! power and decodes it. Trials are grouped into fixed-size blocks whose
//! seeds are derived from `(seed, snr, block)`, so results do not depend on
//! the number of worker threads.

pub mod dataset;
pub mod detection;
pub mod report;
pub mod threshold;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::add_awgn_with;
use crate::codec::cor::{cor_decode, CorMode};
use crate::codec::ifo2::{ifo2_decode, ifo2_encode};
use crate::codec::morph::{morph_data_rate, morph_symbol, MorphFrameSpec, SfSet};
use crate::codec::ostinato::{OstinatoCodec, OSTINATO_SF};
use crate::error::{Error, Result};
use crate::neural::NeuralDecoder;
use crate::phy::{dechirp_decode, gen_chirp, lora_data_rate, validate_sf, ChirpConfig, IqBuffer, Sweep};
use crate::seed::derive_seed;

pub use dataset::{build_dataset, gen_dataset, read_dataset, write_dataset, Dataset, DatasetFooter, DatasetScheme, Record, SnrPolicy};
pub use detection::{detection_rate, false_alarm_rate, DetectionStats};
pub use report::{compare_report, data_rate_for, read_csv, write_csv, CompareReport, SummaryRow, CSV_HEADER};
pub use threshold::{refine_threshold, snr_threshold, ThresholdReport, DEFAULT_TARGET_SER};

/// Trials per seeded block.
pub const BLOCK_TRIALS: usize = 250;

/// Symbols per neural inference batch.
const NEURAL_BATCH: usize = 32;

/// A physical layer together with the decoder under test.
#[derive(Clone)]
pub enum Scheme {
    /// Plain LoRa symbols decoded by dechirp and argmax.
    Dechirp { sf: u8 },
    /// SF-hopping symbols decoded by correlation.
    Cor { sf_set: SfSet, mode: CorMode },
    /// SF-hopping symbols decoded by the neural network.
    MorphNeural { sf_set: SfSet, decoder: Arc<NeuralDecoder> },
    /// `repeats` identical SF-12 chirps.
    Ostinato { repeats: usize },
    /// Four initial-frequency offsets of one chirp, snapped dechirp decoding.
    Ifo2 { sf: u8 },
    /// Four initial-frequency offsets of one chirp, neural decoding.
    Ifo2Neural { sf: u8, decoder: Arc<NeuralDecoder> },
}

impl fmt::Debug for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id(), self.config())
    }
}

impl Scheme {
    /// Scheme column of the CSV.
    pub fn id(&self) -> &'static str {
        match self {
            Scheme::Dechirp { .. } => "dechirp",
            Scheme::Cor { mode: CorMode::Coherent, .. } => "cor",
            Scheme::Cor { mode: CorMode::Noncoherent, .. } => "cor-nc",
            Scheme::MorphNeural { .. } => "neural",
            Scheme::Ostinato { .. } => "ostinato",
            Scheme::Ifo2 { .. } => "ifo2",
            Scheme::Ifo2Neural { .. } => "ifo2-neural",
        }
    }

    /// Config column of the CSV.
    pub fn config(&self) -> String {
        match self {
            Scheme::Dechirp { sf } | Scheme::Ifo2 { sf } | Scheme::Ifo2Neural { sf, .. } => format!("SF{sf}"),
            Scheme::Cor { sf_set, .. } | Scheme::MorphNeural { sf_set, .. } => sf_set.to_string(),
            Scheme::Ostinato { repeats } => format!("k={repeats}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::Parameter(m) => Error::Config(m),
            other => other,
        })
    }

    fn check(&self) -> Result<()> {
        match self {
            Scheme::Dechirp { sf } => validate_sf(*sf),
            Scheme::Ifo2 { sf } | Scheme::Ifo2Neural { sf, .. } => {
                if (10..=12).contains(sf) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("IFO-2 needs SF 10..=12, got {sf}")))
                }
            }
            Scheme::Ostinato { repeats } => OstinatoCodec::new(*repeats, 1.0).map(|_| ()),
            Scheme::Cor { .. } | Scheme::MorphNeural { .. } => Ok(()),
        }
    }

    /// Number of distinct symbol values.
    pub fn alphabet(&self) -> u32 {
        match self {
            Scheme::Dechirp { sf } => 1 << sf,
            Scheme::Ostinato { .. } => 1 << OSTINATO_SF,
            _ => 4,
        }
    }

    /// Payload bit rate in bits per second.
    pub fn data_rate(&self, bw: f64) -> f64 {
        match self {
            Scheme::Dechirp { sf } => lora_data_rate(*sf, bw),
            Scheme::Cor { sf_set, .. } | Scheme::MorphNeural { sf_set, .. } => morph_data_rate(*sf_set, bw),
            Scheme::Ostinato { repeats } => lora_data_rate(OSTINATO_SF, bw) / *repeats as f64,
            Scheme::Ifo2 { sf } | Scheme::Ifo2Neural { sf, .. } => 2.0 * bw / (1u64 << sf) as f64,
        }
    }

    /// Clean waveform of symbol `value`.
    pub fn modulate(&self, value: u32, bw: f64) -> Result<IqBuffer> {
        match self {
            Scheme::Dechirp { sf } => gen_chirp(&ChirpConfig::new(*sf, bw)?.with_value(value)?, Sweep::Up),
            Scheme::Cor { sf_set, .. } | Scheme::MorphNeural { sf_set, .. } => morph_symbol(value as u8, *sf_set, bw),
            Scheme::Ostinato { repeats } => OstinatoCodec::new(*repeats, bw)?.encode(value),
            Scheme::Ifo2 { sf } | Scheme::Ifo2Neural { sf, .. } => ifo2_encode(value as u8, *sf, bw),
        }
    }

    /// Decoded symbol values.
    pub fn demodulate(&self, syms: &[IqBuffer]) -> Result<Vec<u32>> {
        match self {
            Scheme::Dechirp { sf } => syms.iter().map(|s| Ok(dechirp_decode(s, *sf)?.value)).collect(),
            Scheme::Cor { sf_set, mode } => {
                let spec = MorphFrameSpec::new(*sf_set, 1);
                syms.iter().map(|s| Ok(cor_decode(s, &spec, *mode)?.bits2 as u32)).collect()
            }
            Scheme::Ostinato { repeats } => {
                let codec = OstinatoCodec::new(*repeats, syms.first().map_or(1.0, |s| s.fs()))?;
                syms.iter().map(|s| Ok(codec.decode(s)?.value)).collect()
            }
            Scheme::Ifo2 { sf } => syms.iter().map(|s| Ok(ifo2_decode(s, *sf)? as u32)).collect(),
            Scheme::MorphNeural { decoder, .. } | Scheme::Ifo2Neural { decoder, .. } => {
                let mut out = Vec::with_capacity(syms.len());
                for chunk in syms.chunks(NEURAL_BATCH) {
                    out.extend(decoder.decode_batch(chunk)?.into_iter().map(u32::from));
                }
                Ok(out)
            }
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerPoint {
    pub snr_db: f64,
    pub n_symbols: usize,
    pub n_errors: usize,
    pub ser: f64,
}

impl SerPoint {
    pub fn new(snr_db: f64, n_symbols: usize, n_errors: usize) -> Self {
        Self {
            snr_db,
            n_symbols,
            n_errors,
            ser: if n_symbols == 0 { 0.0 } else { n_errors as f64 / n_symbols as f64 },
        }
    }

    /// 95% Wilson score interval for the SER.
    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.n_errors, self.n_symbols, 1.959_963_984_540_054)
    }
}

pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerCurve {
    pub scheme: String,
    pub config: String,
    pub bw: f64,
    pub data_rate_bps: f64,
    /// Sorted by SNR ascending.
    pub points: Vec<SerPoint>,
}

impl SerCurve {
    pub fn ser_at(&self, snr_db: f64) -> Option<f64> {
        self.points.iter().find(|p| p.snr_db == snr_db).map(|p| p.ser)
    }

    /// Adds points, keeping the SNR order; an existing SNR is replaced.
    pub fn merge(&mut self, points: impl IntoIterator<Item = SerPoint>) {
        for p in points {
            self.points.retain(|q| q.snr_db != p.snr_db);
            self.points.push(p);
        }
        self.points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub bw: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            bw: crate::phy::DEFAULT_BW,
            trials,
            seed,
        }
    }
}

/// `lo, lo + step, …` up to and including `hi`.
pub fn snr_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::Config(format!("bad SNR grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // round to suppress accumulated binary error in the printed values
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect())
}

/// Parses `lo:hi:step`.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad SNR grid '{s}', expected lo:hi:step")))
    };
    match parts.as_slice() {
        [lo, hi, step] => snr_grid(num(lo)?, num(hi)?, num(step)?),
        [lo, hi] => snr_grid(num(lo)?, num(hi)?, 1.0),
        _ => Err(Error::Config(format!("bad SNR grid '{s}', expected lo:hi:step"))),
    }
}

fn run_block(scheme: &Scheme, cfg: &SweepConfig, snr_db: f64, block: usize, n: usize) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, snr_db.to_bits(), block as u64]));
    let alphabet = scheme.alphabet();
    let mut truth = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    for _ in 0..n {
        let v = rng.random_range(0..alphabet);
        let mut sym = scheme.modulate(v, cfg.bw)?;
        sym.rotate(rng.random::<f64>() * 2.0 * PI);
        rx.push(add_awgn_with(&sym, 1.0, snr_db, &mut rng));
        truth.push(v);
    }
    let decoded = scheme.demodulate(&rx)?;
    Ok(decoded.iter().zip(&truth).filter(|(a, b)| a != b).count())
}

/// Errors at each SNR over `trials` symbols.
pub fn run_ser_sweep(scheme: &Scheme, grid: &[f64], cfg: &SweepConfig) -> Result<SerCurve> {
    run_ser_sweep_with_progress(scheme, grid, cfg, |_| {})
}

/// As [`run_ser_sweep`], reporting every finished point.
pub fn run_ser_sweep_with_progress(
    scheme: &Scheme,
    grid: &[f64],
    cfg: &SweepConfig,
    mut progress: impl FnMut(&SerPoint),
) -> Result<SerCurve> {
    scheme.validate()?;
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    if grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("SNR grid has a non-finite value".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let blocks = cfg.trials.div_ceil(BLOCK_TRIALS);
    let mut points = Vec::with_capacity(grid.len());
    for &snr in &grid {
        let errors: Vec<usize> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let n = BLOCK_TRIALS.min(cfg.trials - b * BLOCK_TRIALS);
                run_block(scheme, cfg, snr, b, n)
            })
            .collect::<Result<_>>()?;
        let p = SerPoint::new(snr, cfg.trials, errors.iter().sum());
        progress(&p);
        points.push(p);
    }
    Ok(SerCurve {
        scheme: scheme.id().to_string(),
        config: scheme.config(),
        bw: cfg.bw,
        data_rate_bps: scheme.data_rate(cfg.bw),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(snr_grid(-3.0, 0.0, 1.0).unwrap(), vec![-3.0, -2.0, -1.0, 0.0]);
        assert_eq!(parse_snr_grid("-1:0:0.5").unwrap(), vec![-1.0, -0.5, 0.0]);
        assert!(parse_snr_grid("1:0:1").is_err());
        assert!(parse_snr_grid("a:b").is_err());
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(20, 2000, 1.96);
        assert!(lo < 0.01 && 0.01 < hi);
        let (lo0, hi0) = wilson_interval(0, 2000, 1.96);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.003);
    }

    #[test]
    fn dechirp_sf7_is_error_free_at_20db() {
        let c = run_ser_sweep(&Scheme::Dechirp { sf: 7 }, &[20.0], &SweepConfig::new(500, 1)).unwrap();
        assert_eq!(c.points[0].n_errors, 0);
    }

    #[test]
    fn same_seed_same_curve() {
        let s = Scheme::Cor {
            sf_set: SfSet::SH7_10,
            mode: CorMode::Coherent,
        };
        let cfg = SweepConfig::new(300, 7);
        let a = run_ser_sweep(&s, &[-20.0, -16.0], &cfg).unwrap();
        let b = run_ser_sweep(&s, &[-16.0, -20.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_scheme_is_config_error() {
        let r = run_ser_sweep(&Scheme::Ostinato { repeats: 3 }, &[0.0], &SweepConfig::new(10, 1));
        assert!(matches!(r, Err(Error::Config(_))));
        let r = run_ser_sweep(&Scheme::Ifo2 { sf: 9 }, &[0.0], &SweepConfig::new(10, 1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn data_rates() {
        let bw = 125_000.0;
        let morph = Scheme::Cor {
            sf_set: SfSet::SH9_12,
            mode: CorMode::Coherent,
        };
        assert!((morph.data_rate(bw) - 61.035_156_25).abs() < 1e-9);
        assert!((Scheme::Dechirp { sf: 12 }.data_rate(bw) - 366.210_937_5).abs() < 1e-9);
    }
}
