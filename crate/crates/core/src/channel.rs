//! AWGN and oscillator-offset impairments.
//!
//! SNR is transmit referenced: the noise variance is set from the power of
//! the clean input, measured over the full chip-rate band.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::phy::IqBuffer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub sfo_ppm: f64,
    pub phase0_rad: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Pure AWGN at `snr_db`.
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            cfo_hz: 0.0,
            sfo_ppm: 0.0,
            phase0_rad: 0.0,
            seed,
        }
    }

    pub fn with_phase(mut self, phase0_rad: f64) -> Self {
        self.phase0_rad = phase0_rad.rem_euclid(2.0 * PI);
        self
    }

    pub fn with_cfo(mut self, cfo_hz: f64) -> Self {
        self.cfo_hz = cfo_hz;
        self
    }

    pub fn with_sfo(mut self, sfo_ppm: f64) -> Self {
        self.sfo_ppm = sfo_ppm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::Parameter(format!("snr_db {} not finite", self.snr_db)));
        }
        if !(self.sfo_ppm.abs() < 100.0) {
            return Err(Error::Parameter(format!(
                "|sfo_ppm| = {} must stay below 100",
                self.sfo_ppm.abs()
            )));
        }
        if !self.cfo_hz.is_finite() || !self.phase0_rad.is_finite() {
            return Err(Error::Parameter("non-finite offset".into()));
        }
        Ok(())
    }
}

/// Noise variance (total, both components) for a signal of power `ps`.
pub fn noise_variance(ps: f64, snr_db: f64) -> f64 {
    ps / 10f64.powf(snr_db / 10.0)
}

/// Draws `n` circular complex Gaussian samples of total variance `var`.
pub fn complex_gaussian(n: usize, var: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let sd = (var / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// Adds complex white Gaussian noise so that `mean|x|² / σ² = 10^(snr_db/10)`.
pub fn add_awgn(sig: &IqBuffer, snr_db: f64, seed: u64) -> IqBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_awgn_with(sig, sig.power(), snr_db, &mut rng)
}

/// As [`add_awgn`] with an explicit reference power and generator.
pub fn add_awgn_with(sig: &IqBuffer, ref_power: f64, snr_db: f64, rng: &mut ChaCha8Rng) -> IqBuffer {
    let var = noise_variance(ref_power, snr_db);
    let noise = complex_gaussian(sig.len(), var, rng);
    let samples = sig
        .samples()
        .iter()
        .zip(noise)
        .map(|(s, n)| s + n)
        .collect();
    IqBuffer::new(samples, sig.fs())
}

/// Rotates by `phase0 + 2π·cfo·n/fs`, then stretches the time axis by
/// `1 + sfo_ppm·1e-6` with linear interpolation. Samples that would be read
/// past the end of the input are zero.
pub fn apply_offsets(sig: &IqBuffer, cfg: &ChannelConfig) -> IqBuffer {
    let fs = sig.fs();
    let rotated: Vec<Complex64> = sig
        .samples()
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, cfg.phase0_rad + 2.0 * PI * cfg.cfo_hz * n as f64 / fs))
        .collect();
    if cfg.sfo_ppm == 0.0 {
        return IqBuffer::new(rotated, fs);
    }
    let scale = 1.0 + cfg.sfo_ppm * 1e-6;
    let len = rotated.len();
    let at = |i: usize| rotated.get(i).copied().unwrap_or_default();
    let resampled = (0..len)
        .map(|n| {
            let t = n as f64 * scale;
            let i = t.floor() as usize;
            let frac = t - i as f64;
            at(i) * (1.0 - frac) + at(i + 1) * frac
        })
        .collect();
    IqBuffer::new(resampled, fs)
}

/// Offsets followed by AWGN referenced to the clean input power.
pub fn impair(sig: &IqBuffer, cfg: &ChannelConfig) -> Result<IqBuffer> {
    cfg.validate()?;
    let shifted = apply_offsets(sig, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(add_awgn_with(&shifted, sig.power(), cfg.snr_db, &mut rng))
}
