//! LoRa chirp generation and standard dechirp demodulation.
//!
//! Chirps are produced by phase accumulation: every sample advances the phase
//! by `2π·f/fs` where `f` is the instantaneous frequency at the centre of the
//! sample interval. Sampling the frequency at the interval centre makes the
//! discrete base chirp exactly periodic, so a shifted symbol is a cyclic
//! rotation of the base chirp and consecutive chirps join without a phase
//! step.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_SF: u8 = 7;
pub const MAX_SF: u8 = 12;
pub const DEFAULT_BW: f64 = 125_000.0;

/// Taps in the decimation low-pass filter.
pub const DECIMATION_TAPS: usize = 64;

/// A finite run of complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    fs: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, fs: f64) -> Self {
        Self { samples, fs }
    }

    pub fn zeros(len: usize, fs: f64) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], fs)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|x[n]|²`; zero for an empty buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.energy() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Copies `range` out into a new buffer at the same rate.
    pub fn slice(&self, range: std::ops::Range<usize>) -> IqBuffer {
        IqBuffer::new(self.samples[range].to_vec(), self.fs)
    }

    pub fn extend_from(&mut self, other: &IqBuffer) {
        self.samples.extend_from_slice(&other.samples);
    }

    /// Multiplies every sample by `e^{jθ}`.
    pub fn rotate(&mut self, theta: f64) {
        let r = Complex64::from_polar(1.0, theta);
        for s in &mut self.samples {
            *s *= r;
        }
    }
}

/// Parameters of a single LoRa chirp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpConfig {
    pub sf: u8,
    pub bw: f64,
    pub fs: f64,
    pub symbol_value: u32,
}

impl ChirpConfig {
    /// A base chirp (`symbol_value = 0`) sampled at the chip rate.
    pub fn new(sf: u8, bw: f64) -> Result<Self> {
        let cfg = Self {
            sf,
            bw,
            fs: bw,
            symbol_value: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_value(mut self, symbol_value: u32) -> Result<Self> {
        self.symbol_value = symbol_value;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fs(mut self, fs: f64) -> Result<Self> {
        self.fs = fs;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_sf(self.sf)?;
        if !(self.bw.is_finite() && self.bw > 0.0) {
            return Err(Error::Parameter(format!("bandwidth {} must be positive", self.bw)));
        }
        oversampling(self.fs, self.bw)?;
        if self.symbol_value >= self.chips() as u32 {
            return Err(Error::Parameter(format!(
                "symbol value {} out of range for SF{} (< {})",
                self.symbol_value,
                self.sf,
                self.chips()
            )));
        }
        Ok(())
    }

    /// `2^sf`.
    pub fn chips(&self) -> usize {
        1usize << self.sf
    }

    pub fn oversampling(&self) -> usize {
        // validated at construction
        oversampling(self.fs, self.bw).unwrap_or(1)
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.chips() * self.oversampling()
    }

    pub fn duration_s(&self) -> f64 {
        self.chips() as f64 / self.bw
    }
}

pub fn validate_sf(sf: u8) -> Result<()> {
    if (MIN_SF..=MAX_SF).contains(&sf) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "spreading factor {sf} outside {MIN_SF}..={MAX_SF}"
        )))
    }
}

/// Integer ratio `fs / bw`, or a parameter error when it is not integral.
pub fn oversampling(fs: f64, bw: f64) -> Result<usize> {
    let ratio = fs / bw;
    let rounded = ratio.round();
    if !ratio.is_finite() || rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Parameter(format!(
            "sample rate {fs} is not an integer multiple of bandwidth {bw}"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Up,
    Down,
}

/// Generates one chirp.
///
/// The instantaneous frequency of sample `m` (chip position `(m + ½)/R`) is
/// `((value + (m + ½)/R) mod 2^sf)·bw/2^sf − bw/2`, negated for down-chirps,
/// and the phase starts at zero.
pub fn gen_chirp(cfg: &ChirpConfig, sweep: Sweep) -> Result<IqBuffer> {
    cfg.validate()?;
    let chips = cfg.chips() as f64;
    let r = cfg.oversampling();
    let n = cfg.samples_per_symbol();
    let sign = match sweep {
        Sweep::Up => 1.0,
        Sweep::Down => -1.0,
    };
    let mut samples = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for m in 0..n {
        samples.push(Complex64::from_polar(1.0, phase));
        let chip = (cfg.symbol_value as f64 + (m as f64 + 0.5) / r as f64).rem_euclid(chips);
        let freq = sign * (chip / chips - 0.5) * cfg.bw;
        phase = (phase + 2.0 * PI * freq / cfg.fs).rem_euclid(2.0 * PI);
    }
    Ok(IqBuffer::new(samples, cfg.fs))
}

/// Base up-chirp (value 0) at the chip rate.
pub fn base_upchirp(sf: u8, bw: f64) -> Result<IqBuffer> {
    gen_chirp(&ChirpConfig::new(sf, bw)?, Sweep::Up)
}

/// Base down-chirp (conjugate of the base up-chirp) at the chip rate.
pub fn base_downchirp(sf: u8, bw: f64) -> Result<IqBuffer> {
    gen_chirp(&ChirpConfig::new(sf, bw)?, Sweep::Down)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DechirpOutput {
    pub value: u32,
    /// Unnormalised transform magnitude at `value`.
    pub peak_mag: f64,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static DOWNCHIRPS: RefCell<HashMap<u8, Arc<Vec<Complex64>>>> = RefCell::new(HashMap::new());
}

/// Forward FFT plan of length `n`, cached per thread.
pub fn fft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// In-place unnormalised forward transform.
pub fn fft_in_place(buf: &mut [Complex64]) {
    fft_plan(buf.len()).process(buf);
}

/// Chip-rate base down-chirp for `sf`, cached per thread. The reference is
/// bandwidth independent at `fs = bw`.
pub(crate) fn downchirp_ref(sf: u8) -> Arc<Vec<Complex64>> {
    DOWNCHIRPS.with(|cache| {
        cache
            .borrow_mut()
            .entry(sf)
            .or_insert_with(|| {
                Arc::new(
                    base_downchirp(sf, DEFAULT_BW)
                        .expect("valid sf")
                        .into_samples(),
                )
            })
            .clone()
    })
}

/// Multiplies `sym` by the base down-chirp and returns the spectrum.
pub fn dechirp_spectrum(sym: &[Complex64], sf: u8) -> Result<Vec<Complex64>> {
    validate_sf(sf)?;
    let n = 1usize << sf;
    if sym.len() != n {
        return Err(Error::shape(format!("{n} samples"), sym.len()));
    }
    let down = downchirp_ref(sf);
    let mut buf: Vec<Complex64> = sym.iter().zip(down.iter()).map(|(a, b)| a * b).collect();
    fft_in_place(&mut buf);
    Ok(buf)
}

/// Index of the largest magnitude, lowest index on ties.
pub(crate) fn argmax_mag(spec: &[Complex64]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, c) in spec.iter().enumerate() {
        let m = c.norm_sqr();
        if m > best.1 {
            best = (i, m);
        }
    }
    (best.0, best.1.max(0.0).sqrt())
}

/// Standard LoRa demodulation of one chip-rate symbol.
pub fn dechirp_decode(sym: &IqBuffer, sf: u8) -> Result<DechirpOutput> {
    let spec = dechirp_spectrum(sym.samples(), sf)?;
    let (value, peak_mag) = argmax_mag(&spec);
    Ok(DechirpOutput {
        value: value as u32,
        peak_mag,
    })
}

/// Hamming-windowed sinc low-pass with cutoff `cutoff` (cycles per sample),
/// normalised to unit DC gain.
pub fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let center = (taps as f64 - 1.0) / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = k as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * k as f64 / (taps as f64 - 1.0)).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Low-pass filters to ±bw/2 and keeps every `fs/bw`-th sample.
pub fn decimate_to_chiprate(sig: &IqBuffer, bw: f64) -> Result<IqBuffer> {
    let r = oversampling(sig.fs(), bw)?;
    if r == 1 {
        return Ok(sig.clone());
    }
    let h = lowpass_taps(0.5 / r as f64, DECIMATION_TAPS);
    let x = sig.samples();
    let half = DECIMATION_TAPS / 2;
    let out_len = x.len() / r;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let m = i * r;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &hk) in h.iter().enumerate() {
            // centred filter; taps falling outside the buffer see zeros
            let idx = m as isize + half as isize - k as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += x[idx as usize] * hk;
            }
        }
        out.push(acc);
    }
    Ok(IqBuffer::new(out, bw))
}

/// Raw LoRa data rate `sf·bw/2^sf` in bits/s.
pub fn lora_data_rate(sf: u8, bw: f64) -> f64 {
    sf as f64 * bw / (1u64 << sf) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyclic_shift_oracle(base: &[Complex64], shift: usize) -> Vec<Complex64> {
        (0..base.len()).map(|n| base[(n + shift) % base.len()]).collect()
    }

    fn max_dev_after_phase_align(a: &[Complex64], b: &[Complex64]) -> f64 {
        let rot = a[0] * b[0].conj();
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y * rot).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn base_upchirp_sf7_sweeps_the_band() {
        let c = base_upchirp(7, DEFAULT_BW).unwrap();
        assert_eq!(c.len(), 128);
        for s in c.samples() {
            assert!((s.norm() - 1.0).abs() < 1e-9);
        }
        // instantaneous frequency from phase differences
        let freqs: Vec<f64> = c
            .samples()
            .windows(2)
            .map(|w| (w[1] * w[0].conj()).arg() / (2.0 * PI) * DEFAULT_BW)
            .collect();
        assert!(freqs[0] < -61_000.0);
        assert!(*freqs.last().unwrap() > 61_000.0);
        assert!(freqs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sf12_symbol_lasts_32_768_ms() {
        let cfg = ChirpConfig::new(12, DEFAULT_BW).unwrap();
        assert_eq!(cfg.samples_per_symbol(), 4096);
        assert!((cfg.duration_s() - 0.032768).abs() < 1e-12);
    }

    #[test]
    fn shifted_symbol_is_cyclic_rotation() {
        let base = base_upchirp(7, DEFAULT_BW).unwrap();
        let cfg = ChirpConfig::new(7, DEFAULT_BW).unwrap().with_value(32).unwrap();
        let shifted = gen_chirp(&cfg, Sweep::Up).unwrap();
        let oracle = cyclic_shift_oracle(base.samples(), 32);
        assert!(max_dev_after_phase_align(shifted.samples(), &oracle) < 1e-6);
    }

    #[test]
    fn oversampled_shift_is_cyclic_rotation() {
        let cfg = ChirpConfig::new(8, DEFAULT_BW).unwrap().with_fs(4.0 * DEFAULT_BW).unwrap();
        let base = gen_chirp(&cfg, Sweep::Up).unwrap();
        let shifted = gen_chirp(&cfg.with_value(77).unwrap(), Sweep::Up).unwrap();
        let oracle = cyclic_shift_oracle(base.samples(), 77 * 4);
        assert!(max_dev_after_phase_align(shifted.samples(), &oracle) < 1e-6);
    }

    #[test]
    fn downchirp_is_conjugate() {
        let up = base_upchirp(9, DEFAULT_BW).unwrap();
        let down = base_downchirp(9, DEFAULT_BW).unwrap();
        for (u, d) in up.samples().iter().zip(down.samples()) {
            assert!((u.conj() - d).norm() < 1e-9);
        }
    }

    #[test]
    fn dechirp_round_trip_and_peak() {
        let cfg = ChirpConfig::new(7, DEFAULT_BW).unwrap().with_value(42).unwrap();
        let sym = gen_chirp(&cfg, Sweep::Up).unwrap();
        let out = dechirp_decode(&sym, 7).unwrap();
        assert_eq!(out.value, 42);
        assert!((out.peak_mag - 128.0).abs() / 128.0 < 1e-6);
    }

    #[test]
    fn dechirp_rejects_wrong_length() {
        let sym = base_upchirp(8, DEFAULT_BW).unwrap();
        assert!(matches!(dechirp_decode(&sym, 7), Err(Error::Shape { .. })));
    }

    #[test]
    fn dechirp_ties_pick_lowest_bin() {
        let zeros = IqBuffer::zeros(128, DEFAULT_BW);
        assert_eq!(dechirp_decode(&zeros, 7).unwrap().value, 0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ChirpConfig::new(6, DEFAULT_BW).is_err());
        assert!(ChirpConfig::new(13, DEFAULT_BW).is_err());
        let cfg = ChirpConfig::new(7, DEFAULT_BW).unwrap();
        assert!(cfg.with_value(128).is_err());
        assert!(cfg.with_fs(1.5 * DEFAULT_BW).is_err());
    }

    #[test]
    fn decimation_identity_at_chip_rate() {
        let sym = base_upchirp(7, DEFAULT_BW).unwrap();
        assert_eq!(decimate_to_chiprate(&sym, DEFAULT_BW).unwrap(), sym);
    }

    #[test]
    fn decimation_rejects_fractional_ratio() {
        let sig = IqBuffer::zeros(100, 1.5 * DEFAULT_BW);
        assert!(matches!(
            decimate_to_chiprate(&sig, DEFAULT_BW),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn decimated_oversampled_chirp_decodes() {
        for value in [0u32, 1, 100, 255] {
            let cfg = ChirpConfig::new(8, DEFAULT_BW)
                .unwrap()
                .with_fs(8.0 * DEFAULT_BW)
                .unwrap()
                .with_value(value)
                .unwrap();
            let sym = gen_chirp(&cfg, Sweep::Up).unwrap();
            let dec = decimate_to_chiprate(&sym, DEFAULT_BW).unwrap();
            assert_eq!(dec.len(), 256);
            assert_eq!(dechirp_decode(&dec, 8).unwrap().value, value);
        }
    }

    #[test]
    fn decimated_white_noise_keeps_in_band_power() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let r = 2usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1 << 18;
        let samples: Vec<Complex64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let sig = IqBuffer::new(samples, r as f64 * DEFAULT_BW);
        // in-band share of the input measured directly from its spectrum
        let mut spec = sig.samples().to_vec();
        fft_in_place(&mut spec);
        let band = n / (2 * r);
        let in_band: f64 = spec
            .iter()
            .enumerate()
            .filter(|(k, _)| *k < band || *k >= n - band)
            .map(|(_, c)| c.norm_sqr())
            .sum::<f64>()
            / (n as f64 * n as f64);
        let out = decimate_to_chiprate(&sig, DEFAULT_BW).unwrap();
        let ratio_db = 10.0 * (out.power() / in_band).log10();
        assert!(ratio_db.abs() < 0.3, "{ratio_db} dB");
    }

    #[test]
    fn data_rate_formula() {
        assert!((lora_data_rate(12, DEFAULT_BW) - 366.2109375).abs() < 1e-9);
    }
}
