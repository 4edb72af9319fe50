//! Real/imaginary short-time spectrograms for the neural decoder, and the
//! phase + noise augmentation used to train it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::add_awgn_with;
use crate::error::{Error, Result};
use crate::phy::{fft_in_place, IqBuffer};

pub const DEFAULT_F_BINS: usize = 64;
pub const DEFAULT_T_FRAMES: usize = 129;

/// `2 × F × T` tensor, channel 0 real and channel 1 imaginary, stored
/// channel-major then frequency then time.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Vec<f32>,
    pub f_bins: usize,
    pub t_frames: usize,
}

impl Spectrogram {
    pub fn shape(&self) -> [usize; 3] {
        [2, self.f_bins, self.t_frames]
    }

    pub fn at(&self, ch: usize, f: usize, t: usize) -> f32 {
        self.data[(ch * self.f_bins + f) * self.t_frames + t]
    }
}

/// Unnormalised STFT cells, frame-major: `cells[t][k]`.
///
/// Rectangular window of `f_bins` samples, hop `len/(t_frames − 1)`, and
/// `f_bins/2` zeros padded on both sides so frame `t` is centred on sample
/// `t·hop`.
pub fn stft_cells(sym: &[Complex64], f_bins: usize, t_frames: usize) -> Result<Vec<Vec<Complex64>>> {
    let n = sym.len();
    if f_bins == 0 || f_bins > n || !f_bins.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "{f_bins} frequency bins invalid for a {n}-sample symbol"
        )));
    }
    if t_frames < 2 || !n.is_multiple_of(t_frames - 1) {
        return Err(Error::Parameter(format!(
            "{n} samples do not split into {} equal hops",
            t_frames.saturating_sub(1)
        )));
    }
    let hop = n / (t_frames - 1);
    let half = f_bins / 2;
    let cells = (0..t_frames)
        .map(|t| {
            let mut frame: Vec<Complex64> = (0..f_bins)
                .map(|i| {
                    let idx = (t * hop + i) as isize - half as isize;
                    if idx >= 0 && (idx as usize) < n {
                        sym[idx as usize]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            fft_in_place(&mut frame);
            frame
        })
        .collect();
    Ok(cells)
}

/// Spectrogram divided by its RMS; an all-zero input stays zero.
pub fn stft_features(sym: &IqBuffer, f_bins: usize, t_frames: usize) -> Result<Spectrogram> {
    let cells = stft_cells(sym.samples(), f_bins, t_frames)?;
    let sum_sq: f64 = cells.iter().flatten().map(|c| c.norm_sqr()).sum();
    let count = 2 * f_bins * t_frames;
    let rms = (sum_sq / count as f64).sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 0.0 };
    let mut data = vec![0f32; count];
    let plane = f_bins * t_frames;
    for (t, frame) in cells.iter().enumerate() {
        for (k, c) in frame.iter().enumerate() {
            data[k * t_frames + t] = (c.re * scale) as f32;
            data[plane + k * t_frames + t] = (c.im * scale) as f32;
        }
    }
    Ok(Spectrogram {
        data,
        f_bins,
        t_frames,
    })
}

pub fn default_features(sym: &IqBuffer) -> Result<Spectrogram> {
    stft_features(sym, DEFAULT_F_BINS, DEFAULT_T_FRAMES)
}

/// The random draw behind one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub phase_rad: f64,
    pub snr_db: f64,
}

/// Uniform initial phase, then AWGN at an SNR uniform over `snr_range`.
pub fn augment(sym: &IqBuffer, snr_range: (f64, f64), seed: u64) -> Result<IqBuffer> {
    augment_with_draw(sym, snr_range, seed).map(|(s, _)| s)
}

pub fn augment_with_draw(
    sym: &IqBuffer,
    snr_range: (f64, f64),
    seed: u64,
) -> Result<(IqBuffer, AugmentDraw)> {
    let (lo, hi) = snr_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Parameter(format!("SNR range [{lo}, {hi}] is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase_rad = rng.random::<f64>() * 2.0 * PI;
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..hi) };
    let mut rotated = sym.clone();
    rotated.rotate(phase_rad);
    let out = add_awgn_with(&rotated, sym.power(), snr_db, &mut rng);
    Ok((out, AugmentDraw { phase_rad, snr_db }))
}
