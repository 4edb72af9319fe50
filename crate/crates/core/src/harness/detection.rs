//! Monte-Carlo detection and false-alarm rates of the preamble detector.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{add_awgn_with, complex_gaussian, noise_variance};
use crate::codec::morph::{morph_encode, MorphFrameSpec};
use crate::detect::detect_preamble;
use crate::error::Result;
use crate::phy::IqBuffer;
use crate::seed::derive_seed;

/// Payload symbols in each simulated frame.
pub const TRIAL_PAYLOAD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    pub trials: usize,
    /// Frames found with the start within one sample of the truth.
    pub detected: usize,
    pub rate: f64,
}

fn stats(trials: usize, hits: usize) -> DetectionStats {
    DetectionStats {
        trials,
        detected: hits,
        rate: hits as f64 / trials.max(1) as f64,
    }
}

/// One frame at a random offset within the first symbol period, random
/// phase, AWGN at `snr_db` relative to the frame power.
pub fn detection_rate(spec: &MorphFrameSpec, snr_db: f64, trials: usize, seed: u64) -> Result<DetectionStats> {
    let l = spec.symbol_len();
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xde7, t as u64]));
            let bits: Vec<bool> = (0..2 * spec.payload_symbols).map(|_| rng.random()).collect();
            let mut frame = morph_encode(&bits, spec)?;
            frame.rotate(rng.random::<f64>() * 2.0 * PI);
            let offset = rng.random_range(0..l);
            let mut stream = IqBuffer::zeros(frame.len() + 2 * l, spec.bw);
            stream.samples_mut()[offset..offset + frame.len()].copy_from_slice(frame.samples());
            let rx = add_awgn_with(&stream, 1.0, snr_db, &mut rng);
            let det = detect_preamble(&rx, spec.sf_max(), spec.preamble_len)?;
            Ok(det.found && det.start_index.abs_diff(offset) <= 1)
        })
        .collect::<Result<_>>()?;
    Ok(stats(trials, hits.iter().filter(|h| **h).count()))
}

/// Streams of `frames` frame-lengths of unit-power noise; counts streams in
/// which the detector fires.
pub fn false_alarm_rate(spec: &MorphFrameSpec, frames: usize, trials: usize, seed: u64) -> Result<DetectionStats> {
    let len = frames * spec.frame_len();
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xfa, t as u64]));
            let noise = IqBuffer::new(complex_gaussian(len, noise_variance(1.0, 0.0), &mut rng), spec.bw);
            Ok(detect_preamble(&noise, spec.sf_max(), spec.preamble_len)?.found)
        })
        .collect::<Result<_>>()?;
    Ok(stats(trials, hits.iter().filter(|h| **h).count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::morph::SfSet;

    #[test]
    fn high_snr_always_detected() {
        let spec = MorphFrameSpec::new(SfSet::SH7_10, TRIAL_PAYLOAD);
        let s = detection_rate(&spec, 0.0, 20, 1).unwrap();
        assert_eq!(s.detected, 20);
    }
}
