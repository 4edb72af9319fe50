//! Preamble detection by coherent superposition.
//!
//! For an alignment `τ`, the `N` symbol-length segments starting at `τ` are
//! summed and correlated against one base up-chirp. A preamble adds its `N`
//! chirps in phase, so the peak grows `N`-fold while noise grows `√N`-fold.
//! The sum of correlations equals the correlation of the sum, so the search
//! runs on one sliding correlation of the stream.
//!
//! The detection threshold is `mean + 6·std` of the correlation magnitudes
//! over all alignments, with the samples around the peak left out of the
//! statistics.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::codec::morph::{MorphFrameSpec, SFD_LEN};
use crate::error::{Error, Result};
use crate::phy::{base_downchirp, base_upchirp, validate_sf, IqBuffer, DEFAULT_BW};

/// Noise standard deviations above the noise mean required for a detection.
pub const THRESHOLD_SIGMAS: f64 = 6.0;

/// Alignments on each side of the peak excluded from noise statistics.
pub const PEAK_GUARD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub found: bool,
    /// Sample offset of the first preamble chirp.
    pub start_index: usize,
    /// Peak superposed correlation, in units of one clean chirp's correlation.
    pub peak_corr: f64,
    pub threshold: f64,
    pub noise_mean: f64,
    pub noise_std: f64,
}

/// `r[t] = Σ_n x[t+n]·conj(c[n])` for `t in 0..count`, by overlap-save.
fn sliding_correlation(x: &[Complex64], template: &[Complex64], count: usize) -> Vec<Complex64> {
    let l = template.len();
    let nfft = 2 * l;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let mut tpl = vec![Complex64::new(0.0, 0.0); nfft];
    tpl[..l].copy_from_slice(template);
    fwd.process(&mut tpl);
    let scale = 1.0 / nfft as f64;
    let mut out = Vec::with_capacity(count + l);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut t0 = 0;
    while t0 < count {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x.get(t0 + i).copied().unwrap_or_default();
        }
        fwd.process(&mut buf);
        for (b, t) in buf.iter_mut().zip(&tpl) {
            *b *= t.conj();
        }
        inv.process(&mut buf);
        // lags 0..l never wrap
        out.extend(buf[..l].iter().map(|v| v * scale));
        t0 += l;
    }
    out.truncate(count);
    out
}

fn dot_conj(x: &[Complex64], t: &[Complex64]) -> Complex64 {
    x.iter().zip(t).map(|(a, b)| a * b.conj()).sum()
}

/// Searches alignments `0..2^sf_max` for an `N`-chirp preamble.
pub fn detect_preamble(stream: &IqBuffer, sf_max: u8, n_preamble: usize) -> Result<DetectionResult> {
    validate_sf(sf_max)?;
    if n_preamble == 0 {
        return Err(Error::Parameter("preamble length must be positive".into()));
    }
    let l = 1usize << sf_max;
    let need = (n_preamble + 1) * l;
    if stream.len() < need {
        return Err(Error::shape(format!("at least {need} samples"), stream.len()));
    }
    let x = stream.samples();
    let up = base_upchirp(sf_max, DEFAULT_BW)?;
    let r = sliding_correlation(x, up.samples(), n_preamble * l);
    let mags: Vec<f64> = (0..l)
        .map(|tau| {
            let s: Complex64 = (0..n_preamble).map(|i| r[tau + i * l]).sum();
            s.norm() / l as f64
        })
        .collect();
    let (peak_tau, peak) = mags
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, m)| if m > best.1 { (i, m) } else { best });

    let noise: Vec<f64> = mags
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(peak_tau) > PEAK_GUARD)
        .map(|(_, &m)| m)
        .collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / noise.len() as f64;
    let std = var.sqrt();
    let threshold = mean + THRESHOLD_SIGMAS * std;
    let found = peak > threshold;

    let start_index = if found {
        resolve_symbol_offset(x, peak_tau, sf_max, n_preamble)?
    } else {
        peak_tau
    };
    Ok(DetectionResult {
        found,
        start_index,
        peak_corr: peak,
        threshold,
        noise_mean: mean,
        noise_std: std,
    })
}

/// The superposition is blind to whole-symbol shifts, so the preamble may
/// start at `τ + k·L`. Pick `k` where the start-frame delimiter correlates
/// best.
fn resolve_symbol_offset(x: &[Complex64], tau: usize, sf_max: u8, n: usize) -> Result<usize> {
    let l = 1usize << sf_max;
    let down = base_downchirp(sf_max, DEFAULT_BW)?;
    let mut best = (tau, f64::NEG_INFINITY);
    let mut k = 0;
    loop {
        let start = tau + k * l;
        let sfd = start + n * l;
        if sfd + SFD_LEN * l > x.len() {
            break;
        }
        let score: Complex64 = (0..SFD_LEN)
            .map(|j| dot_conj(&x[sfd + j * l..sfd + (j + 1) * l], down.samples()))
            .sum();
        if score.norm() > best.1 {
            best = (start, score.norm());
        }
        k += 1;
    }
    Ok(best.0)
}

/// Slices the payload windows that follow the preamble and SFD.
pub fn extract_symbols(
    stream: &IqBuffer,
    det: &DetectionResult,
    spec: &MorphFrameSpec,
) -> Result<Vec<IqBuffer>> {
    if !det.found {
        return Err(Error::Parameter("no preamble detected".into()));
    }
    let l = spec.symbol_len();
    let first = det.start_index + spec.header_len();
    let end = first + spec.payload_symbols * l;
    if end > stream.len() {
        return Err(Error::Truncated {
            needed: end,
            available: stream.len(),
        });
    }
    Ok((0..spec.payload_symbols)
        .map(|i| stream.slice(first + i * l..first + (i + 1) * l))
        .collect())
}
