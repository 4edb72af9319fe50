//! Correlation decoder for SF-hopping symbols.
//!
//! Every candidate SF `c` splits the symbol into `2^(sf_max − c)` windows of
//! `2^c` samples and dechirps each window with the SF-`c` base down-chirp. A
//! matched template collapses every window onto bin 0; a mismatched one
//! spreads the energy over all bins.
//!
//! Scores are the largest squared magnitude among bins `−1, 0, +1` (so a
//! one-sample timing error, which moves the peak by one bin, still decodes)
//! divided by `E·2^sf_max`, where `E` is the symbol energy. That denominator is the same for every candidate, so
//! candidates with different FFT lengths compete on equal terms, and a clean
//! matched symbol scores exactly 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codec::morph::{MorphFrameSpec, SfSet};
use crate::error::{Error, Result};
use crate::phy::{downchirp_ref, fft_in_place, IqBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CorMode {
    /// Sum the dechirped windows, then one transform.
    #[default]
    Coherent,
    /// Transform each window and add bin-0 energies.
    Noncoherent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorDecision {
    pub bits2: u8,
    pub scores: [f64; 4],
}

/// Largest of `e(win−1), e(0), e(1)`.
fn near_zero_peak(e: impl Fn(usize) -> f64, win: usize) -> f64 {
    e(0).max(e(1)).max(e(win - 1))
}

/// Per-candidate scores, indexed by 2-bit value.
pub fn cor_scores(sym: &[Complex64], sf_set: SfSet, mode: CorMode) -> Result<[f64; 4]> {
    let len = sf_set.symbol_len();
    if sym.len() != len {
        return Err(Error::shape(format!("{len} samples"), sym.len()));
    }
    let energy: f64 = sym.iter().map(|s| s.norm_sqr()).sum();
    let mut scores = [0.0; 4];
    if energy == 0.0 {
        return Ok(scores);
    }
    for (v, sf) in sf_set.sfs().into_iter().enumerate() {
        let win = 1usize << sf;
        let down = downchirp_ref(sf);
        let bin0_energy = match mode {
            CorMode::Coherent => {
                let mut acc = vec![Complex64::new(0.0, 0.0); win];
                for chunk in sym.chunks_exact(win) {
                    for ((a, x), d) in acc.iter_mut().zip(chunk).zip(down.iter()) {
                        *a += x * d;
                    }
                }
                fft_in_place(&mut acc);
                near_zero_peak(|k| acc[k].norm_sqr(), win)
            }
            CorMode::Noncoherent => {
                let mut total = [0.0; 3];
                let mut buf = vec![Complex64::new(0.0, 0.0); win];
                for chunk in sym.chunks_exact(win) {
                    for ((b, x), d) in buf.iter_mut().zip(chunk).zip(down.iter()) {
                        *b = x * d;
                    }
                    fft_in_place(&mut buf);
                    for (t, k) in total.iter_mut().zip([win - 1, 0, 1]) {
                        *t += buf[k].norm_sqr();
                    }
                }
                // k windows of 2^c bins each; clean matched input gives k·4^c
                total.into_iter().fold(0.0, f64::max) * len as f64 / win as f64
            }
        };
        scores[v] = bin0_energy / (energy * len as f64);
    }
    Ok(scores)
}

/// Picks the best-scoring template; ties go to the lower value.
pub fn cor_decode(sym: &IqBuffer, spec: &MorphFrameSpec, mode: CorMode) -> Result<CorDecision> {
    let scores = cor_scores(sym.samples(), spec.sf_set, mode)?;
    let mut best = 0;
    for v in 1..4 {
        if scores[v] > scores[best] {
            best = v;
        }
    }
    Ok(CorDecision {
        bits2: best as u8,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::morph::morph_symbol;
    use crate::phy::DEFAULT_BW;

    #[test]
    fn clean_symbols_decode_with_unit_matched_score() {
        for set in SfSet::ALL {
            let spec = MorphFrameSpec::new(set, 1);
            for v in 0..4u8 {
                let sym = morph_symbol(v, set, DEFAULT_BW).unwrap();
                for mode in [CorMode::Coherent, CorMode::Noncoherent] {
                    let d = cor_decode(&sym, &spec, mode).unwrap();
                    assert_eq!(d.bits2, v, "{set} {mode:?}");
                    assert!((d.scores[v as usize] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn score_matrix_is_diagonally_dominant() {
        for set in SfSet::ALL {
            for truth in 0..4u8 {
                let sym = morph_symbol(truth, set, DEFAULT_BW).unwrap();
                let s = cor_scores(sym.samples(), set, CorMode::Coherent).unwrap();
                let off: f64 = (0..4).filter(|&t| t != truth as usize).map(|t| s[t]).sum();
                assert!(s[truth as usize] > off);
                for t in (0..4).filter(|&t| t != truth as usize) {
                    assert!(s[t] < 0.05, "{set} truth {truth} template {t}: {}", s[t]);
                }
            }
        }
    }

    #[test]
    fn coherent_bin0_grows_with_window_count() {
        // bin 0 of the combined windows is k times one window's bin 0
        let set = SfSet::SH9_12;
        let sym = morph_symbol(0, set, DEFAULT_BW).unwrap();
        let one = &sym.samples()[..512];
        let down = downchirp_ref(9);
        let single: Complex64 = one.iter().zip(down.iter()).map(|(a, b)| a * b).sum();
        let s = cor_scores(sym.samples(), set, CorMode::Coherent).unwrap();
        let combined = (s[0] * sym.energy() * 4096.0).sqrt();
        assert!((combined - 8.0 * single.norm()).abs() < 1e-6 * combined);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let spec = MorphFrameSpec::new(SfSet::SH9_12, 1);
        let sym = IqBuffer::zeros(1024, DEFAULT_BW);
        assert!(matches!(
            cor_decode(&sym, &spec, CorMode::Coherent),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn phase_rotation_does_not_change_decision() {
        let set = SfSet::SH8_11;
        let spec = MorphFrameSpec::new(set, 1);
        let mut sym = morph_symbol(2, set, DEFAULT_BW).unwrap();
        sym.rotate(2.1);
        assert_eq!(cor_decode(&sym, &spec, CorMode::Coherent).unwrap().bits2, 2);
    }
}
