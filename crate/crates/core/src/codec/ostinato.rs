//! Repetition coding: `k` identical SF-12 chirps, summed coherently before a
//! single dechirp.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{
    argmax_mag, dechirp_spectrum, gen_chirp, ChirpConfig, DechirpOutput, IqBuffer, Sweep,
};

pub const OSTINATO_SF: u8 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OstinatoCodec {
    pub repeats: usize,
    pub bw: f64,
}

impl OstinatoCodec {
    pub fn new(repeats: usize, bw: f64) -> Result<Self> {
        if !matches!(repeats, 2 | 4 | 8) {
            return Err(Error::Parameter(format!(
                "Ostinato repeats must be 2, 4 or 8; got {repeats}"
            )));
        }
        Ok(Self { repeats, bw })
    }

    pub fn symbol_len(&self) -> usize {
        self.repeats << OSTINATO_SF
    }

    pub fn encode(&self, value: u32) -> Result<IqBuffer> {
        let chirp = gen_chirp(
            &ChirpConfig::new(OSTINATO_SF, self.bw)?.with_value(value)?,
            Sweep::Up,
        )?;
        let mut out = IqBuffer::new(Vec::with_capacity(self.symbol_len()), self.bw);
        for _ in 0..self.repeats {
            out.extend_from(&chirp);
        }
        Ok(out)
    }

    pub fn decode(&self, sym: &IqBuffer) -> Result<DechirpOutput> {
        if sym.len() != self.symbol_len() {
            return Err(Error::shape(format!("{} samples", self.symbol_len()), sym.len()));
        }
        let n = 1usize << OSTINATO_SF;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for chunk in sym.samples().chunks_exact(n) {
            for (a, x) in acc.iter_mut().zip(chunk) {
                *a += x;
            }
        }
        let spec = dechirp_spectrum(&acc, OSTINATO_SF)?;
        let (value, peak_mag) = argmax_mag(&spec);
        Ok(DechirpOutput {
            value: value as u32,
            peak_mag,
        })
    }
}

pub fn ostinato_encode(value: u32, repeats: usize, bw: f64) -> Result<IqBuffer> {
    OstinatoCodec::new(repeats, bw)?.encode(value)
}

pub fn ostinato_decode(sym: &IqBuffer, repeats: usize) -> Result<u32> {
    Ok(OstinatoCodec::new(repeats, sym.fs())?.decode(sym)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::DEFAULT_BW;

    #[test]
    fn round_trip_and_coherent_gain() {
        for k in [2usize, 4, 8] {
            let codec = OstinatoCodec::new(k, DEFAULT_BW).unwrap();
            let sym = codec.encode(42).unwrap();
            assert_eq!(sym.len(), k * 4096);
            let chunks: Vec<_> = sym.samples().chunks(4096).collect();
            assert!(chunks.windows(2).all(|w| w[0] == w[1]));
            let out = codec.decode(&sym).unwrap();
            assert_eq!(out.value, 42);
            let expected = (k * 4096) as f64;
            assert!((out.peak_mag - expected).abs() < 1e-6 * expected);
        }
    }

    #[test]
    fn bad_repeat_count_and_length() {
        assert!(OstinatoCodec::new(3, DEFAULT_BW).is_err());
        let codec = OstinatoCodec::new(4, DEFAULT_BW).unwrap();
        assert!(matches!(
            codec.decode(&IqBuffer::zeros(4096, DEFAULT_BW)),
            Err(Error::Shape { .. })
        ));
        assert!(codec.encode(4096).is_err());
    }
}
