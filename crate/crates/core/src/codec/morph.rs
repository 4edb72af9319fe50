use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{base_downchirp, base_upchirp, IqBuffer, DEFAULT_BW};

/// Down-chirps in the start-frame delimiter.
pub const SFD_LEN: usize = 2;

/// Four consecutive spreading factors `[sf_min, sf_min + 3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; 2]", into = "[u8; 2]")]
pub struct SfSet {
    sf_min: u8,
}

impl SfSet {
    pub const SH7_10: SfSet = SfSet { sf_min: 7 };
    pub const SH8_11: SfSet = SfSet { sf_min: 8 };
    pub const SH9_12: SfSet = SfSet { sf_min: 9 };
    pub const ALL: [SfSet; 3] = [Self::SH7_10, Self::SH8_11, Self::SH9_12];

    pub fn new(sf_min: u8) -> Result<Self> {
        if (7..=9).contains(&sf_min) {
            Ok(Self { sf_min })
        } else {
            Err(Error::Parameter(format!(
                "SF set must be one of [7,10], [8,11], [9,12]; got minimum {sf_min}"
            )))
        }
    }

    pub fn sf_min(self) -> u8 {
        self.sf_min
    }

    pub fn sf_max(self) -> u8 {
        self.sf_min + 3
    }

    pub fn sfs(self) -> [u8; 4] {
        [0, 1, 2, 3].map(|v| self.sf_min + v)
    }

    /// Spreading factor carrying the 2-bit value `v`.
    pub fn sf_for(self, v: u8) -> Result<u8> {
        if v > 3 {
            return Err(Error::Parameter(format!("2-bit value {v} > 3")));
        }
        Ok(self.sf_min + v)
    }

    /// Samples per symbol at the chip rate, `2^sf_max`.
    pub fn symbol_len(self) -> usize {
        1usize << self.sf_max()
    }
}

impl TryFrom<[u8; 2]> for SfSet {
    type Error = Error;

    fn try_from(v: [u8; 2]) -> Result<Self> {
        let set = SfSet::new(v[0])?;
        if set.sf_max() != v[1] {
            return Err(Error::Parameter(format!(
                "SF set [{}, {}] must span exactly four SFs",
                v[0], v[1]
            )));
        }
        Ok(set)
    }
}

impl From<SfSet> for [u8; 2] {
    fn from(s: SfSet) -> Self {
        [s.sf_min(), s.sf_max()]
    }
}

impl fmt::Display for SfSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SH-[{},{}]", self.sf_min(), self.sf_max())
    }
}

impl FromStr for SfSet {
    type Err = Error;

    /// Accepts `"9,12"` or `"9-12"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([',', '-']).map(str::trim).collect();
        let parse = |p: &str| {
            p.parse::<u8>()
                .map_err(|_| Error::Config(format!("bad SF set {s:?}")))
        };
        match parts.as_slice() {
            [lo, hi] => SfSet::try_from([parse(lo)?, parse(hi)?]),
            _ => Err(Error::Config(format!("bad SF set {s:?}, expected e.g. 9,12"))),
        }
    }
}

/// Phase relation between consecutive hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HopPhase {
    /// One phase accumulator across the whole frame. Base chirps close with
    /// zero net phase, so this is plain concatenation.
    #[default]
    Continuous,
    /// Each payload hop starts at an independent uniform phase, modelling a
    /// synthesiser that relocks at every hop.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphFrameSpec {
    pub sf_set: SfSet,
    pub bw: f64,
    pub preamble_len: usize,
    pub payload_symbols: usize,
    pub hop_phase: HopPhase,
}

impl MorphFrameSpec {
    pub fn new(sf_set: SfSet, payload_symbols: usize) -> Self {
        Self {
            sf_set,
            bw: DEFAULT_BW,
            preamble_len: 8,
            payload_symbols,
            hop_phase: HopPhase::Continuous,
        }
    }

    pub fn sf_max(&self) -> u8 {
        self.sf_set.sf_max()
    }

    pub fn symbol_len(&self) -> usize {
        self.sf_set.symbol_len()
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.symbol_len() as f64 / self.bw
    }

    /// Samples before the first payload symbol.
    pub fn header_len(&self) -> usize {
        (self.preamble_len + SFD_LEN) * self.symbol_len()
    }

    pub fn frame_len(&self) -> usize {
        self.header_len() + self.payload_symbols * self.symbol_len()
    }
}

/// One 2-bit payload symbol and its hop parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MorphSymbol {
    pub bits2: u8,
    pub sf: u8,
    /// Chirps per hop, `2^(sf_max − sf)`.
    pub hop_period: usize,
}

impl MorphSymbol {
    pub fn new(bits2: u8, sf_set: SfSet) -> Result<Self> {
        let sf = sf_set.sf_for(bits2)?;
        Ok(Self {
            bits2,
            sf,
            hop_period: 1usize << (sf_set.sf_max() - sf),
        })
    }
}

/// Payload data rate `2·bw/2^sf_max` in bits/s.
pub fn morph_data_rate(sf_set: SfSet, bw: f64) -> f64 {
    2.0 * bw / sf_set.symbol_len() as f64
}

/// Groups bits in pairs, first bit least significant.
pub fn bits_to_symbols(bits: &[bool]) -> Result<Vec<u8>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "bit count {} is odd; symbols carry two bits",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| p[0] as u8 | (p[1] as u8) << 1)
        .collect())
}

pub fn symbols_to_bits(symbols: &[u8]) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|&v| [v & 1 == 1, v & 2 == 2])
        .collect()
}

/// The chip-rate waveform of a single payload symbol: `hop_period` base
/// up-chirps at `sf_set[v]`.
pub fn morph_symbol(v: u8, sf_set: SfSet, bw: f64) -> Result<IqBuffer> {
    let sym = MorphSymbol::new(v, sf_set)?;
    let chirp = base_upchirp(sym.sf, bw)?;
    let mut out = IqBuffer::new(Vec::with_capacity(sf_set.symbol_len()), bw);
    for _ in 0..sym.hop_period {
        out.extend_from(&chirp);
    }
    Ok(out)
}

/// Preamble of `N` base up-chirps at `sf_max`, two down-chirps, then one hop
/// per 2-bit group.
pub fn morph_encode(bits: &[bool], spec: &MorphFrameSpec) -> Result<IqBuffer> {
    let symbols = bits_to_symbols(bits)?;
    if symbols.len() != spec.payload_symbols {
        return Err(Error::Parameter(format!(
            "{} bits make {} symbols, frame declares {}",
            bits.len(),
            symbols.len(),
            spec.payload_symbols
        )));
    }
    let sf_max = spec.sf_max();
    let up = base_upchirp(sf_max, spec.bw)?;
    let down = base_downchirp(sf_max, spec.bw)?;
    let mut frame = IqBuffer::new(Vec::with_capacity(spec.frame_len()), spec.bw);
    for _ in 0..spec.preamble_len {
        frame.extend_from(&up);
    }
    for _ in 0..SFD_LEN {
        frame.extend_from(&down);
    }
    let mut hop_rng = match spec.hop_phase {
        HopPhase::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        HopPhase::Continuous => None,
    };
    for v in symbols {
        let mut hop = morph_symbol(v, spec.sf_set, spec.bw)?;
        if let Some(rng) = hop_rng.as_mut() {
            hop.rotate(rng.random::<f64>() * 2.0 * PI);
        }
        frame.extend_from(&hop);
    }
    Ok(frame)
}
