//! Two bits per chirp through four initial-frequency offsets
//! `{−bw/2, −bw/4, 0, +bw/4}`, i.e. symbol values `{0, N/4, N/2, 3N/4}`.

use crate::error::{Error, Result};
use crate::phy::{dechirp_decode, gen_chirp, ChirpConfig, IqBuffer, Sweep};

fn check(bits2: u8, sf: u8) -> Result<()> {
    if !(10..=12).contains(&sf) {
        return Err(Error::Parameter(format!("IFO-2 uses SF 10..=12, got {sf}")));
    }
    if bits2 > 3 {
        return Err(Error::Parameter(format!("2-bit value {bits2} > 3")));
    }
    Ok(())
}

/// Dechirp bin carrying `bits2`.
pub fn ifo2_code_bin(bits2: u8, sf: u8) -> u32 {
    bits2 as u32 * ((1u32 << sf) / 4)
}

pub fn ifo2_encode(bits2: u8, sf: u8, bw: f64) -> Result<IqBuffer> {
    check(bits2, sf)?;
    let cfg = ChirpConfig::new(sf, bw)?.with_value(ifo2_code_bin(bits2, sf))?;
    gen_chirp(&cfg, Sweep::Up)
}

/// Nearest code bin in cyclic distance; a bin exactly between two codes maps
/// to the lower code index.
pub fn ifo2_nearest_code(bin: u32, sf: u8) -> u8 {
    let n = 1u32 << sf;
    let bin = bin % n;
    let mut best = (0u8, u32::MAX);
    for code in 0..4u8 {
        let c = ifo2_code_bin(code, sf);
        let d = bin.abs_diff(c);
        let d = d.min(n - d);
        if d < best.1 {
            best = (code, d);
        }
    }
    best.0
}

/// Classical decode: dechirp argmax snapped to the nearest code bin.
pub fn ifo2_decode(sym: &IqBuffer, sf: u8) -> Result<u8> {
    check(0, sf)?;
    let out = dechirp_decode(sym, sf)?;
    Ok(ifo2_nearest_code(out.value, sf))
}
