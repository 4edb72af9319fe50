//! Generate LoRa chirps, push them through AWGN and dechirp them.
//!
//! cargo run --release --example chirp_dechirp

use morph::channel::add_awgn;
use morph::phy::{dechirp_decode, gen_chirp, lora_data_rate, ChirpConfig, Sweep, DEFAULT_BW};

fn main() -> morph::Result<()> {
    for sf in 7..=12u8 {
        let value = (1u32 << sf) / 3;
        let cfg = ChirpConfig::new(sf, DEFAULT_BW)?.with_value(value)?;
        let sym = gen_chirp(&cfg, Sweep::Up)?;
        let clean = dechirp_decode(&sym, sf)?;
        let noisy = dechirp_decode(&add_awgn(&sym, -15.0, 1), sf)?;
        println!(
            "SF{sf:<2} {:>5} samples  {:>7.1} bit/s  sent {value:>4}  clean {:>4} (peak {:.0})  at -15 dB {:>4}",
            sym.len(),
            lora_data_rate(sf, DEFAULT_BW),
            clean.value,
            clean.peak_mag,
            noisy.value
        );
    }
    Ok(())
}
