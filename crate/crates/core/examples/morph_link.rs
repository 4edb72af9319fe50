//! A full SF-hopping link: encode a frame, add phase and noise at a random
//! offset, find the preamble, then decode every payload symbol with Cor.
//!
//! cargo run --release --example morph_link -- -18

use morph::channel::add_awgn_with;
use morph::codec::morph::{bits_to_symbols, morph_encode, MorphFrameSpec, SfSet};
use morph::codec::{cor_decode, CorMode};
use morph::detect::{detect_preamble, extract_symbols};
use morph::IqBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> morph::Result<()> {
    let snr_db: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(-18.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = MorphFrameSpec::new(SfSet::SH9_12, 16);
    let bits: Vec<bool> = (0..2 * spec.payload_symbols).map(|_| rng.random()).collect();

    let mut frame = morph_encode(&bits, &spec)?;
    frame.rotate(1.3);
    let offset = 1234;
    let mut stream = IqBuffer::zeros(offset + frame.len() + spec.symbol_len(), spec.bw);
    stream.samples_mut()[offset..offset + frame.len()].copy_from_slice(frame.samples());
    let rx = add_awgn_with(&stream, 1.0, snr_db, &mut rng);

    let det = detect_preamble(&rx, spec.sf_max(), spec.preamble_len)?;
    println!(
        "preamble found={} at {} (true {offset}), peak {:.2} vs threshold {:.2}",
        det.found, det.start_index, det.peak_corr, det.threshold
    );
    if !det.found {
        return Ok(());
    }
    let sent = bits_to_symbols(&bits)?;
    let mut errors = 0;
    for (sym, &v) in extract_symbols(&rx, &det, &spec)?.iter().zip(&sent) {
        let d = cor_decode(sym, &spec, CorMode::Coherent)?;
        errors += usize::from(d.bits2 != v);
    }
    println!("{errors}/{} symbol errors at {snr_db} dB", sent.len());
    Ok(())
}
