//! The network's input: a two-channel STFT of one symbol. Prints the
//! strongest frequency bin of each time frame for the four SF choices.
//!
//! cargo run --release --example spectrogram

use morph::codec::morph::{morph_symbol, SfSet};
use morph::features::default_features;
use morph::phy::DEFAULT_BW;

fn main() -> morph::Result<()> {
    for v in 0..4u8 {
        let spec = default_features(&morph_symbol(v, SfSet::SH9_12, DEFAULT_BW)?)?;
        let [_, f_bins, frames] = spec.shape();
        let track: Vec<usize> = (0..frames)
            .step_by(8)
            .map(|t| {
                (0..f_bins)
                    .max_by(|&a, &b| {
                        let m = |f| spec.at(0, f, t).hypot(spec.at(1, f, t));
                        m(a).total_cmp(&m(b))
                    })
                    .unwrap()
            })
            .collect();
        println!("SF{} peak bins every 8th frame: {track:?}", 9 + v);
    }
    Ok(())
}
