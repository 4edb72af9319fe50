//! Preamble detection and false-alarm rates across SNR.
//!
//! cargo run --release --example detection

use morph::codec::morph::{MorphFrameSpec, SfSet};
use morph::harness::{detection_rate, false_alarm_rate};

fn main() -> morph::Result<()> {
    let spec = MorphFrameSpec::new(SfSet::SH9_12, 4);
    for snr in [-26.0, -24.0, -22.0, -20.0] {
        let d = detection_rate(&spec, snr, 200, 1)?;
        println!("{snr:>5} dB  detected {}/{}", d.detected, d.trials);
    }
    let fa = false_alarm_rate(&spec, 2, 200, 1)?;
    println!("noise only  fired {}/{}", fa.detected, fa.trials);
    Ok(())
}
