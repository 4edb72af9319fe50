//! SF-hopping LoRa physical layer: chirp generation and dechirp decoding, a
//! channel simulator, the SF-hopping encoder with its classical and neural
//! decoders, preamble detection, and an SER/SNR-threshold harness.

pub mod channel;
pub mod codec;
pub mod detect;
pub mod error;
pub mod features;
pub mod harness;
pub mod neural;
pub mod phy;
pub mod seed;

pub use error::{Error, Result};
pub use phy::{ChirpConfig, IqBuffer};
