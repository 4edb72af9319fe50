//! Encoders and classical decoders.
//!
//! * [`morph`]: SF-hopping frames where each 2-bit symbol picks one of four
//!   spreading factors and repeats its base chirp to fill one `SF_max` period.
//! * [`cor`]: template-correlation decoder for SF-hopping symbols.
//! * [`ostinato`]: repeated SF-12 chirps combined coherently.
//! * [`ifo2`]: four initial-frequency offsets of one SF.

pub mod cor;
pub mod ifo2;
pub mod morph;
pub mod ostinato;

pub use cor::{cor_decode, cor_scores, CorDecision, CorMode};
pub use ifo2::{ifo2_code_bin, ifo2_decode, ifo2_encode, ifo2_nearest_code};
pub use morph::{
    bits_to_symbols, morph_data_rate, morph_encode, morph_symbol, symbols_to_bits, HopPhase,
    MorphFrameSpec, MorphSymbol, SfSet, SFD_LEN,
};
pub use ostinato::{ostinato_decode, ostinato_encode, OstinatoCodec};
