//! Labelled symbol files.
//!
//! ```text
//! "MORPHIQ1"  u32 count
//! count × { u8 label, u8 sf, u16 0, u32 n, n × (f32 I, f32 Q) }
//! u32 footer length, JSON footer
//! ```
//!
//! All integers and floats are little-endian.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::add_awgn_with;
use crate::codec::ifo2::ifo2_encode;
use crate::codec::morph::{morph_symbol, SfSet};
use crate::error::{Error, Result};
use crate::neural::LabeledSymbol;
use crate::phy::IqBuffer;
use crate::seed::derive_seed;

pub const DATASET_MAGIC: &[u8; 8] = b"MORPHIQ1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DatasetScheme {
    Morph(SfSet),
    Ifo2 { sf: u8 },
}

impl DatasetScheme {
    fn sf_for(self, label: u8) -> u8 {
        match self {
            DatasetScheme::Morph(set) => set.sfs()[label as usize],
            DatasetScheme::Ifo2 { sf } => sf,
        }
    }

    fn symbol(self, label: u8, bw: f64) -> Result<IqBuffer> {
        match self {
            DatasetScheme::Morph(set) => morph_symbol(label, set, bw),
            DatasetScheme::Ifo2 { sf } => ifo2_encode(label, sf, bw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SnrPolicy {
    /// Noise-free symbols with zero phase.
    Clean,
    /// Random phase and AWGN at one SNR.
    Fixed(f64),
    /// Random phase and AWGN at an SNR uniform over `[lo, hi)`.
    Uniform(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFooter {
    pub bw: f64,
    pub fs: f64,
    pub sf_set: Option<SfSet>,
    pub scheme: DatasetScheme,
    pub seed: u64,
    pub snr_policy: SnrPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: u8,
    pub sf: u8,
    pub iq: IqBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub footer: DatasetFooter,
}

impl Dataset {
    pub fn labeled(&self) -> Vec<LabeledSymbol> {
        self.records
            .iter()
            .map(|r| LabeledSymbol {
                label: r.label,
                iq: r.iq.clone(),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.push(r.label);
            out.push(r.sf);
            out.extend_from_slice(&0u16.to_le_bytes());
            out.extend_from_slice(&(r.iq.len() as u32).to_le_bytes());
            for c in r.iq.samples() {
                out.extend_from_slice(&(c.re as f32).to_le_bytes());
                out.extend_from_slice(&(c.im as f32).to_le_bytes());
            }
        }
        let footer = serde_json::to_vec(&self.footer).map_err(|e| Error::Format(e.to_string()))?;
        out.extend_from_slice(&(footer.len() as u32).to_le_bytes());
        out.extend_from_slice(&footer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let count = cur.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        let mut raw = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let head = cur.take(4)?;
            let (label, sf) = (head[0], head[1]);
            if label > 3 {
                return Err(Error::Format(format!("label {label} out of range")));
            }
            let n = cur.u32()? as usize;
            let body = cur.take(8 * n)?;
            let samples = body
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                    let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                    Complex64::new(re as f64, im as f64)
                })
                .collect();
            raw.push((label, sf, samples));
        }
        let flen = cur.u32()? as usize;
        let footer: DatasetFooter =
            serde_json::from_slice(cur.take(flen)?).map_err(|e| Error::Format(e.to_string()))?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after footer".into()));
        }
        for (label, sf, samples) in raw {
            records.push(Record {
                label,
                sf,
                iq: IqBuffer::new(samples, footer.fs),
            });
        }
        Ok(Self { records, footer })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("dataset truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// `count_per_class` symbols of each of the four classes, class-major.
pub fn build_dataset(
    scheme: DatasetScheme,
    bw: f64,
    count_per_class: usize,
    policy: SnrPolicy,
    seed: u64,
) -> Result<Dataset> {
    if let SnrPolicy::Uniform(lo, hi) = policy {
        if !(lo < hi) {
            return Err(Error::Config(format!("empty SNR range [{lo}, {hi})")));
        }
    }
    let mut records = Vec::with_capacity(4 * count_per_class);
    for label in 0..4u8 {
        let clean = scheme.symbol(label, bw)?;
        for i in 0..count_per_class {
            let iq = match policy {
                SnrPolicy::Clean => clean.clone(),
                SnrPolicy::Fixed(_) | SnrPolicy::Uniform(..) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, label as u64, i as u64]));
                    let snr = match policy {
                        SnrPolicy::Fixed(s) => s,
                        SnrPolicy::Uniform(lo, hi) => rng.random_range(lo..hi),
                        SnrPolicy::Clean => unreachable!(),
                    };
                    let mut s = clean.clone();
                    s.rotate(rng.random::<f64>() * 2.0 * PI);
                    add_awgn_with(&s, clean.power(), snr, &mut rng)
                }
            };
            records.push(Record {
                label,
                sf: scheme.sf_for(label),
                iq,
            });
        }
    }
    Ok(Dataset {
        records,
        footer: DatasetFooter {
            bw,
            fs: bw,
            sf_set: match scheme {
                DatasetScheme::Morph(set) => Some(set),
                DatasetScheme::Ifo2 { .. } => None,
            },
            scheme,
            seed,
            snr_policy: policy,
        },
    })
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ds.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes)
}

/// Builds a dataset and writes it to `path`.
pub fn gen_dataset(
    scheme: DatasetScheme,
    bw: f64,
    count_per_class: usize,
    policy: SnrPolicy,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<Dataset> {
    let ds = build_dataset(scheme, bw, count_per_class, policy, seed)?;
    write_dataset(&ds, path)?;
    Ok(ds)
}
