//! Checkpoint file: `MORPHNN1`, a `u32` little-endian header length, the
//! UTF-8 JSON header, then parameters followed by normalisation buffers as
//! little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MORPHNN1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    /// SHA-256 of the training symbols, hex.
    pub dataset_digest: String,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: f64,
    pub snr_range_db: (f64, f64),
    pub augmentations: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    meta: TrainMeta,
    param_count: usize,
    buffer_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub meta: TrainMeta,
    pub params: Vec<f32>,
    pub buffers: Vec<f32>,
}

impl Checkpoint {
    pub fn from_network(net: &Network<f32>, meta: TrainMeta) -> Self {
        Self {
            spec: net.spec().clone(),
            meta,
            params: net.params.clone(),
            buffers: net.buffers.clone(),
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::from_parts(self.spec.clone(), self.params.clone(), self.buffers.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            meta: self.meta.clone(),
            param_count: self.params.len(),
            buffer_count: self.buffers.len(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * (self.params.len() + self.buffers.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.params.iter().chain(&self.buffers) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| Error::Format("checkpoint header truncated".into()))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Format(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} unsupported",
                header.format_version
            )));
        }
        let blob = &bytes[12 + hlen..];
        let count = header.param_count + header.buffer_count;
        if blob.len() != 4 * count {
            return Err(Error::Format(format!(
                "expected {} weight bytes, found {}",
                4 * count,
                blob.len()
            )));
        }
        let mut values: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let buffers = values.split_off(header.param_count);
        let ck = Self {
            spec: header.spec,
            meta: header.meta,
            params: values,
            buffers,
        };
        ck.network()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_reproduces_inference_bit_exactly() {
        let net = Network::<f32>::new(ModelSpec::tiny(), 9).unwrap();
        let meta = TrainMeta {
            seed: 9,
            dataset_digest: "abc".into(),
            ..Default::default()
        };
        let ck = Checkpoint::from_network(&net, meta);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        let n = net.spec().input_len();
        let x: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = net.forward(&x, 1).unwrap();
        let b = back.network().unwrap().forward(&x, 1).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn corrupt_files_rejected() {
        let net = Network::<f32>::new(ModelSpec::tiny(), 9).unwrap();
        let bytes = Checkpoint::from_network(&net, TrainMeta::default()).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = Checkpoint::load("/nonexistent/model.bin").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.bin"));
    }
}
