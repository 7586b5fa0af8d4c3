//! Binary network checkpoints: an 8-byte magic, a format version, a JSON
//! header, then every weight as little-endian `f64` in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{Network, TrainConfig};

pub const MAGIC: &[u8; 8] = b"MXBARCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_dims: Vec<usize>,
    /// Quantizer scale of every layer at `config.clip_percentile`.
    pub scales: Vec<f64>,
    pub config: TrainConfig,
}

pub fn encode(net: &Network, config: &TrainConfig) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        layer_dims: net.layer_dims().to_vec(),
        scales: net.scales(config.clip_percentile)?,
        config: config.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * net.weights().iter().map(Array2::len).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for w in net.weights() {
        for v in w.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode(mut bytes: &[u8]) -> Result<(Network, CheckpointHeader)> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = le_u32(take(&mut bytes, 4, "version")?);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = le_u32(take(&mut bytes, 4, "header length")?) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut bytes, len, "header")?)?;
    let mut weights = Vec::new();
    for d in header.layer_dims.windows(2) {
        let raw = take(&mut bytes, 8 * d[0] * d[1], "weights")?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        weights.push(Array2::from_shape_vec((d[0], d[1]), values).expect("length matches shape"));
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok((Network::from_weights(weights)?, header))
}

pub fn save(path: impl AsRef<Path>, net: &Network, config: &TrainConfig) -> Result<()> {
    fs::write(path, encode(net, config)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(Network, CheckpointHeader)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tech::NonIdealityConfig;

    #[test]
    fn round_trip_is_exact() {
        let net = Network::new(&[7, 4, 3], 5).unwrap();
        let cfg = TrainConfig::aware(NonIdealityConfig::new(0.0027, 0.00067, -2).unwrap());
        let bytes = encode(&net, &cfg).unwrap();
        let (back, header) = decode(&bytes).unwrap();
        assert_eq!(back.weights(), net.weights());
        assert_eq!(header.config, cfg);
        assert_eq!(header.layer_dims, vec![7, 4, 3]);
        assert_eq!(encode(&back, &header.config).unwrap(), bytes);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let net = Network::new(&[2, 2], 1).unwrap();
        let bytes = encode(&net, &TrainConfig::ideal()).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOTACKPT").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
