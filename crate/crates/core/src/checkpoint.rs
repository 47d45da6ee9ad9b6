//! Model checkpoints: a binary parameter file plus a JSON sidecar
//! (`<path>.json`) describing how the model was built and trained.
//!
//! Binary layout: `STGCCKPT`, version u32, head-input u8, 3 pad bytes,
//! n_nodes u32, n_layers u32, the layer blobs back to back, then head rows
//! and cols (u32 each) followed by the head weights and bias as
//! little-endian f64.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::FilterBank;
use crate::matrix::Matrix;
use crate::model::{DeepStgc, HeadInput, ModelConfig};

const MAGIC: &[u8; 8] = b"STGCCKPT";
const VERSION: u32 = 1;

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub n_nodes: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    /// Segments used to sample frames at evaluation time.
    pub segments: usize,
    pub epsilon: f64,
    pub epochs_run: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn to_bytes(net: &DeepStgc<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match net.head_input() {
        HeadInput::Last => 0,
        HeadInput::MeanOverT => 1,
    });
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&(net.n_nodes() as u32).to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for bank in net.layers() {
        out.extend_from_slice(&bank.to_bytes());
    }
    let hw = net.head_w();
    out.extend_from_slice(&(hw.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(hw.cols() as u32).to_le_bytes());
    for x in hw.as_slice().iter().chain(net.head_b()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<DeepStgc<f64>> {
    let perr = |offset: usize, msg: &str| Error::Parse {
        offset,
        line: None,
        msg: msg.to_string(),
    };
    let u32_at = |o: usize| -> Result<u32> {
        bytes
            .get(o..o + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| perr(bytes.len(), "truncated checkpoint"))
    };
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(perr(0, "not a checkpoint file"));
    }
    let version = u32_at(8)?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let head_input = match bytes.get(12) {
        Some(0) => HeadInput::Last,
        Some(1) => HeadInput::MeanOverT,
        Some(_) => return Err(perr(12, "unknown head input")),
        None => return Err(perr(bytes.len(), "truncated checkpoint")),
    };
    let n_nodes = u32_at(16)? as usize;
    let n_layers = u32_at(20)? as usize;
    let mut pos = 24;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let (bank, used) = FilterBank::<f64>::from_bytes(&bytes[pos.min(bytes.len())..]).map_err(|e| match e {
            Error::Parse { offset, msg, .. } => perr(pos + offset, &msg),
            other => other,
        })?;
        layers.push(bank);
        pos += used;
    }
    let rows = u32_at(pos)? as usize;
    let cols = u32_at(pos + 4)? as usize;
    pos += 8;
    let count = rows
        .checked_mul(cols)
        .and_then(|x| x.checked_add(cols))
        .ok_or_else(|| perr(pos, "head size overflows"))?;
    if bytes.len() - pos.min(bytes.len()) != 8 * count {
        return Err(perr(bytes.len(), "head payload has the wrong length"));
    }
    let vals: Vec<f64> = bytes[pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (w, b) = vals.split_at(rows * cols);
    DeepStgc::new(layers, Matrix::from_vec(rows, cols, w.to_vec())?, b.to_vec(), head_input, n_nodes)
}

pub fn save(net: &DeepStgc<f64>, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net))?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(DeepStgc<f64>, CheckpointMeta)> {
    let path = path.as_ref();
    let net = from_bytes(&std::fs::read(path)?)?;
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if meta.n_nodes != net.n_nodes() || meta.n_classes != net.n_classes() {
        return Err(Error::Invalid(
            "checkpoint sidecar disagrees with the stored parameters".into(),
        ));
    }
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> DeepStgc<f64> {
        let cfg = ModelConfig {
            widths: vec![3, 4],
            ..ModelConfig::default()
        };
        DeepStgc::init(&cfg, 5, 3, 1e-3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let bytes = to_bytes(&n);
        assert_eq!(from_bytes(&bytes).unwrap(), n);
        for cut in [0, 7, 20, 30, bytes.len() - 1] {
            assert!(from_bytes(&bytes[..cut]).is_err());
        }
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(from_bytes(&v), Err(Error::Version { found: 9, .. })));
    }
}
