//! Model files: an 8-byte magic, a little-endian `u32` header length, a JSON
//! header, then every parameter as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Arch, Model, ModelKind, Network, TrainConfig};
use crate::error::{Error, Result};
use crate::pbp::PBP_NAMES;
use crate::radiomics::RADIOMICS_NAMES;

pub const MAGIC: &[u8; 8] = b"PRFFNCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub networks: Vec<Arch>,
    pub param_counts: Vec<usize>,
    pub train: TrainConfig,
    pub seed: u64,
    pub feature_order_sha256: String,
}

/// SHA-256 of the newline-joined feature column names, in table order.
pub fn feature_order_sha256() -> String {
    let mut h = Sha256::new();
    for name in PBP_NAMES.iter().copied().chain(RADIOMICS_NAMES.iter().map(|s| s.as_str())) {
        h.update(name.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(path: &Path, model: &Model, train: &TrainConfig, seed: u64) -> Result<()> {
    let nets = model.networks();
    let header = CheckpointHeader {
        kind: model.kind(),
        networks: nets.iter().map(|n| n.arch.clone()).collect(),
        param_counts: nets.iter().map(|n| n.params.len()).collect(),
        train: train.clone(),
        seed,
        feature_order_sha256: feature_order_sha256(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * header.param_counts.iter().sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for net in nets {
        for v in &net.params {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let corrupt = |m: &str| Error::model(format!("{}: {m}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a model checkpoint"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.feature_order_sha256 != feature_order_sha256() {
        return Err(corrupt("feature order differs from this build"));
    }
    let payload = &bytes[12 + hlen..];
    if payload.len() != 4 * header.param_counts.iter().sum::<usize>() {
        return Err(corrupt("payload size does not match the header"));
    }
    let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut nets = Vec::new();
    for (arch, &count) in header.networks.iter().zip(&header.param_counts) {
        nets.push(Network::from_params(arch.clone(), values.by_ref().take(count).collect())?);
    }
    let model = match (header.kind, nets.len()) {
        (ModelKind::LateResult, 2) => {
            let radiomics = nets.pop().unwrap();
            let polar = nets.pop().unwrap();
            Model::Late { polar, radiomics }
        }
        (kind, 1) if kind != ModelKind::LateResult => Model::Single { kind, net: nets.pop().unwrap() },
        _ => return Err(corrupt("network count does not match the model kind")),
    };
    Ok((model, header))
}
