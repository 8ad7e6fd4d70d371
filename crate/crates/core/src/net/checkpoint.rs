//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `GEOMPNN\0`, a little-endian `u32` format
//! version, a `u64` header length, a JSON header, then every parameter as
//! little-endian `f64` in header order. Weights round-trip bit-exactly.

use std::hash::{DefaultHasher, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoModel, Matrix, ModelConfig};
use crate::features::{BasisSettings, FeatureVariant, FieldNormalizer, InputScaler};
use crate::{Error, FieldId, Result};

const MAGIC: &[u8; 8] = b"GEOMPNN\0";
const VERSION: u32 = 1;

/// Everything needed for standalone inference of one per-field model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: FieldId,
    pub variant: FeatureVariant,
    pub basis: BasisSettings,
    pub normalizer: FieldNormalizer,
    pub scaler: InputScaler,
    pub model: GeoModel,
}

#[derive(Serialize, Deserialize)]
struct Header {
    field: FieldId,
    variant: FeatureVariant,
    basis: BasisSettings,
    normalizer: FieldNormalizer,
    scaler: InputScaler,
    config: ModelConfig,
    node_width: usize,
    edge_width: usize,
    params: Vec<(String, usize, usize)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let store = &self.model.params;
        let header = Header {
            field: self.field,
            variant: self.variant,
            basis: self.basis,
            normalizer: self.normalizer,
            scaler: self.scaler.clone(),
            config: self.model.config.clone(),
            node_width: self.model.node_width,
            edge_width: self.model.edge_width,
            params: store
                .names()
                .iter()
                .zip(store.tensors())
                .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in store.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let mut payload = body[hlen..].chunks_exact(8);
        if !payload.remainder().is_empty() {
            return Err(bad("payload is not a whole number of f64"));
        }
        if header.scaler.node.width() != header.node_width
            || header.scaler.edge.width() != header.edge_width
        {
            return Err(bad("input scaler widths do not match the model"));
        }
        let mut model = GeoModel::new(header.config, header.node_width, header.edge_width, 0);
        if model.params.len() != header.params.len() {
            return Err(bad("parameter count does not match the architecture"));
        }
        let mut tensors = Vec::with_capacity(header.params.len());
        for (i, (name, rows, cols)) in header.params.iter().enumerate() {
            if model.params.names()[i] != *name {
                return Err(Error::Checkpoint(format!("unexpected parameter '{name}'")));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let chunk = payload.next().ok_or_else(|| bad("truncated payload"))?;
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            tensors.push(Matrix::new(*rows, *cols, data)?);
        }
        if payload.next().is_some() {
            return Err(bad("trailing payload"));
        }
        model
            .params
            .replace(tensors)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            field: header.field,
            variant: header.variant,
            basis: header.basis,
            normalizer: header.normalizer,
            scaler: header.scaler,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Hash over the bit patterns of every weight.
    pub fn param_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for t in self.model.params.tensors() {
            h.write_usize(t.rows());
            h.write_usize(t.cols());
            for v in t.data() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnScaler;
    use crate::net::Architecture;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            architecture: Architecture::Surf2Vol,
            hidden: 6,
            mlp_depth: 1,
            surface_layers: 1,
            s2v_layers: 1,
            ..ModelConfig::default()
        };
        Checkpoint {
            field: FieldId::Pressure,
            variant: FeatureVariant::Polar,
            basis: BasisSettings {
                n_basis: 8,
                spacing: 0.01,
                domain: 3.0,
                factorial_norm: false,
            },
            normalizer: FieldNormalizer {
                field: FieldId::Pressure,
                mean: 0.1,
                std: 2.0,
                log_transform: true,
            },
            scaler: InputScaler {
                node: ColumnScaler {
                    mean: (0..19).map(|i| 0.1 * i as f64 + 1.0 / 3.0).collect(),
                    inv_std: (0..19).map(|i| 1.0 / (1.0 + i as f64).sqrt()).collect(),
                },
                edge: ColumnScaler::identity(7),
            },
            model: GeoModel::new(config, 19, 7, 42),
        }
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.param_hash(), ck.param_hash());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
