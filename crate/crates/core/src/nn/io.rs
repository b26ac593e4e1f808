//! Binary model container.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, JSON header
//! (config, edge-type order, tensor names and shapes), then every tensor as
//! little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::flowgraph::EdgeType;

pub const MODEL_MAGIC: &[u8; 8] = b"DFMODEL\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    edge_types: Vec<String>,
    tensors: Vec<TensorInfo>,
}

fn edge_order() -> Vec<String> {
    EdgeType::ALL.iter().map(|t| t.tag().to_string()).collect()
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.tensors();
        let header = Header {
            config: self.config,
            edge_types: edge_order(),
            tensors: tensors
                .iter()
                .map(|(n, m)| TensorInfo {
                    name: n.clone(),
                    rows: m.rows,
                    cols: m.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in tensors {
            for x in &m.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let bad = |m: &str| Error::Format(format!("model file: {m}"));
        if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != MODEL_VERSION {
            return Err(Error::ModelMismatch(format!(
                "unsupported model version {version} (expected {MODEL_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        let header: Header = serde_json::from_slice(body.get(..hlen).ok_or_else(|| bad("truncated header"))?)?;
        if header.edge_types != edge_order() {
            return Err(Error::ModelMismatch("edge-type order differs".into()));
        }
        let mut params = ModelParams::init(&header.config);
        let expected: Vec<(String, usize, usize)> = params
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.rows, m.cols))
            .collect();
        let found: Vec<(String, usize, usize)> = header
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.rows, t.cols))
            .collect();
        if expected != found {
            return Err(Error::ModelMismatch("tensor layout does not match the config".into()));
        }
        let mut data = body[hlen..].chunks_exact(8);
        for m in params.tensors_mut() {
            for x in m.data.iter_mut() {
                let b = data.next().ok_or_else(|| bad("truncated weights"))?;
                *x = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
        }
        if data.next().is_some() || !data.remainder().is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Model {
            config: header.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&bytes)
    }

    /// Fails when the model was trained for other label or row lengths.
    pub fn check_features(&self, label_len: usize, row_len: usize) -> Result<()> {
        let h = self.config.hyper;
        if h.label_len != label_len || h.row_len != row_len {
            return Err(Error::ModelMismatch(format!(
                "model expects L^v = {} and row length {}, features have {} and {}",
                h.label_len, h.row_len, label_len, row_len
            )));
        }
        Ok(())
    }
}
