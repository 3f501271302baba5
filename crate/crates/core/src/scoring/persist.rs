//! Model cache files.
//!
//! ```text
//! "PMOD" | version: u16 | meta_len: u32 | meta: JSON (meta_len bytes) | FEAT block ...
//! ```
//!
//! Every parameter array is one binary feature block, so parameters are
//! stored at 32-bit precision like the features themselves.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LpModel, MdModel};
use crate::dataio::{decode_binary_prefix, encode_binary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MODEL_MAGIC: &[u8; 4] = b"PMOD";
const MODEL_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Meta {
    Lp { classes: usize, dims: usize },
    Md { dims: usize, reg_epsilon: f64 },
}

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

fn encode(meta: &Meta, blocks: &[&Matrix]) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(meta).expect("meta serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for b in blocks {
        out.extend_from_slice(&encode_binary(b)?);
    }
    Ok(out)
}

fn decode(bytes: &[u8], n_blocks: usize) -> Result<(Meta, Vec<Matrix>)> {
    if bytes.len() < 10 || &bytes[0..4] != MODEL_MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let meta_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let meta_end = 10 + meta_len;
    let meta_bytes = bytes
        .get(10..meta_end)
        .ok_or_else(|| Error::Format("model metadata truncated".into()))?;
    let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Format(format!("model metadata: {e}")))?;
    let mut pos = meta_end;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let (m, used) = decode_binary_prefix(&bytes[pos..])?;
        pos += used;
        blocks.push(m);
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after model blocks".into()));
    }
    Ok((meta, blocks))
}

pub fn encode_lp(model: &LpModel) -> Result<Vec<u8>> {
    let meta = Meta::Lp {
        classes: model.classes(),
        dims: model.dims(),
    };
    encode(&meta, &[&model.weights, &row(&model.bias), &row(&model.mean), &row(&model.std)])
}

pub fn decode_lp(bytes: &[u8]) -> Result<LpModel> {
    let (meta, mut b) = decode(bytes, 4)?;
    let Meta::Lp { classes, dims } = meta else {
        return Err(Error::Format("model file holds a Mahalanobis model".into()));
    };
    let std = b.pop().unwrap().into_vec();
    let mean = b.pop().unwrap().into_vec();
    let bias = b.pop().unwrap().into_vec();
    let weights = b.pop().unwrap();
    if weights.rows() != classes || weights.cols() != dims || bias.len() != classes || mean.len() != dims || std.len() != dims {
        return Err(Error::Format("probe parameter shapes disagree with metadata".into()));
    }
    if std.iter().any(|s| *s <= 0.0) {
        return Err(Error::Data("probe scale entries must be positive".into()));
    }
    Ok(LpModel {
        weights,
        bias,
        mean,
        std,
    })
}

pub fn encode_md(model: &MdModel) -> Result<Vec<u8>> {
    let meta = Meta::Md {
        dims: model.dims(),
        reg_epsilon: model.reg_epsilon,
    };
    encode(&meta, &[&row(&model.mean), &model.precision])
}

pub fn decode_md(bytes: &[u8]) -> Result<MdModel> {
    let (meta, mut b) = decode(bytes, 2)?;
    let Meta::Md { dims, reg_epsilon } = meta else {
        return Err(Error::Format("model file holds a linear probe".into()));
    };
    let precision = b.pop().unwrap();
    let mean = b.pop().unwrap().into_vec();
    if mean.len() != dims || precision.rows() != dims || precision.cols() != dims {
        return Err(Error::Format("Mahalanobis parameter shapes disagree with metadata".into()));
    }
    Ok(MdModel {
        mean,
        precision,
        reg_epsilon,
    })
}

pub fn save_lp(path: impl AsRef<Path>, model: &LpModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_lp(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_lp(path: impl AsRef<Path>) -> Result<LpModel> {
    let path = path.as_ref();
    decode_lp(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_md(path: impl AsRef<Path>, model: &MdModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_md(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_md(path: impl AsRef<Path>) -> Result<MdModel> {
    let path = path.as_ref();
    decode_md(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
