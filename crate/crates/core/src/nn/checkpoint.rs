//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                          |
//! |------------------|--------------------------------------------------|
//! | 8                | magic `D2LABNN1`                                 |
//! | 8                | `u64` length `H` of the JSON header              |
//! | H                | UTF-8 JSON of the [`MlpSpec`]                    |
//! | 8 * n_params     | `f64` values, per layer: weight row-major, bias  |
//!
//! Weight matrices are `fan_in x fan_out`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Layer, Mlp, MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"D2LABNN1";

pub fn encode(net: &Mlp) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&net.spec)?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * net.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in net.params.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(parse_err(0, "missing checkpoint magic"));
    }
    let h = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize.checked_add(h).filter(|end| *end <= bytes.len()).ok_or_else(|| parse_err(8, "header length runs past end of file"))?;
    let spec: MlpSpec = serde_json::from_slice(&bytes[16..body]).map_err(|e| parse_err(16, e.to_string()))?;
    spec.validate().map_err(|e| Error::Schema(e.to_string()))?;
    let expected = 8 * spec.n_params();
    if bytes.len() - body != expected {
        return Err(parse_err(body, format!("expected {expected} parameter bytes, found {}", bytes.len() - body)));
    }
    let mut values = bytes[body..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::new();
    for (i, o) in spec.layer_shapes() {
        let weight = Array2::from_shape_vec((i, o), values.by_ref().take(i * o).collect()).expect("sized above");
        let bias = Array1::from_iter(values.by_ref().take(o));
        layers.push(Layer { weight, bias });
    }
    Mlp::from_params(spec, MlpParams { layers }).map_err(|e| Error::Schema(e.to_string()))
}

pub fn save(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(net)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
