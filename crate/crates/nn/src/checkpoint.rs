//! Model files: an 8-byte magic, a little-endian `u64` header length, a JSON
//! header, then every parameter as little-endian `f64` in `params()` order.

use std::io::{Read, Write};

use mdfeat_core::{Error, Real, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::param::Parameters;

const MAGIC: &[u8; 8] = b"MDFNNv1\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header<C> {
    pub kind: String,
    pub config: C,
    pub seed: u64,
    pub shapes: Vec<Vec<usize>>,
}

pub fn save<T: Real, M: Parameters<T>, C: Serialize, W: Write>(
    mut w: W,
    kind: &str,
    config: &C,
    seed: u64,
    model: &mut M,
) -> Result<()> {
    let params = model.params();
    let header =
        Header { kind: kind.to_string(), config, seed, shapes: params.iter().map(|p| p.shape.clone()).collect() };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in params {
        for v in p.value.iter() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_header<C: DeserializeOwned, R: Read>(r: &mut R) -> Result<Header<C>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a model file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| Error::Parse(e.to_string()))
}

/// Fills `model` from the payload after checking that the stored shapes
/// match the freshly built model exactly.
pub fn load_params<T: Real, M: Parameters<T>, C, R: Read>(r: &mut R, header: &Header<C>, model: &mut M) -> Result<()> {
    let params = model.params();
    let shapes: Vec<&Vec<usize>> = params.iter().map(|p| &p.shape).collect();
    if shapes.len() != header.shapes.len() || shapes.iter().zip(&header.shapes).any(|(a, b)| *a != b) {
        return Err(Error::Parse(format!(
            "stored parameter shapes {:?} do not match the model {:?}",
            header.shapes, shapes
        )));
    }
    let mut buf = [0u8; 8];
    for p in params {
        for v in p.value.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = T::lit(f64::from_le_bytes(buf));
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::Parse("trailing bytes after the parameter payload".into()));
    }
    Ok(())
}
