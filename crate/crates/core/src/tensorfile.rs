//! Shared binary parameter format: `DNTP` magic, a little-endian u32
//! version, a u64 header length, a JSON header naming the tensors and their
//! lengths, then every tensor as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DNTP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    /// What the file holds, e.g. `"scorer"`.
    pub kind: String,
    /// Kind-specific metadata (architecture, dimensions, coefficients).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

pub fn write_tensors<W: Write>(
    mut w: W,
    kind: &str,
    meta: serde_json::Value,
    tensors: &[(&str, &[f64])],
) -> Result<()> {
    let header = TensorHeader {
        kind: kind.to_string(),
        meta,
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, t) in tensors {
        buf.clear();
        buf.reserve(t.len() * 8);
        for x in t.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R, expected_kind: &str) -> Result<(TensorHeader, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a parameter file (bad magic)".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Format(format!("unsupported version {}", u32::from_le_bytes(v))));
    }
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let mut json = vec![0u8; u64::from_le_bytes(n) as usize];
    r.read_exact(&mut json)?;
    let header: TensorHeader = serde_json::from_slice(&json)?;
    if header.kind != expected_kind {
        return Err(Error::Format(format!(
            "expected {expected_kind} parameters, found {}",
            header.kind
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let mut bytes = vec![0u8; entry.len * 8];
        r.read_exact(&mut bytes)?;
        tensors.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        );
    }
    Ok((header, tensors))
}

pub fn save(path: impl AsRef<Path>, kind: &str, meta: serde_json::Value, tensors: &[(&str, &[f64])]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(f, kind, meta, tensors)
}

pub fn load(path: impl AsRef<Path>, kind: &str) -> Result<(TensorHeader, Vec<Vec<f64>>)> {
    read_tensors(std::io::BufReader::new(std::fs::File::open(path)?), kind)
}
