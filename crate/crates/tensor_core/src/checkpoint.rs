//! Parameter checkpoint file: a little-endian u64 length prefix, a JSON
//! header describing names/shapes/offsets, then a raw little-endian f32
//! payload. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Element count.
    pub len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    entries: Vec<CheckpointEntry>,
}

pub fn write_checkpoint(
    path: &Path,
    entries: &[(String, Vec<usize>, Vec<f32>)],
) -> Result<(), CheckpointError> {
    let mut offset = 0usize;
    let mut header_entries = Vec::with_capacity(entries.len());
    for (name, shape, data) in entries {
        let expected: usize = shape.iter().product();
        assert_eq!(expected, data.len(), "shape/data mismatch for {name}");
        header_entries.push(CheckpointEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
            len: data.len(),
        });
        offset += data.len() * 4;
    }
    let header = Header { version: 1, dtype: "f32".to_string(), entries: header_entries };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, _, data) in entries {
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let header_len = u64::from_le_bytes(len_buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(CheckpointError::Header(format!("unsupported dtype {}", header.dtype)));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut out = Vec::with_capacity(header.entries.len());
    for e in header.entries {
        let bytes = e.len * 4;
        if e.offset + bytes > payload.len() {
            return Err(CheckpointError::Truncated { expected: e.offset + bytes, found: payload.len() });
        }
        let mut data = Vec::with_capacity(e.len);
        for chunk in payload[e.offset..e.offset + bytes].chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        out.push((e.name, e.shape, data));
    }
    Ok(out)
}
