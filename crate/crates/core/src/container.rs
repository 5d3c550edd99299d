//! Versioned artifact container shared by datasets and checkpoints.
//!
//! Layout: one line of JSON (the header), then a little-endian `f64`
//! payload. The header carries a SHA-256 digest over the serialized body and
//! the payload bytes, so edits to either are caught on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header<B> {
    kind: String,
    version: u32,
    payload_len: usize,
    digest: String,
    body: B,
}

fn payload_bytes(payload: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn digest(body_json: &[u8], payload: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((body_json.len() as u64).to_le_bytes());
    hasher.update(body_json);
    hasher.update(payload);
    hex::encode(hasher.finalize())
}

pub fn write<B: Serialize>(path: &Path, kind: &str, body: &B, payload: &[f64]) -> Result<()> {
    let body_json = serde_json::to_vec(body).map_err(|e| Error::Format(e.to_string()))?;
    let bytes = payload_bytes(payload);
    let header = Header {
        kind: kind.to_string(),
        version: FORMAT_VERSION,
        payload_len: payload.len(),
        digest: digest(&body_json, &bytes),
        body,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read<B: Serialize + DeserializeOwned>(path: &Path, kind: &str) -> Result<(B, Vec<f64>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format(format!(
            "{}: missing header line",
            path.display()
        )));
    }
    let header: Header<B> = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.kind != kind {
        return Err(Error::Format(format!(
            "{}: expected a {kind} file, found {}",
            path.display(),
            header.kind
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: format version {} is not supported (expected {FORMAT_VERSION})",
            path.display(),
            header.version
        )));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != header.payload_len * 8 {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, header announces {} values",
            path.display(),
            bytes.len(),
            header.payload_len
        )));
    }
    let body_json = serde_json::to_vec(&header.body).map_err(|e| Error::Format(e.to_string()))?;
    if digest(&body_json, &bytes) != header.digest {
        return Err(Error::Integrity(format!(
            "{}: contents do not match the recorded digest",
            path.display()
        )));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header.body, payload))
}
