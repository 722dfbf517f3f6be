//! `FVE1` vector files and their JSON sidecar manifests.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FVE1" | dim: u32 | count: u64 | count × dim f32, row-major
//! ```
//!
//! Per-row metadata lives next to the vector file in `<path>.manifest.json`
//! as a JSON array of `{id, subject, well_aligned}` objects.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_unique_ids, Dataset};
use crate::error::{Error, Result};
use crate::wire::Reader;

pub const VECTOR_MAGIC: &[u8; 4] = b"FVE1";
pub const VECTOR_HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: u64,
    pub subject: Option<String>,
    pub well_aligned: bool,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn encode_vectors(dim: usize, vectors: &[f32]) -> Result<Vec<u8>> {
    if dim == 0 || !vectors.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: vectors.len(),
        });
    }
    let dim32 = u32::try_from(dim).map_err(|_| crate::error::invalid("dimension exceeds u32"))?;
    let count = (vectors.len() / dim) as u64;
    let mut out = Vec::with_capacity(VECTOR_HEADER_LEN + vectors.len() * 4);
    out.extend_from_slice(VECTOR_MAGIC);
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for v in vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parse a vector file body into `(dim, row-major floats)`.
///
/// A payload that is a whole `count × d'` grid for some `d' != dim` is
/// reported as a dimension mismatch; any other short payload is truncated.
pub fn decode_vectors(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    let mut reader = Reader::new(bytes);
    reader.magic(VECTOR_MAGIC, "FVE1")?;
    let dim = reader.u32()? as usize;
    let count = reader.u64()?;
    if dim == 0 {
        return Err(crate::error::invalid("dimension must be positive"));
    }
    let payload = reader.remaining() as u64;
    let expected = count
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Truncated {
            expected: u64::MAX,
            found: payload,
        })?;
    if payload != expected {
        if count > 0 && payload.is_multiple_of(4 * count) && payload > 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: (payload / (4 * count)) as usize,
            });
        }
        if payload < expected {
            return Err(Error::Truncated {
                expected,
                found: payload,
            });
        }
        return Err(Error::TrailingBytes(payload - expected));
    }
    let vectors = reader.f32_vec(expected as usize / 4)?;
    Ok((dim, vectors))
}

pub fn encode_manifest(dataset: &Dataset) -> Result<Vec<u8>> {
    let rows: Vec<ManifestRow> = dataset
        .iter()
        .map(|r| ManifestRow {
            id: r.id,
            subject: r.subject.map(str::to_owned),
            well_aligned: r.well_aligned,
        })
        .collect();
    Ok(serde_json::to_vec(&rows)?)
}

pub fn decode_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    serde_json::from_slice(bytes).map_err(|e| Error::Manifest(e.to_string()))
}

/// Combine a decoded vector payload with its manifest rows.
pub(crate) fn assemble(dim: usize, vectors: Vec<f32>, rows: Vec<ManifestRow>) -> Result<Dataset> {
    let count = vectors.len() / dim;
    if rows.len() != count {
        return Err(Error::Manifest(format!(
            "manifest lists {} rows but vector file holds {count}",
            rows.len()
        )));
    }
    let mut ids = Vec::with_capacity(count);
    let mut subjects = Vec::with_capacity(count);
    let mut well_aligned = Vec::with_capacity(count);
    for row in rows {
        ids.push(row.id);
        subjects.push(row.subject);
        well_aligned.push(row.well_aligned);
    }
    Dataset::from_parts(dim, ids, subjects, well_aligned, vectors)
}

/// Parse an in-memory vector file plus manifest.
pub fn decode_dataset(vector_bytes: &[u8], manifest_bytes: &[u8]) -> Result<Dataset> {
    let (dim, vectors) = decode_vectors(vector_bytes)?;
    let rows = decode_manifest(manifest_bytes)?;
    assemble(dim, vectors, rows)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let manifest = fs::read(manifest_path(path))?;
    decode_dataset(&bytes, &manifest)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    check_unique_ids(dataset.ids())?;
    let bytes = encode_vectors(dataset.dim(), dataset.vectors())?;
    let manifest = encode_manifest(dataset)?;
    fs::write(path, bytes)?;
    fs::write(manifest_path(path), manifest)?;
    Ok(())
}
