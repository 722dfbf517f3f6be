//! `PQIX` gallery index files.
//!
//! ```text
//! "PQIX" | m: u32 | z: u32 | dim: u32 | N: u64 | keep_raw: u8 | norm_applied: u8
//!        | codebook centroids: z·dim f32
//!        | ids: N u64
//!        | codes: N·m indices, 1/2/4 bytes each for z ≤ 2⁸ / ≤ 2¹⁶ / larger
//!        | raw vectors: N·dim f32 (only when keep_raw = 1)
//! ```

use std::fs;
use std::path::Path;

use super::GalleryIndex;
use crate::error::{invalid, Result};
use crate::quantizer::PqCodebook;
use crate::wire::{checked_len, Reader};

pub const INDEX_MAGIC: &[u8; 4] = b"PQIX";

pub fn encode_index(index: &GalleryIndex) -> Vec<u8> {
    let cb = index.codebook();
    let raw = index.raw_vectors();
    let mut out = Vec::with_capacity(
        30 + cb.centroids().len() * 4
            + index.ids().len() * 8
            + index.codes().len()
            + raw.map_or(0, |r| r.len() * 4),
    );
    out.extend_from_slice(INDEX_MAGIC);
    for field in [cb.m(), cb.z(), cb.dim()] {
        out.extend_from_slice(&(field as u32).to_le_bytes());
    }
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.push(u8::from(raw.is_some()));
    out.push(u8::from(index.norm_applied()));
    for c in cb.centroids() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for id in index.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out.extend_from_slice(index.codes());
    if let Some(raw) = raw {
        for v in raw {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn flag(byte: u8, name: &str) -> Result<bool> {
    match byte {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(invalid(format!(
            "{name} flag must be 0 or 1, found {other}"
        ))),
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<GalleryIndex> {
    let mut reader = Reader::new(bytes);
    reader.magic(INDEX_MAGIC, "PQIX")?;
    let m = reader.u32()? as usize;
    let z = reader.u32()? as usize;
    let dim = reader.u32()? as usize;
    let n = usize::try_from(reader.u64()?).map_err(|_| invalid("gallery size exceeds usize"))?;
    let keep_raw = flag(reader.u8()?, "keep_raw")?;
    let norm_applied = flag(reader.u8()?, "norm_applied")?;
    if m == 0 || z == 0 || dim == 0 || !dim.is_multiple_of(m) {
        return Err(invalid(format!(
            "invalid index header m={m} z={z} dim={dim}"
        )));
    }
    let centroids = reader.f32_vec(checked_len(&[z, dim])?)?;
    let codebook = PqCodebook::new(m, z, dim, centroids)?;
    let ids = reader.u64_vec(n)?;
    let codes = reader
        .take(checked_len(&[n, m, codebook.code_width().bytes()])?)?
        .to_vec();
    let raw = if keep_raw {
        Some(reader.f32_vec(checked_len(&[n, dim])?)?)
    } else {
        None
    };
    reader.finish()?;
    GalleryIndex::from_parts(codebook, ids, codes, raw, norm_applied)
}

pub fn save_index(index: &GalleryIndex, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<GalleryIndex> {
    decode_index(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{generate_synthetic, SyntheticConfig};
    use crate::error::Error;
    use crate::filter::build_index;
    use crate::quantizer::train_codebooks;

    fn index(keep_raw: bool, z: usize) -> GalleryIndex {
        let ds = generate_synthetic(&SyntheticConfig::new(300, 1, 8, 0.0, 0.0, 3)).unwrap();
        let cb = train_codebooks(&ds, 2, z, 5, 1).unwrap();
        build_index(&ds.prefix(20), &cb, keep_raw).unwrap()
    }

    #[test]
    fn round_trip_with_and_without_raw() {
        for keep_raw in [false, true] {
            let idx = index(keep_raw, 16);
            let bytes = encode_index(&idx);
            assert_eq!(decode_index(&bytes).unwrap(), idx);
        }
    }

    #[test]
    fn wide_codes_round_trip() {
        let idx = index(false, 260);
        assert_eq!(idx.codes().len(), 20 * 2 * 2);
        assert_eq!(decode_index(&encode_index(&idx)).unwrap(), idx);
    }

    #[test]
    fn rebuilding_is_byte_identical() {
        assert_eq!(
            encode_index(&index(true, 16)),
            encode_index(&index(true, 16))
        );
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_index(&index(true, 16));
        assert!(matches!(
            decode_index(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(decode_index(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[24] = 7;
        assert!(decode_index(&bad).is_err());

        // Out-of-range code index: z = 16, so 0xFF is invalid.
        let idx = index(false, 16);
        let mut bad = encode_index(&idx);
        let codes_at = 4 + 12 + 8 + 2 + 16 * 8 * 4 + 20 * 8;
        bad[codes_at] = 0xFF;
        assert!(matches!(
            decode_index(&bad),
            Err(Error::CodeOutOfRange { index: 255, z: 16 })
        ));
    }
}
