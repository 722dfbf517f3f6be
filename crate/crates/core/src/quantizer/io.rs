//! `PQCB` codebook files.
//!
//! ```text
//! "PQCB" | m: u32 | z: u32 | dim: u32 | m·z·(dim/m) f32
//! ```

use std::fs;
use std::path::Path;

use super::PqCodebook;
use crate::error::{invalid, Result};
use crate::wire::{checked_len, Reader};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"PQCB";

pub fn encode_codebook(codebook: &PqCodebook) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + codebook.centroids().len() * 4);
    out.extend_from_slice(CODEBOOK_MAGIC);
    for field in [codebook.m(), codebook.z(), codebook.dim()] {
        out.extend_from_slice(&(field as u32).to_le_bytes());
    }
    for c in codebook.centroids() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_codebook(bytes: &[u8]) -> Result<PqCodebook> {
    let mut reader = Reader::new(bytes);
    reader.magic(CODEBOOK_MAGIC, "PQCB")?;
    let codebook = read_codebook_body(&mut reader)?;
    reader.finish()?;
    Ok(codebook)
}

/// `m, z, dim` followed by the centroids; shared with the index format.
pub(crate) fn read_codebook_body(reader: &mut Reader<'_>) -> Result<PqCodebook> {
    let m = reader.u32()? as usize;
    let z = reader.u32()? as usize;
    let dim = reader.u32()? as usize;
    if m == 0 || z == 0 || dim == 0 || !dim.is_multiple_of(m) {
        return Err(invalid(format!(
            "invalid codebook header m={m} z={z} dim={dim}"
        )));
    }
    let centroids = reader.f32_vec(checked_len(&[z, dim])?)?;
    PqCodebook::new(m, z, dim, centroids)
}

pub fn save_codebook(codebook: &PqCodebook, path: &Path) -> Result<()> {
    fs::write(path, encode_codebook(codebook))?;
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<PqCodebook> {
    decode_codebook(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn round_trip() {
        let cb = PqCodebook::new(2, 3, 4, (0..12).map(|v| v as f32 - 5.5).collect()).unwrap();
        let bytes = encode_codebook(&cb);
        assert_eq!(bytes.len(), 16 + 12 * 4);
        assert_eq!(decode_codebook(&bytes).unwrap(), cb);
    }

    #[test]
    fn rejects_bad_input() {
        let cb = PqCodebook::new(2, 3, 4, vec![0.25; 12]).unwrap();
        let bytes = encode_codebook(&cb);
        assert!(matches!(
            decode_codebook(&bytes[..20]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(decode_codebook(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&5u32.to_le_bytes());
        assert!(decode_codebook(&bad).is_err());
        let mut long = bytes;
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(
            decode_codebook(&long),
            Err(Error::TrailingBytes(4))
        ));
    }
}
