//! Embedding vectors with identity labels and alignment flags.
//!
//! A [`Dataset`] keeps its vectors in one row-major buffer so that million-row
//! galleries stay a single allocation; [`EmbeddingRecord`] is the owned,
//! per-row view used at construction and in templates.

mod io;
mod pca;
mod synth;

use std::collections::HashSet;

use crate::error::{invalid, Error, Result};

pub use io::{
    decode_dataset, decode_manifest, decode_vectors, encode_manifest, encode_vectors, load_dataset,
    manifest_path, save_dataset, ManifestRow, VECTOR_HEADER_LEN, VECTOR_MAGIC,
};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use synth::{generate_synthetic, SyntheticConfig};

/// One gallery or probe item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: u64,
    pub subject: Option<String>,
    pub well_aligned: bool,
    pub vector: Vec<f32>,
}

/// Borrowed view of one row of a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRef<'a> {
    pub id: u64,
    pub subject: Option<&'a str>,
    pub well_aligned: bool,
    pub vector: &'a [f32],
}

impl RecordRef<'_> {
    pub fn to_owned(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            id: self.id,
            subject: self.subject.map(str::to_owned),
            well_aligned: self.well_aligned,
            vector: self.vector.to_vec(),
        }
    }
}

/// An ordered collection of embeddings sharing one dimension.
///
/// Invariants enforced by every constructor: each vector has `dim` finite
/// components and ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    ids: Vec<u64>,
    subjects: Vec<Option<String>>,
    well_aligned: Vec<bool>,
    vectors: Vec<f32>,
}

impl Dataset {
    /// An empty dataset of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            subjects: Vec::new(),
            well_aligned: Vec::new(),
            vectors: Vec::new(),
        })
    }

    pub fn from_records(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut ids = Vec::with_capacity(records.len());
        let mut subjects = Vec::with_capacity(records.len());
        let mut well_aligned = Vec::with_capacity(records.len());
        let mut vectors = Vec::with_capacity(records.len() * dim);
        for record in records {
            if record.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: record.vector.len(),
                });
            }
            ids.push(record.id);
            subjects.push(record.subject);
            well_aligned.push(record.well_aligned);
            vectors.extend_from_slice(&record.vector);
        }
        Self::from_parts(dim, ids, subjects, well_aligned, vectors)
    }

    /// Assemble a dataset from column buffers, validating every invariant.
    pub fn from_parts(
        dim: usize,
        ids: Vec<u64>,
        subjects: Vec<Option<String>>,
        well_aligned: Vec<bool>,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let n = ids.len();
        if subjects.len() != n || well_aligned.len() != n {
            return Err(Error::LengthMismatch(
                n,
                subjects.len().min(well_aligned.len()),
            ));
        }
        if vectors.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                found: vectors.len(),
            });
        }
        let dataset = Self {
            dim,
            ids,
            subjects,
            well_aligned,
            vectors,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Re-check finiteness and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        check_unique_ids(&self.ids)?;
        for (row, vector) in self.vectors.chunks_exact(self.dim).enumerate() {
            if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    id: self.ids[row],
                    index,
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn subjects(&self) -> &[Option<String>] {
        &self.subjects
    }

    pub fn well_aligned(&self) -> &[bool] {
        &self.well_aligned
    }

    /// Row-major `len() × dim()` buffer.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn record(&self, row: usize) -> RecordRef<'_> {
        RecordRef {
            id: self.ids[row],
            subject: self.subjects[row].as_deref(),
            well_aligned: self.well_aligned[row],
            vector: self.vector(row),
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = RecordRef<'_>> + '_ {
        (0..self.len()).map(move |row| self.record(row))
    }

    pub fn to_records(&self) -> Vec<EmbeddingRecord> {
        self.iter().map(|r| r.to_owned()).collect()
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut subjects = Vec::with_capacity(rows.len());
        let mut well_aligned = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * self.dim);
        for &row in rows {
            if row >= self.len() {
                return Err(invalid(format!("row {row} out of range")));
            }
            ids.push(self.ids[row]);
            subjects.push(self.subjects[row].clone());
            well_aligned.push(self.well_aligned[row]);
            vectors.extend_from_slice(self.vector(row));
        }
        check_unique_ids(&ids)?;
        Ok(Self {
            dim: self.dim,
            ids,
            subjects,
            well_aligned,
            vectors,
        })
    }

    /// The first `n` rows (or all of them).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dim: self.dim,
            ids: self.ids[..n].to_vec(),
            subjects: self.subjects[..n].to_vec(),
            well_aligned: self.well_aligned[..n].to_vec(),
            vectors: self.vectors[..n * self.dim].to_vec(),
        }
    }

    /// Append all rows of `other`; ids must stay unique.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut seen: HashSet<u64> = self.ids.iter().copied().collect();
        for &id in &other.ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        self.ids.extend_from_slice(&other.ids);
        self.subjects.extend_from_slice(&other.subjects);
        self.well_aligned.extend_from_slice(&other.well_aligned);
        self.vectors.extend_from_slice(&other.vectors);
        Ok(())
    }

    /// Copy with every row scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.normalize_in_place()?;
        Ok(out)
    }

    pub fn normalize_in_place(&mut self) -> Result<()> {
        for row in self.vectors.chunks_exact_mut(self.dim) {
            normalize_slice(row)?;
        }
        Ok(())
    }

    pub(crate) fn into_vectors(self) -> Vec<f32> {
        self.vectors
    }
}

pub(crate) fn check_unique_ids(ids: &[u64]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(())
}

/// L2 norm accumulated in f64.
pub fn l2_norm(vector: &[f32]) -> f64 {
    vector
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Scale `vector` to unit length.
pub fn l2_normalize(vector: &[f32]) -> Result<Vec<f32>> {
    let mut out = vector.to_vec();
    normalize_slice(&mut out)?;
    Ok(out)
}

pub(crate) fn normalize_slice(vector: &mut [f32]) -> Result<()> {
    let norm = l2_norm(vector);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    for v in vector.iter_mut() {
        *v = (f64::from(*v) / norm) as f32;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, vector: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            id,
            subject: Some(format!("s{id}")),
            well_aligned: true,
            vector,
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let out = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-7);
        assert!((out[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_unit_vector_is_identity() {
        assert_eq!(l2_normalize(&[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        let once = l2_normalize(&[0.3, -0.2, 0.9]).unwrap();
        let twice = l2_normalize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn normalize_zero_vector_fails() {
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::from_records(2, vec![rec(1, vec![1.0, 0.0]), rec(1, vec![0.0, 1.0])]);
        assert!(matches!(err, Err(Error::DuplicateId(1))));
    }

    #[test]
    fn wrong_length_rejected() {
        let err = Dataset::from_records(3, vec![rec(1, vec![1.0, 0.0])]);
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let err = Dataset::from_records(2, vec![rec(4, vec![1.0, f32::NAN])]);
        assert!(matches!(err, Err(Error::NonFinite { id: 4, index: 1 })));
    }

    #[test]
    fn select_and_extend() {
        let ds = Dataset::from_records(
            2,
            vec![
                rec(1, vec![1.0, 0.0]),
                rec(2, vec![0.0, 1.0]),
                rec(3, vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        let picked = ds.select(&[2, 0]).unwrap();
        assert_eq!(picked.ids(), &[3, 1]);
        assert_eq!(picked.vector(0), &[1.0, 1.0]);

        let mut a = ds.prefix(1);
        assert!(a.extend(&ds).is_err());
        a.extend(&ds.select(&[1]).unwrap()).unwrap();
        assert_eq!(a.ids(), &[1, 2]);
    }
}
