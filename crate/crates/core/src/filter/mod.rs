//! The fast filtering stage: an immutable PQ-encoded gallery, exhaustive ADC
//! search over it, and exact brute-force search as the reference.
//!
//! All scores are similarities (higher is better). For L1 and L2 the exact
//! search reports the negated distance; PQ search reports `1 − D/2`, which for
//! unit-norm vectors is the cosine similarity to the reconstructed item.

mod io;
mod topk;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embedding::{check_unique_ids, l2_norm, Dataset};
use crate::error::{invalid, Error, Result};
use crate::quantizer::{build_distance_table, CodeWidth, DistanceTable, PqCode, PqCodebook};

pub use io::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC};
pub use topk::{rank_order, TopK};

/// Default upper bound for the automatic candidate-list size.
pub const DEFAULT_CANDIDATE_CAP: usize = 50_000;

/// Galleries at least this large are scanned in parallel shards.
const SHARD_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub score: f64,
}

/// Ranked `(id, score)` list: descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateList {
    entries: Vec<Candidate>,
}

impl CandidateList {
    /// Sort arbitrary candidates into rank order.
    pub fn from_unsorted(mut entries: Vec<Candidate>) -> Self {
        entries.sort_by(rank_order);
        Self { entries }
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|c| c.id).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.score).collect()
    }

    pub fn top(&self) -> Option<&Candidate> {
        self.entries.first()
    }

    /// The first `k` entries.
    pub fn prefix(&self, k: usize) -> CandidateList {
        CandidateList {
            entries: self.entries[..k.min(self.len())].to_vec(),
        }
    }

    pub fn into_entries(self) -> Vec<Candidate> {
        self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Cosine,
    L1,
    L2,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            other => Err(invalid(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        })
    }
}

/// Borrowed raw vectors for exact search.
#[derive(Debug, Clone, Copy)]
pub struct RawGallery<'a> {
    pub dim: usize,
    pub ids: &'a [u64],
    pub vectors: &'a [f32],
    /// Rows are known to have unit norm, so cosine reduces to a dot product.
    pub unit_norm: bool,
}

impl<'a> From<&'a Dataset> for RawGallery<'a> {
    fn from(ds: &'a Dataset) -> Self {
        RawGallery {
            dim: ds.dim(),
            ids: ds.ids(),
            vectors: ds.vectors(),
            unit_norm: false,
        }
    }
}

/// Immutable PQ-encoded gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    codebook: PqCodebook,
    ids: Vec<u64>,
    /// `N × m` indices, each `codebook.code_width()` bytes.
    codes: Vec<u8>,
    raw_vectors: Option<Vec<f32>>,
    norm_applied: bool,
}

impl GalleryIndex {
    pub(crate) fn from_parts(
        codebook: PqCodebook,
        ids: Vec<u64>,
        codes: Vec<u8>,
        raw_vectors: Option<Vec<f32>>,
        norm_applied: bool,
    ) -> Result<Self> {
        let n = ids.len();
        let row_bytes = codebook.m() * codebook.code_width().bytes();
        if codes.len() != n * row_bytes {
            return Err(Error::LengthMismatch(n * row_bytes, codes.len()));
        }
        if let Some(raw) = &raw_vectors {
            if raw.len() != n * codebook.dim() {
                return Err(Error::LengthMismatch(n * codebook.dim(), raw.len()));
            }
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(invalid("raw vectors contain non-finite values"));
            }
        }
        check_unique_ids(&ids)?;
        let width = codebook.code_width();
        let z = codebook.z();
        if let Some(bad) = codes
            .chunks_exact(width.bytes())
            .map(|c| width.read(c))
            .find(|&j| j as usize >= z)
        {
            return Err(Error::CodeOutOfRange { index: bad, z });
        }
        Ok(Self {
            codebook,
            ids,
            codes,
            raw_vectors,
            norm_applied,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn codebook(&self) -> &PqCodebook {
        &self.codebook
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn norm_applied(&self) -> bool {
        self.norm_applied
    }

    pub fn raw_vectors(&self) -> Option<&[f32]> {
        self.raw_vectors.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }

    pub fn code(&self, row: usize) -> PqCode {
        let w = self.codebook.code_width();
        let len = self.codebook.m() * w.bytes();
        PqCode::unpack(&self.codes[row * len..(row + 1) * len], w)
    }

    pub fn raw(&self) -> Option<RawGallery<'_>> {
        self.raw_vectors.as_deref().map(|vectors| RawGallery {
            dim: self.dim(),
            ids: &self.ids,
            vectors,
            unit_norm: self.norm_applied,
        })
    }
}

/// Normalize and encode every dataset row. See [`build_index_owned`].
pub fn build_index(
    dataset: &Dataset,
    codebook: &PqCodebook,
    keep_raw: bool,
) -> Result<GalleryIndex> {
    build_index_owned(dataset.clone(), codebook, keep_raw)
}

/// Consumes the dataset so that its vector buffer can become the index's raw
/// vectors without a copy.
pub fn build_index_owned(
    mut dataset: Dataset,
    codebook: &PqCodebook,
    keep_raw: bool,
) -> Result<GalleryIndex> {
    if dataset.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: dataset.dim(),
        });
    }
    check_unique_ids(dataset.ids())?;
    dataset.normalize_in_place()?;
    let ids = dataset.ids().to_vec();
    let vectors = dataset.into_vectors();

    let m = codebook.m();
    let width = codebook.code_width();
    let row_bytes = m * width.bytes();
    let mut codes = vec![0u8; ids.len() * row_bytes];
    codes
        .par_chunks_mut(row_bytes)
        .zip(vectors.par_chunks(codebook.dim()))
        .for_each_init(
            || vec![0u32; m],
            |scratch, (out, vector)| {
                codebook.encode_indices(vector, scratch);
                for (slot, &j) in out.chunks_exact_mut(width.bytes()).zip(scratch.iter()) {
                    width.write(j, slot);
                }
            },
        );

    Ok(GalleryIndex {
        codebook: codebook.clone(),
        ids,
        codes,
        raw_vectors: keep_raw.then_some(vectors),
        norm_applied: true,
    })
}

/// `clamp(ceil(0.01 · N), 50, cap)`.
pub fn default_candidate_size(n: usize, cap: usize) -> usize {
    let one_percent = n.div_ceil(100);
    one_percent.max(50).min(cap)
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(invalid("k must be at least 1"));
    }
    Ok(())
}

fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    let mut tail = 0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += f64::from(*x) * f64::from(*y);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn l2_sq_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            let d = f64::from(x[l]) - f64::from(y[l]);
            acc[l] += d * d;
        }
    }
    let mut tail = 0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = f64::from(*x) - f64::from(*y);
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn l1_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
        .sum()
}

/// Cosine similarity accumulated in f64. Zero vectors score 0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot_f64(a, b) / denom
    }
}

/// Exact exhaustive search under `metric`.
pub fn search_exact<'a>(
    gallery: impl Into<RawGallery<'a>>,
    query: &[f32],
    k: usize,
    metric: Metric,
) -> Result<CandidateList> {
    check_k(k)?;
    let gallery = gallery.into();
    if query.len() != gallery.dim {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim,
            found: query.len(),
        });
    }
    let query_norm = l2_norm(query);
    if metric == Metric::Cosine && query_norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let score = |row: &[f32]| -> f64 {
        match metric {
            Metric::Cosine if gallery.unit_norm => dot_f64(query, row) / query_norm,
            Metric::Cosine => {
                let n = l2_norm(row);
                if n == 0.0 {
                    0.0
                } else {
                    dot_f64(query, row) / (query_norm * n)
                }
            }
            Metric::L2 => -l2_sq_f64(query, row).sqrt(),
            Metric::L1 => -l1_f64(query, row),
        }
    };

    let scan = |start: usize, rows: &[f32]| {
        let mut top = TopK::new(k);
        for (offset, row) in rows.chunks_exact(gallery.dim).enumerate() {
            top.push(gallery.ids[start + offset], score(row));
        }
        top
    };
    let top = sharded(gallery.ids.len(), gallery.dim, gallery.vectors, k, scan);
    Ok(CandidateList {
        entries: top.into_sorted(),
    })
}

/// Split `n` rows into shards when the pool has more than one thread; the
/// final merge uses the same total order, so results never depend on it.
fn sharded<T, F>(n: usize, row_len: usize, rows: &[T], k: usize, scan: F) -> TopK
where
    T: Sync,
    F: Fn(usize, &[T]) -> TopK + Sync,
{
    if n < 2 * SHARD_ROWS || rayon::current_num_threads() == 1 {
        return scan(0, rows);
    }
    rows.par_chunks(SHARD_ROWS * row_len)
        .enumerate()
        .map(|(shard, chunk)| scan(shard * SHARD_ROWS, chunk))
        .reduce(
            || TopK::new(k),
            |mut a, b| {
                a.merge(b);
                a
            },
        )
}

/// ADC scan over every gallery code; similarity is `1 − D/2`.
pub fn search_pq(index: &GalleryIndex, query: &[f32], k: usize) -> Result<CandidateList> {
    check_k(k)?;
    let table = build_distance_table(&index.codebook, query)?;
    Ok(CandidateList {
        entries: scan_table(index, &table, k).into_sorted(),
    })
}

/// Similarity reported for an ADC distance.
#[inline]
pub fn adc_similarity(distance: f64) -> f64 {
    1.0 - distance * 0.5
}

/// The per-row summation order is fixed, so scans are reproducible.
fn scan_table(index: &GalleryIndex, table: &DistanceTable, k: usize) -> TopK {
    let m = index.codebook.m();
    let z = index.codebook.z();
    let width = index.codebook.code_width();
    let row_bytes = m * width.bytes();

    match width {
        CodeWidth::U8 => {
            // f32 copy of the table; rows padded so that any byte indexes in bounds.
            let mut padded = vec![[0f32; 256]; m];
            for (i, row) in padded.iter_mut().enumerate() {
                for (p, &d) in row.iter_mut().zip(&table.as_slice()[i * z..(i + 1) * z]) {
                    *p = d as f32;
                }
            }
            let scan = |start: usize, codes: &[u8]| {
                let mut top = TopK::new(k);
                // Distance of the current k-th candidate; 1 - d/2 is exact for
                // f32 d, so anything farther cannot be admitted.
                let mut bound = f32::INFINITY;
                for (offset, code) in codes.chunks_exact(m).enumerate() {
                    let d = adc_u8(&padded, code);
                    if d > bound {
                        continue;
                    }
                    let id = index.ids[start + offset];
                    top.push(id, adc_similarity(f64::from(d)));
                    if let Some(floor) = top.floor() {
                        bound = (2.0 * (1.0 - floor)) as f32;
                    }
                }
                top
            };
            sharded(index.len(), row_bytes, &index.codes, k, scan)
        }
        _ => {
            let flat = table.as_slice();
            let scan = |start: usize, codes: &[u8]| {
                let mut top = TopK::new(k);
                for (offset, code) in codes.chunks_exact(row_bytes).enumerate() {
                    let mut d = 0f64;
                    for (i, c) in code.chunks_exact(width.bytes()).enumerate() {
                        d += flat[i * z + width.read(c) as usize];
                    }
                    let id = index.ids[start + offset];
                    top.push(id, adc_similarity(d));
                }
                top
            };
            sharded(index.len(), row_bytes, &index.codes, k, scan)
        }
    }
}

#[inline(always)]
fn adc_u8(table: &[[f32; 256]], code: &[u8]) -> f32 {
    let mut acc = [0f32; 4];
    let mut tc = table.chunks_exact(4);
    let mut cc = code.chunks_exact(4);
    for (t, c) in (&mut tc).zip(&mut cc) {
        acc[0] += t[0][c[0] as usize];
        acc[1] += t[1][c[1] as usize];
        acc[2] += t[2][c[2] as usize];
        acc[3] += t[3][c[3] as usize];
    }
    for (t, &c) in tc.remainder().iter().zip(cc.remainder()) {
        acc[0] += t[c as usize];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Run many queries in parallel; output order follows `queries`.
pub fn search_pq_batch(
    index: &GalleryIndex,
    queries: &Dataset,
    k: usize,
) -> Result<Vec<CandidateList>> {
    (0..queries.len())
        .into_par_iter()
        .map(|row| search_pq(index, queries.vector(row), k))
        .collect()
}

pub fn search_exact_batch<'a>(
    gallery: RawGallery<'a>,
    queries: &Dataset,
    k: usize,
    metric: Metric,
) -> Result<Vec<CandidateList>> {
    (0..queries.len())
        .into_par_iter()
        .map(|row| search_exact(gallery, queries.vector(row), k, metric))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{generate_synthetic, EmbeddingRecord, SyntheticConfig};
    use crate::quantizer::{decode, train_codebooks};

    fn gallery(n: usize, dim: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticConfig::new(n, 1, dim, 0.0, 0.0, seed)).unwrap()
    }

    #[test]
    fn candidate_size_examples() {
        assert_eq!(
            default_candidate_size(100_000, DEFAULT_CANDIDATE_CAP),
            1_000
        );
        assert_eq!(default_candidate_size(5_000_000, 50_000), 50_000);
        assert_eq!(default_candidate_size(80_000_000, 1_000), 1_000);
        assert_eq!(default_candidate_size(10, 50_000), 50);
        assert_eq!(default_candidate_size(100_001, 50_000), 1_001);
    }

    #[test]
    fn index_shape_and_raw_vectors() {
        let ds = gallery(300, 8, 1);
        let cb = train_codebooks(&ds, 4, 16, 10, 2).unwrap();
        let small = ds.prefix(3);
        let index = build_index(&small, &cb, true).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index.codes().len(), 3 * 4);
        let normalized = small.normalized().unwrap();
        assert_eq!(index.raw_vectors().unwrap(), normalized.vectors());
        assert!(build_index(&small, &cb, false)
            .unwrap()
            .raw_vectors()
            .is_none());
        assert_eq!(build_index(&small, &cb, true).unwrap(), index);
    }

    #[test]
    fn build_errors() {
        let ds = gallery(20, 8, 1);
        let cb = train_codebooks(&ds, 2, 4, 5, 2).unwrap();
        let other = gallery(20, 6, 1);
        assert!(matches!(
            build_index(&other, &cb, false),
            Err(Error::DimensionMismatch { .. })
        ));
        let zero = Dataset::from_records(
            8,
            vec![EmbeddingRecord {
                id: 0,
                subject: None,
                well_aligned: true,
                vector: vec![0.0; 8],
            }],
        )
        .unwrap();
        assert!(matches!(
            build_index(&zero, &cb, false),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn query_in_gallery_ranks_first() {
        let ds = gallery(50, 16, 4);
        let top = search_exact(&ds, ds.vector(17), 5, Metric::Cosine).unwrap();
        assert_eq!(top.entries()[0].id, 17);
        assert!((top.entries()[0].score - 1.0).abs() < 1e-12);
        let all = search_exact(&ds, ds.vector(3), 500, Metric::L2).unwrap();
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn exact_matches_full_sort_oracle() {
        let ds = generate_synthetic(&SyntheticConfig::new(100, 1, 8, 0.0, 0.0, 21)).unwrap();
        let query = generate_synthetic(&SyntheticConfig::new(1, 1, 8, 0.0, 0.0, 77)).unwrap();
        let q = query.vector(0);
        let mut oracle: Vec<(f64, u64)> = ds
            .iter()
            .map(|r| {
                let dot: f64 = q
                    .iter()
                    .zip(r.vector)
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum();
                let na: f64 = q.iter().map(|a| f64::from(*a).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = r
                    .vector
                    .iter()
                    .map(|a| f64::from(*a).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (dot / (na * nb), r.id)
            })
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let got = search_exact(&ds, q, 5, Metric::Cosine).unwrap();
        let want: Vec<u64> = oracle.iter().take(5).map(|p| p.1).collect();
        assert_eq!(got.ids(), want);
    }

    #[test]
    fn l1_scores_are_negated_distances() {
        let ds = Dataset::from_records(
            2,
            vec![
                EmbeddingRecord {
                    id: 1,
                    subject: None,
                    well_aligned: true,
                    vector: vec![1.0, 1.0],
                },
                EmbeddingRecord {
                    id: 2,
                    subject: None,
                    well_aligned: true,
                    vector: vec![0.0, 3.0],
                },
            ],
        )
        .unwrap();
        let out = search_exact(&ds, &[0.0, 0.0], 2, Metric::L1).unwrap();
        assert_eq!(
            out.entries(),
            &[
                Candidate { id: 1, score: -2.0 },
                Candidate { id: 2, score: -3.0 }
            ]
        );
        assert!(search_exact(&ds, &[0.0, 0.0], 0, Metric::L1).is_err());
    }

    #[test]
    fn decoded_code_is_found_at_similarity_one() {
        let ds = gallery(400, 16, 8);
        let cb = train_codebooks(&ds, 4, 32, 15, 1).unwrap();
        let index = build_index(&ds, &cb, false).unwrap();
        let query = decode(&cb, &index.code(17)).unwrap();
        let top = search_pq(&index, &query, 3).unwrap();
        assert_eq!(top.entries()[0].score, 1.0);
        // Other gallery items may share the same code; 17 must be among the exact hits.
        let exact: Vec<u64> = top
            .entries()
            .iter()
            .filter(|c| c.score == 1.0)
            .map(|c| c.id)
            .collect();
        assert!(exact.contains(&17) || exact.len() == 3);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert_eq!("L2".parse::<Metric>().unwrap(), Metric::L2);
        assert!("hamming".parse::<Metric>().is_err());
    }
}
