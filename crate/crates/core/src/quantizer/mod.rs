//! Product quantization: per-sub-space k-means codebooks, compact codes, and
//! asymmetric distance computation (ADC) through per-query lookup tables.
//!
//! A `dim`-dimensional vector is split into `m` contiguous sub-vectors of
//! length `dim / m`. Sub-space `i` has its own codebook of `z` centroids, so a
//! vector compresses to `m` indices of `log2(z)` bits each.

mod io;
pub mod kmeans;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::Dataset;
use crate::error::{invalid, Error, Result};

pub use io::{decode_codebook, encode_codebook, load_codebook, save_codebook, CODEBOOK_MAGIC};
pub use kmeans::KMeansFit;

pub const DEFAULT_M: usize = 64;
pub const DEFAULT_Z: usize = 256;

/// `m` sub-codebooks of `z` centroids each.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    m: usize,
    z: usize,
    dim: usize,
    /// `m × z × (dim / m)`, row-major.
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn new(m: usize, z: usize, dim: usize, centroids: Vec<f32>) -> Result<Self> {
        check_shape(dim, m, z)?;
        if centroids.len() != dim * z {
            return Err(Error::DimensionMismatch {
                expected: dim * z,
                found: centroids.len(),
            });
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(invalid("codebook contains a non-finite centroid"));
        }
        Ok(Self {
            m,
            z,
            dim,
            centroids,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.m
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Centroid `j` of sub-space `i`.
    pub fn centroid(&self, i: usize, j: usize) -> &[f32] {
        let s = self.sub_dim();
        let start = (i * self.z + j) * s;
        &self.centroids[start..start + s]
    }

    fn sub_codebook(&self, i: usize) -> &[f32] {
        let len = self.z * self.sub_dim();
        &self.centroids[i * len..(i + 1) * len]
    }

    /// Bytes used to store one code index.
    pub fn code_width(&self) -> CodeWidth {
        CodeWidth::for_z(self.z)
    }

    /// Bits of information per encoded vector, `m · log2(z)`.
    pub fn code_bits(&self) -> f64 {
        self.m as f64 * (self.z as f64).log2()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    /// Nearest centroid index in every sub-space, written into `out` (length `m`).
    pub(crate) fn encode_indices(&self, vector: &[f32], out: &mut [u32]) {
        let s = self.sub_dim();
        for (i, (sub, slot)) in vector.chunks_exact(s).zip(out.iter_mut()).enumerate() {
            let mut best = (0u32, f32::INFINITY);
            for (j, c) in self.sub_codebook(i).chunks_exact(s).enumerate() {
                let d: f32 = sub.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (j as u32, d);
                }
            }
            *slot = best.0;
        }
    }
}

fn check_shape(dim: usize, m: usize, z: usize) -> Result<()> {
    if m == 0 || z == 0 || dim == 0 {
        return Err(invalid("m, z and dim must all be positive"));
    }
    if !dim.is_multiple_of(m) {
        return Err(invalid(format!(
            "dimension {dim} is not divisible by m = {m}"
        )));
    }
    if z > u32::MAX as usize {
        return Err(invalid("z exceeds u32 range"));
    }
    Ok(())
}

/// Storage width of one packed code index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeWidth {
    U8,
    U16,
    U32,
}

impl CodeWidth {
    pub fn for_z(z: usize) -> Self {
        if z <= 1 << 8 {
            CodeWidth::U8
        } else if z <= 1 << 16 {
            CodeWidth::U16
        } else {
            CodeWidth::U32
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            CodeWidth::U8 => 1,
            CodeWidth::U16 => 2,
            CodeWidth::U32 => 4,
        }
    }

    pub(crate) fn write(self, index: u32, out: &mut [u8]) {
        match self {
            CodeWidth::U8 => out[0] = index as u8,
            CodeWidth::U16 => out.copy_from_slice(&(index as u16).to_le_bytes()),
            CodeWidth::U32 => out.copy_from_slice(&index.to_le_bytes()),
        }
    }

    pub(crate) fn read(self, bytes: &[u8]) -> u32 {
        match self {
            CodeWidth::U8 => u32::from(bytes[0]),
            CodeWidth::U16 => u32::from(u16::from_le_bytes([bytes[0], bytes[1]])),
            CodeWidth::U32 => u32::from_le_bytes(bytes.try_into().unwrap()),
        }
    }
}

/// The quantized form of one vector: one centroid index per sub-space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PqCode(pub Vec<u32>);

impl PqCode {
    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn pack(&self, width: CodeWidth) -> Vec<u8> {
        let w = width.bytes();
        let mut out = vec![0u8; self.0.len() * w];
        for (slot, &idx) in out.chunks_exact_mut(w).zip(&self.0) {
            width.write(idx, slot);
        }
        out
    }

    pub fn unpack(bytes: &[u8], width: CodeWidth) -> Self {
        PqCode(
            bytes
                .chunks_exact(width.bytes())
                .map(|c| width.read(c))
                .collect(),
        )
    }
}

/// Squared Euclidean distances from each query sub-vector to every
/// sub-centroid, laid out `m × z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    m: usize,
    z: usize,
    query_dim: usize,
    table: Vec<f64>,
}

impl DistanceTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.z + j]
    }

    /// Flat `m × z` view used by the gallery scan.
    pub fn as_slice(&self) -> &[f64] {
        &self.table
    }
}

/// Training knobs for [`train_codebooks_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub m: usize,
    pub z: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(m: usize, z: usize, max_iters: usize, seed: u64) -> Self {
        Self {
            m,
            z,
            max_iters,
            tolerance: kmeans::DEFAULT_TOLERANCE,
            seed,
        }
    }
}

/// Train `m` independent k-means codebooks of `z` centroids.
pub fn train_codebooks(
    vectors: &Dataset,
    m: usize,
    z: usize,
    max_iters: usize,
    seed: u64,
) -> Result<PqCodebook> {
    train_codebooks_with(vectors, &TrainParams::new(m, z, max_iters, seed)).map(|(cb, _)| cb)
}

/// As [`train_codebooks`], also returning the per-sub-space k-means traces.
///
/// Sub-spaces train in parallel; sub-space `i` draws from ChaCha stream `i`
/// of `seed`, so results do not depend on the thread count.
pub fn train_codebooks_with(
    vectors: &Dataset,
    params: &TrainParams,
) -> Result<(PqCodebook, Vec<KMeansFit>)> {
    let dim = vectors.dim();
    check_shape(dim, params.m, params.z)?;
    if vectors.len() < params.z {
        return Err(Error::InsufficientData(format!(
            "{} training vectors for z = {}",
            vectors.len(),
            params.z
        )));
    }
    let s = dim / params.m;
    let fits: Vec<KMeansFit> = (0..params.m)
        .into_par_iter()
        .map(|i| {
            let data = sub_space(vectors, i, s);
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let init = kmeans::kmeans_plus_plus(&data, s, params.z, &mut rng);
            kmeans::lloyd(&data, s, init, params.max_iters, params.tolerance)
        })
        .collect();

    let centroids = fits
        .iter()
        .flat_map(|f| f.centroids.iter().map(|&c| c as f32))
        .collect();
    let codebook = PqCodebook::new(params.m, params.z, dim, centroids)?;
    Ok((codebook, fits))
}

/// Sub-vectors of sub-space `i` for every row, widened to f64.
pub fn sub_space(vectors: &Dataset, i: usize, sub_dim: usize) -> Vec<f64> {
    vectors
        .vectors()
        .chunks_exact(vectors.dim())
        .flat_map(|row| {
            row[i * sub_dim..(i + 1) * sub_dim]
                .iter()
                .map(|&v| f64::from(v))
        })
        .collect()
}

/// Quantize one vector. Ties go to the smallest centroid index.
pub fn encode(codebook: &PqCodebook, vector: &[f32]) -> Result<PqCode> {
    codebook.check_dim(vector.len())?;
    let mut out = vec![0u32; codebook.m];
    codebook.encode_indices(vector, &mut out);
    Ok(PqCode(out))
}

/// Reconstruct the concatenation of the indexed sub-centroids.
pub fn decode(codebook: &PqCodebook, code: &PqCode) -> Result<Vec<f32>> {
    if code.0.len() != codebook.m {
        return Err(Error::LengthMismatch(codebook.m, code.0.len()));
    }
    let mut out = Vec::with_capacity(codebook.dim);
    for (i, &j) in code.0.iter().enumerate() {
        if j as usize >= codebook.z {
            return Err(Error::CodeOutOfRange {
                index: j,
                z: codebook.z,
            });
        }
        out.extend_from_slice(codebook.centroid(i, j as usize));
    }
    Ok(out)
}

/// Precompute `||y^i − c^i_j||²` for every sub-space `i` and centroid `j`.
pub fn build_distance_table(codebook: &PqCodebook, query: &[f32]) -> Result<DistanceTable> {
    codebook.check_dim(query.len())?;
    let s = codebook.sub_dim();
    let mut table = Vec::with_capacity(codebook.m * codebook.z);
    for (i, sub) in query.chunks_exact(s).enumerate() {
        for c in codebook.sub_codebook(i).chunks_exact(s) {
            let d: f64 = sub
                .iter()
                .zip(c)
                .map(|(&a, &b)| {
                    let diff = f64::from(a) - f64::from(b);
                    diff * diff
                })
                .sum();
            table.push(d);
        }
    }
    Ok(DistanceTable {
        m: codebook.m,
        z: codebook.z,
        query_dim: codebook.dim,
        table,
    })
}

/// Asymmetric squared distance: `Σ_i table[i][code[i]]`.
pub fn adc_distance(table: &DistanceTable, code: &PqCode) -> Result<f64> {
    if code.0.len() != table.m {
        return Err(Error::LengthMismatch(table.m, code.0.len()));
    }
    let mut acc = 0f64;
    for (i, &j) in code.0.iter().enumerate() {
        if j as usize >= table.z {
            return Err(Error::CodeOutOfRange {
                index: j,
                z: table.z,
            });
        }
        acc += table.table[i * table.z + j as usize];
    }
    Ok(acc)
}
