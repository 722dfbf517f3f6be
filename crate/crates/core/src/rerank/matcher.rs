//! Slow matchers used to re-score a candidate list.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::embedding::Dataset;
use crate::error::{invalid, Error, Result};
use crate::filter::{cosine_similarity, GalleryIndex};
use crate::wire::Reader;

/// A query as seen by a matcher: its id (for matchers keyed on ids) and vector.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRef<'a> {
    pub id: u64,
    pub vector: &'a [f32],
}

/// Second-opinion matcher addressed by gallery id. Higher scores mean more
/// similar; the same inputs must always produce the same score.
pub trait SlowMatcher: Sync {
    fn score(&self, probe: ProbeRef<'_>, gallery_id: u64) -> Result<f64>;

    /// Whether probes may be scored from several threads at once.
    fn supports_concurrent_calls(&self) -> bool {
        true
    }
}

impl<T: SlowMatcher + ?Sized> SlowMatcher for &T {
    fn score(&self, probe: ProbeRef<'_>, gallery_id: u64) -> Result<f64> {
        (**self).score(probe, gallery_id)
    }

    fn supports_concurrent_calls(&self) -> bool {
        (**self).supports_concurrent_calls()
    }
}

/// Full-precision cosine plus a seeded per-(probe, gallery) perturbation,
/// Gaussian by default or Student-t with [`ReferenceSlowMatcher::with_tail_dof`].
///
/// [`ReferenceSlowMatcher::new`] scores the index's own raw vectors against
/// the probe vector. [`ReferenceSlowMatcher::with_view`] scores a separately
/// enrolled embedding of the same images, looked up by id, which models a
/// matcher whose errors do not coincide with the fast filter's.
#[derive(Debug)]
pub struct ReferenceSlowMatcher<'a> {
    dim: usize,
    parts: Vec<&'a [f32]>,
    rows: HashMap<u64, (usize, usize)>,
    probe_view: Option<(&'a [f32], HashMap<u64, usize>)>,
    perturbation: f64,
    tail: Option<StudentT<f64>>,
    seed: u64,
}

fn row_map(ids: &[u64]) -> HashMap<u64, usize> {
    ids.iter().enumerate().map(|(r, &id)| (id, r)).collect()
}

fn check_perturbation(perturbation: f64) -> Result<()> {
    if !(perturbation >= 0.0 && perturbation.is_finite()) {
        return Err(invalid(
            "perturbation scale must be a nonnegative finite number",
        ));
    }
    Ok(())
}

fn check_tail_dof(dof: f64) -> Result<StudentT<f64>> {
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(invalid(
            "tail degrees of freedom must be a positive finite number",
        ));
    }
    StudentT::new(dof).map_err(|e| invalid(e.to_string()))
}

impl<'a> ReferenceSlowMatcher<'a> {
    pub fn new(index: &'a GalleryIndex, perturbation: f64, seed: u64) -> Result<Self> {
        let raw = index.raw_vectors().ok_or(Error::MissingRawVectors)?;
        check_perturbation(perturbation)?;
        Ok(Self {
            dim: index.dim(),
            parts: vec![raw],
            rows: index
                .ids()
                .iter()
                .enumerate()
                .map(|(r, &id)| (id, (0, r)))
                .collect(),
            probe_view: None,
            perturbation,
            tail: None,
            seed,
        })
    }

    /// Score `gallery` rows against `probes` rows matched by id; the probe
    /// vector passed to [`SlowMatcher::score`] is ignored.
    pub fn with_view(
        gallery: &'a Dataset,
        probes: &'a Dataset,
        perturbation: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::with_view_parts(&[(gallery, gallery.len())], probes, perturbation, seed)
    }

    /// [`ReferenceSlowMatcher::with_view`] over the leading `rows` rows of
    /// each part, without copying them into one gallery.
    pub fn with_view_parts(
        parts: &[(&'a Dataset, usize)],
        probes: &'a Dataset,
        perturbation: f64,
        seed: u64,
    ) -> Result<Self> {
        check_perturbation(perturbation)?;
        let dim = probes.dim();
        let mut rows = HashMap::new();
        for (p, &(ds, n)) in parts.iter().enumerate() {
            if ds.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ds.dim(),
                });
            }
            if n > ds.len() {
                return Err(invalid(format!(
                    "{n} rows requested from a part of {}",
                    ds.len()
                )));
            }
            for (r, &id) in ds.ids()[..n].iter().enumerate() {
                if rows.insert(id, (p, r)).is_some() {
                    return Err(Error::DuplicateId(id));
                }
            }
        }
        Ok(Self {
            dim,
            parts: parts
                .iter()
                .map(|(ds, n)| &ds.vectors()[..n * dim])
                .collect(),
            rows,
            probe_view: Some((probes.vectors(), row_map(probes.ids()))),
            perturbation,
            tail: None,
            seed,
        })
    }

    /// Draw the perturbation from a Student-t with `dof` degrees of freedom,
    /// giving occasional large score errors; `None` restores the Gaussian.
    pub fn with_tail_dof(mut self, dof: Option<f64>) -> Result<Self> {
        self.tail = dof.map(check_tail_dof).transpose()?;
        Ok(self)
    }

    pub fn perturbation(&self) -> f64 {
        self.perturbation
    }

    /// Unit-scale draw keyed on `(seed, probe, gallery)`.
    pub fn noise(&self, probe_id: u64, gallery_id: u64) -> f64 {
        let key = mix64(
            self.seed ^ mix64(probe_id ^ mix64(gallery_id.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        match &self.tail {
            Some(t) => t.sample(&mut rng),
            None => StandardNormal.sample(&mut rng),
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SlowMatcher for ReferenceSlowMatcher<'_> {
    fn score(&self, probe: ProbeRef<'_>, gallery_id: u64) -> Result<f64> {
        let &(part, row) = self
            .rows
            .get(&gallery_id)
            .ok_or(Error::UnknownId(gallery_id))?;
        let dim = self.dim;
        let query = match &self.probe_view {
            Some((vectors, rows)) => {
                let &p = rows.get(&probe.id).ok_or(Error::UnknownId(probe.id))?;
                &vectors[p * dim..(p + 1) * dim]
            }
            None => probe.vector,
        };
        if query.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: query.len(),
            });
        }
        let cos = cosine_similarity(query, &self.parts[part][row * dim..(row + 1) * dim]);
        if self.perturbation == 0.0 {
            return Ok(cos);
        }
        Ok(cos + self.perturbation * self.noise(probe.id, gallery_id))
    }
}

pub const SCORE_FILE_MAGIC: &[u8; 4] = b"SMAT";
const SCORE_RECORD_LEN: usize = 8 + 8 + 4;

/// One precomputed external-matcher score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub probe_id: u64,
    pub gallery_id: u64,
    pub score: f32,
}

/// `"SMAT"` followed by 20-byte little-endian records
/// `{probe_id: u64, gallery_id: u64, score: f32}` until end of file.
pub fn encode_score_file(records: &[ScoreRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + records.len() * SCORE_RECORD_LEN);
    out.extend_from_slice(SCORE_FILE_MAGIC);
    for r in records {
        out.extend_from_slice(&r.probe_id.to_le_bytes());
        out.extend_from_slice(&r.gallery_id.to_le_bytes());
        out.extend_from_slice(&r.score.to_le_bytes());
    }
    out
}

pub fn decode_score_file(bytes: &[u8]) -> Result<Vec<ScoreRecord>> {
    let mut reader = Reader::new(bytes);
    reader.magic(SCORE_FILE_MAGIC, "SMAT")?;
    let body = reader.remaining();
    if !body.is_multiple_of(SCORE_RECORD_LEN) {
        let whole = body / SCORE_RECORD_LEN + 1;
        return Err(Error::Truncated {
            expected: (4 + whole * SCORE_RECORD_LEN) as u64,
            found: bytes.len() as u64,
        });
    }
    let mut records = Vec::with_capacity(body / SCORE_RECORD_LEN);
    while reader.remaining() > 0 {
        let probe_id = reader.u64()?;
        let gallery_id = reader.u64()?;
        let score = reader.f32()?;
        if !score.is_finite() {
            return Err(invalid(format!(
                "non-finite score for probe {probe_id}, gallery {gallery_id}"
            )));
        }
        records.push(ScoreRecord {
            probe_id,
            gallery_id,
            score,
        });
    }
    Ok(records)
}

/// Scores looked up from an offline `SMAT` file.
#[derive(Debug, Clone, Default)]
pub struct ScoreTableMatcher {
    scores: HashMap<(u64, u64), f32>,
}

impl ScoreTableMatcher {
    pub fn from_records(records: Vec<ScoreRecord>) -> Result<Self> {
        let mut scores = HashMap::with_capacity(records.len());
        for r in records {
            if scores.insert((r.probe_id, r.gallery_id), r.score).is_some() {
                return Err(invalid(format!(
                    "duplicate score for probe {}, gallery {}",
                    r.probe_id, r.gallery_id
                )));
            }
        }
        Ok(Self { scores })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_records(decode_score_file(bytes)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl SlowMatcher for ScoreTableMatcher {
    fn score(&self, probe: ProbeRef<'_>, gallery_id: u64) -> Result<f64> {
        self.scores
            .get(&(probe.id, gallery_id))
            .map(|&s| f64::from(s))
            .ok_or_else(|| {
                Error::Manifest(format!(
                    "no external score for probe {}, gallery {gallery_id}",
                    probe.id
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{generate_synthetic, SyntheticConfig};
    use crate::filter::build_index;
    use crate::quantizer::train_codebooks;

    fn index(keep_raw: bool) -> GalleryIndex {
        let ds = generate_synthetic(&SyntheticConfig::new(40, 1, 8, 0.0, 0.0, 5)).unwrap();
        let cb = train_codebooks(&ds, 2, 8, 5, 1).unwrap();
        build_index(&ds, &cb, keep_raw).unwrap()
    }

    #[test]
    fn reference_matcher_requires_raw_vectors() {
        let idx = index(false);
        assert!(matches!(
            ReferenceSlowMatcher::new(&idx, 0.1, 1),
            Err(Error::MissingRawVectors)
        ));
    }

    #[test]
    fn zero_perturbation_is_exact_cosine() {
        let idx = index(true);
        let m = ReferenceSlowMatcher::new(&idx, 0.0, 1).unwrap();
        let v = &idx.raw_vectors().unwrap()[8 * 3..8 * 4];
        let probe = ProbeRef { id: 999, vector: v };
        assert!((m.score(probe, idx.ids()[3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            m.score(probe, 12345),
            Err(Error::UnknownId(12345))
        ));
    }

    #[test]
    fn perturbation_is_deterministic_and_pair_specific() {
        let idx = index(true);
        let a = ReferenceSlowMatcher::new(&idx, 0.2, 7).unwrap();
        let b = ReferenceSlowMatcher::new(&idx, 0.2, 7).unwrap();
        let c = ReferenceSlowMatcher::new(&idx, 0.2, 8).unwrap();
        let probe = ProbeRef {
            id: 1,
            vector: &idx.raw_vectors().unwrap()[..8],
        };
        let sa = a.score(probe, 5).unwrap();
        assert_eq!(sa, b.score(probe, 5).unwrap());
        assert_ne!(sa, c.score(probe, 5).unwrap());
        assert_ne!(a.noise(1, 5), a.noise(5, 1));
    }

    #[test]
    fn heavy_tail_draws_differ_and_validate() {
        let idx = index(true);
        let gauss = ReferenceSlowMatcher::new(&idx, 0.1, 3).unwrap();
        let heavy = ReferenceSlowMatcher::new(&idx, 0.1, 3)
            .unwrap()
            .with_tail_dof(Some(3.0))
            .unwrap();
        let n = 4000u64;
        let big = |m: &ReferenceSlowMatcher| (0..n).filter(|&g| m.noise(1, g).abs() > 4.0).count();
        // P(|N(0,1)| > 4) is about 6e-5; P(|t3| > 4) is about 0.028.
        assert!(big(&gauss) <= 2);
        assert!(big(&heavy) > 40);
        assert_eq!(heavy.noise(2, 9), heavy.noise(2, 9));
        let back = heavy.with_tail_dof(None).unwrap();
        assert_eq!(back.noise(1, 1), gauss.noise(1, 1));
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(ReferenceSlowMatcher::new(&idx, 0.1, 3)
                .unwrap()
                .with_tail_dof(Some(bad))
                .is_err());
        }
    }

    #[test]
    fn second_view_scores_by_id() {
        let g = generate_synthetic(&SyntheticConfig::new(5, 1, 8, 0.0, 0.0, 1)).unwrap();
        let p = generate_synthetic(&SyntheticConfig::new(5, 1, 8, 0.0, 0.0, 1).with_ids_from(100))
            .unwrap();
        let m = ReferenceSlowMatcher::with_view(&g, &p, 0.0, 1).unwrap();
        // Probe 102 shares its center with gallery row 2; the passed vector is unused.
        let probe = ProbeRef {
            id: 102,
            vector: &[],
        };
        assert!((m.score(probe, 2).unwrap() - 1.0).abs() < 1e-6);
        assert!(m.score(probe, 3).unwrap() < 0.99);
        assert!(matches!(
            m.score(ProbeRef { id: 7, vector: &[] }, 2),
            Err(Error::UnknownId(7))
        ));
        let wide = generate_synthetic(&SyntheticConfig::new(5, 1, 9, 0.0, 0.0, 1)).unwrap();
        assert!(ReferenceSlowMatcher::with_view(&g, &wide, 0.0, 1).is_err());
    }

    #[test]
    fn view_parts_cover_leading_rows_only() {
        let a = generate_synthetic(&SyntheticConfig::new(4, 1, 8, 0.0, 0.0, 1)).unwrap();
        let b = generate_synthetic(&SyntheticConfig::new(6, 1, 8, 0.0, 0.0, 2).with_ids_from(10))
            .unwrap();
        let m = ReferenceSlowMatcher::with_view_parts(&[(&a, 4), (&b, 2)], &b, 0.0, 1).unwrap();
        let probe = ProbeRef {
            id: 11,
            vector: &[],
        };
        assert!((m.score(probe, 11).unwrap() - 1.0).abs() < 1e-6);
        assert!(m.score(probe, 3).is_ok());
        assert!(matches!(m.score(probe, 12), Err(Error::UnknownId(12))));
        assert!(ReferenceSlowMatcher::with_view_parts(&[(&a, 5)], &b, 0.0, 1).is_err());
        assert!(matches!(
            ReferenceSlowMatcher::with_view_parts(&[(&a, 4), (&a, 1)], &b, 0.0, 1),
            Err(Error::DuplicateId(0))
        ));
    }

    #[test]
    fn score_file_round_trip_and_lookup() {
        let records = vec![
            ScoreRecord {
                probe_id: 1,
                gallery_id: 10,
                score: 0.5,
            },
            ScoreRecord {
                probe_id: 1,
                gallery_id: 11,
                score: -2.0,
            },
        ];
        let bytes = encode_score_file(&records);
        assert_eq!(bytes.len(), 4 + 2 * 20);
        assert_eq!(decode_score_file(&bytes).unwrap(), records);
        let m = ScoreTableMatcher::from_bytes(&bytes).unwrap();
        let probe = ProbeRef { id: 1, vector: &[] };
        assert_eq!(m.score(probe, 11).unwrap(), -2.0);
        assert!(m.score(probe, 12).is_err());
    }

    #[test]
    fn score_file_errors() {
        let bytes = encode_score_file(&[ScoreRecord {
            probe_id: 1,
            gallery_id: 2,
            score: 1.0,
        }]);
        assert!(matches!(
            decode_score_file(&bytes[..10]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_score_file(b"SMA"),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_score_file(b"XMAT"),
            Err(Error::BadMagic { .. })
        ));
        let dup = [bytes.clone(), bytes[4..].to_vec()].concat();
        assert!(ScoreTableMatcher::from_bytes(&dup).is_err());
        let nan = encode_score_file(&[ScoreRecord {
            probe_id: 1,
            gallery_id: 2,
            score: f32::NAN,
        }]);
        assert!(decode_score_file(&nan).is_err());
    }
}
