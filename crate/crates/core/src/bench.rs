//! Scalability and candidate-size experiments on synthetic galleries.
//!
//! A benchmark gallery holds `mates_per_subject` images of each of
//! `num_subjects` enrolled subjects followed by a prefix of one shared
//! distractor set; one further image per subject is its probe. Distractor
//! sets for different sizes are nested, and the codebook is trained once on
//! a separate sample, so adding distractors never changes an existing code.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::embedding::{generate_synthetic, Dataset, SyntheticConfig};
use crate::error::{invalid, Error, Result};
use crate::eval::{average_precision, ProbeResult};
use crate::filter::{
    default_candidate_size, search_exact, search_pq, CandidateList, GalleryIndex, Metric,
    DEFAULT_CANDIDATE_CAP,
};
use crate::quantizer::{train_codebooks, CodeWidth, PqCodebook};
use crate::rerank::{
    cascade_search, rerank, slow_scores, FusionStrategy, ProbeRef, ReferenceSlowMatcher,
};

const DISTRACTOR_ID_BASE: u64 = 1 << 40;
const TRAIN_ID_BASE: u64 = 1 << 41;
const DISTRACTOR_STREAM: u64 = 0x6469_7374;
const TRAIN_STREAM: u64 = 0x7472_6169;
const SLOW_VIEW_STREAM: u64 = 0x736c_6f77;

/// A search method measured by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchStrategy {
    /// Exhaustive float cosine scan.
    Exact,
    /// PQ filter alone.
    FastOnly,
    Cascade(FusionStrategy),
}

impl BenchStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchStrategy::Exact => "exact",
            BenchStrategy::FastOnly => "fast-only",
            BenchStrategy::Cascade(s) => s.as_str(),
        }
    }

    fn uses_slow_matcher(self) -> bool {
        matches!(self, BenchStrategy::Cascade(_))
    }
}

impl fmt::Display for BenchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(BenchStrategy::Exact),
            "fast-only" | "fast_only" | "pq" => Ok(BenchStrategy::FastOnly),
            other => other.parse().map(BenchStrategy::Cascade),
        }
    }
}

impl Serialize for BenchStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    /// Distractor counts; the gallery size is this plus the enrolled mates.
    pub distractor_counts: Vec<usize>,
    /// Candidate list sizes. Empty selects `default_candidate_size` per gallery.
    pub candidate_sizes: Vec<usize>,
    pub dim: usize,
    pub m: usize,
    pub z: usize,
    pub num_subjects: usize,
    pub mates_per_subject: usize,
    pub within_class_noise: f64,
    pub poorly_aligned_fraction: f64,
    pub train_size: usize,
    pub kmeans_iters: usize,
    pub data_seed: u64,
    pub codebook_seed: u64,
    pub matcher_seed: u64,
    /// Standard deviation of the reference slow matcher's score noise.
    pub perturbation: f64,
    /// Student-t degrees of freedom for that noise; `None` is Gaussian.
    pub perturbation_tail_dof: Option<f64>,
    /// Within-class noise of a second, independently generated embedding
    /// that the slow matcher scores. `None` makes the slow matcher score
    /// the indexed vectors themselves.
    pub slow_view_noise: Option<f64>,
    pub strategies: Vec<BenchStrategy>,
    pub threads: usize,
    /// Timed passes after the untimed warm-up; 0 disables timing.
    pub repetitions: usize,
    pub memory_limit_bytes: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            distractor_counts: vec![10_000, 100_000, 1_000_000],
            candidate_sizes: Vec::new(),
            dim: 320,
            m: 64,
            z: 256,
            num_subjects: 1_000,
            mates_per_subject: 3,
            within_class_noise: 0.08,
            poorly_aligned_fraction: 0.1,
            train_size: 20_000,
            kmeans_iters: 25,
            data_seed: 1,
            codebook_seed: 2,
            matcher_seed: 3,
            perturbation: 0.022,
            perturbation_tail_dof: Some(3.0),
            slow_view_noise: Some(0.095),
            strategies: vec![
                BenchStrategy::Exact,
                BenchStrategy::FastOnly,
                BenchStrategy::Cascade(FusionStrategy::DfThenCots),
                BenchStrategy::Cascade(FusionStrategy::DfThenCotsOnly),
                BenchStrategy::Cascade(FusionStrategy::DfThenCotsRank),
            ],
            threads: 1,
            repetitions: 3,
            memory_limit_bytes: 4 << 30,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("m", self.m),
            ("z", self.z),
            ("num_subjects", self.num_subjects),
            ("mates_per_subject", self.mates_per_subject),
            ("train_size", self.train_size),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("{name} must be positive")));
        }
        if self.distractor_counts.is_empty() {
            return Err(invalid("at least one distractor count is required"));
        }
        if self.candidate_sizes.iter().any(|&k| k < 2) {
            return Err(invalid("candidate sizes must be at least 2"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("at least one strategy is required"));
        }
        if self.repetitions != 0 && self.repetitions < 3 {
            return Err(invalid("timing needs at least 3 repetitions"));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(invalid("perturbation must be a nonnegative finite number"));
        }
        if let Some(dof) = self.perturbation_tail_dof {
            if !(dof > 0.0 && dof.is_finite()) {
                return Err(invalid(
                    "perturbation_tail_dof must be a positive finite number",
                ));
            }
        }
        if let Some(noise) = self.slow_view_noise {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(invalid(
                    "slow_view_noise must be a nonnegative finite number",
                ));
            }
        }
        if self.train_size < self.z {
            return Err(invalid("train_size must be at least z"));
        }
        Ok(())
    }

    /// Rough peak memory: the distractor pools, one gallery copy, its codes,
    /// the slow matcher's id map, and the training sample.
    pub fn estimated_bytes(&self) -> u64 {
        let max_d = self.distractor_counts.iter().copied().max().unwrap_or(0) as u64;
        let enrolled = (self.num_subjects * (self.mates_per_subject + 1)) as u64;
        let row = self.dim as u64 * 4;
        let record = row + 24;
        let code = (self.m * CodeWidth::for_z(self.z).bytes()) as u64;
        let gallery = max_d + enrolled;
        let views = if self.slow_view_noise.is_some() { 2 } else { 1 };
        views * (max_d + enrolled) * record
            + gallery * (record + code + 48)
            + self.train_size as u64 * row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub distractors: usize,
    pub gallery_size: usize,
    pub k: usize,
    pub strategy: BenchStrategy,
    pub map: f64,
    pub mean_search_seconds: Option<f64>,
    pub min_search_seconds: Option<f64>,
    pub enrollment_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgmaxK {
    pub distractors: usize,
    pub gallery_size: usize,
    pub strategy: BenchStrategy,
    pub k: usize,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub kind: &'static str,
    pub config: BenchConfig,
    pub codebook_training_seconds: f64,
    pub cells: Vec<BenchCell>,
    /// Best candidate size per gallery and strategy; ties go to the smaller k.
    pub argmax_k: Vec<ArgmaxK>,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for cell in &self.cells {
            w.serialize(cell).map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn cell(
        &self,
        gallery_size: usize,
        k: usize,
        strategy: BenchStrategy,
    ) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.gallery_size == gallery_size && c.k == k && c.strategy == strategy)
    }

    /// Cells for one strategy, ordered by gallery size then k.
    pub fn series(&self, strategy: BenchStrategy) -> Vec<&BenchCell> {
        let mut v: Vec<&BenchCell> = self
            .cells
            .iter()
            .filter(|c| c.strategy == strategy)
            .collect();
        v.sort_by_key(|c| (c.gallery_size, c.k));
        v
    }
}

/// Probes, mates and distractors as seen by a second-view slow matcher.
#[derive(Debug, Clone)]
pub struct SlowView {
    pub probes: Dataset,
    pub mates: Dataset,
    pub distractors: Dataset,
}

/// Probe, mate and distractor sets of one embedding. Per-subject random
/// streams make distractor pools of different sizes share their prefixes.
fn generate_view(cfg: &BenchConfig, noise: f64, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let per = cfg.mates_per_subject + 1;
    let enrolled = generate_synthetic(&SyntheticConfig::new(
        cfg.num_subjects,
        per,
        cfg.dim,
        noise,
        cfg.poorly_aligned_fraction,
        seed,
    ))?;
    let probe_rows: Vec<usize> = (0..enrolled.len()).step_by(per).collect();
    let mate_rows: Vec<usize> = (0..enrolled.len()).filter(|r| r % per != 0).collect();
    let probes = enrolled.select(&probe_rows)?;
    let mates = enrolled.select(&mate_rows)?;
    drop(enrolled);

    let max_d = cfg.distractor_counts.iter().copied().max().unwrap_or(0);
    let distractors = if max_d == 0 {
        Dataset::empty(cfg.dim)?
    } else {
        generate_synthetic(
            &SyntheticConfig::new(
                max_d,
                1,
                cfg.dim,
                noise,
                cfg.poorly_aligned_fraction,
                seed ^ DISTRACTOR_STREAM,
            )
            .with_ids_from(DISTRACTOR_ID_BASE)
            .with_prefix("d"),
        )?
    };
    Ok((probes, mates, distractors))
}

/// Enrolled mates, probes, the largest distractor pool, and a trained codebook.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub probes: Dataset,
    pub mates: Dataset,
    pub distractors: Dataset,
    /// Second embedding of the same records, present with `slow_view_noise`.
    pub slow_view: Option<SlowView>,
    pub codebook: PqCodebook,
    pub codebook_training_seconds: f64,
}

impl BenchData {
    pub fn generate(cfg: &BenchConfig) -> Result<Self> {
        cfg.validate()?;
        let needed = cfg.estimated_bytes();
        if needed > cfg.memory_limit_bytes {
            return Err(Error::MemoryCeiling {
                needed,
                limit: cfg.memory_limit_bytes,
            });
        }
        let (probes, mates, distractors) =
            generate_view(cfg, cfg.within_class_noise, cfg.data_seed)?;
        let slow_view = match cfg.slow_view_noise {
            Some(noise) => {
                let (probes, mates, distractors) =
                    generate_view(cfg, noise, cfg.data_seed ^ SLOW_VIEW_STREAM)?;
                Some(SlowView {
                    probes,
                    mates,
                    distractors,
                })
            }
            None => None,
        };
        let train = generate_synthetic(
            &SyntheticConfig::new(
                cfg.train_size,
                1,
                cfg.dim,
                cfg.within_class_noise,
                cfg.poorly_aligned_fraction,
                cfg.data_seed ^ TRAIN_STREAM,
            )
            .with_ids_from(TRAIN_ID_BASE)
            .with_prefix("t"),
        )?
        .normalized()?;
        let start = Instant::now();
        let codebook = train_codebooks(&train, cfg.m, cfg.z, cfg.kmeans_iters, cfg.codebook_seed)?;
        let codebook_training_seconds = start.elapsed().as_secs_f64();
        Ok(Self {
            probes,
            mates,
            distractors,
            slow_view,
            codebook,
            codebook_training_seconds,
        })
    }

    /// Mates followed by the first `distractors` distractors.
    pub fn gallery(&self, distractors: usize) -> Result<Dataset> {
        if distractors > self.distractors.len() {
            return Err(invalid(format!(
                "{distractors} distractors requested, {} generated",
                self.distractors.len()
            )));
        }
        let mut g = self.mates.clone();
        g.extend(&self.distractors.prefix(distractors))?;
        Ok(g)
    }

    /// Gallery ids sharing each probe's subject, in probe order.
    pub fn mate_sets(&self) -> Vec<HashSet<u64>> {
        let mut by_subject: HashMap<&str, HashSet<u64>> = HashMap::new();
        for (id, s) in self.mates.ids().iter().zip(self.mates.subjects()) {
            if let Some(s) = s {
                by_subject.entry(s.as_str()).or_default().insert(*id);
            }
        }
        self.probes
            .subjects()
            .iter()
            .map(|s| {
                s.as_deref()
                    .and_then(|s| by_subject.get(s))
                    .cloned()
                    .unwrap_or_default()
            })
            .collect()
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))
}

/// Mean of per-probe average precisions summed in probe order.
fn map_in_order(aps: &[f64]) -> f64 {
    aps.iter().sum::<f64>() / aps.len() as f64
}

fn ap(probe_id: u64, list: CandidateList, mates: &HashSet<u64>) -> Result<f64> {
    average_precision(&ProbeResult::new(probe_id, None, list, mates.clone()))
}

/// Minimum and mean wall time of `reps` calls after one untimed warm-up.
pub fn time_repeated<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<(f64, f64)> {
    f()?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    let min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    Ok((min, mean))
}

/// Reference matcher for a gallery of the mates plus `distractors`
/// distractors, scoring the second view when one exists.
fn slow_matcher<'a>(
    cfg: &BenchConfig,
    data: &'a BenchData,
    index: &'a GalleryIndex,
    distractors: usize,
) -> Result<ReferenceSlowMatcher<'a>> {
    let matcher = match &data.slow_view {
        Some(v) => ReferenceSlowMatcher::with_view_parts(
            &[(&v.mates, v.mates.len()), (&v.distractors, distractors)],
            &v.probes,
            cfg.perturbation,
            cfg.matcher_seed,
        )?,
        None => ReferenceSlowMatcher::new(index, cfg.perturbation, cfg.matcher_seed)?,
    };
    matcher.with_tail_dof(cfg.perturbation_tail_dof)
}

fn build(data: &BenchData, distractors: usize, keep_raw: bool) -> Result<(GalleryIndex, f64)> {
    let gallery = data.gallery(distractors)?;
    let start = Instant::now();
    let index = crate::filter::build_index_owned(gallery, &data.codebook, keep_raw)?;
    Ok((index, start.elapsed().as_secs_f64()))
}

/// One probe's ranked output under `strategy`.
fn run_one(
    index: &GalleryIndex,
    matcher: Option<&ReferenceSlowMatcher<'_>>,
    probe: ProbeRef<'_>,
    k: usize,
    strategy: BenchStrategy,
) -> Result<CandidateList> {
    match strategy {
        BenchStrategy::Exact => {
            let raw = index.raw().ok_or(Error::MissingRawVectors)?;
            search_exact(raw, probe.vector, k, Metric::Cosine)
        }
        BenchStrategy::FastOnly => search_pq(index, probe.vector, k),
        BenchStrategy::Cascade(s) => {
            let m = matcher.ok_or(Error::MissingRawVectors)?;
            cascade_search(index, m, probe, k, s)
        }
    }
}

/// mAP and timing of every configured strategy at every gallery size.
pub fn run_scaling_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let data = BenchData::generate(cfg)?;
    run_scaling_bench_on(cfg, &data)
}

/// [`run_scaling_bench`] on pre-generated data.
pub fn run_scaling_bench_on(cfg: &BenchConfig, data: &BenchData) -> Result<BenchReport> {
    cfg.validate()?;
    let pool = pool(cfg.threads)?;
    let mates = data.mate_sets();
    let uses_slow = cfg.strategies.iter().any(|s| s.uses_slow_matcher());
    let keep_raw =
        cfg.strategies.contains(&BenchStrategy::Exact) || (uses_slow && data.slow_view.is_none());
    let mut cells = Vec::new();
    for &d in &cfg.distractor_counts {
        let (index, enrollment_seconds) = build(data, d, keep_raw)?;
        let n = index.len();
        let matcher = if uses_slow {
            Some(slow_matcher(cfg, data, &index, d)?)
        } else {
            None
        };
        let ks: Vec<usize> = if cfg.candidate_sizes.is_empty() {
            vec![default_candidate_size(n, DEFAULT_CANDIDATE_CAP)]
        } else {
            cfg.candidate_sizes.clone()
        };
        for &k in &ks {
            for &strategy in &cfg.strategies {
                let k_eff = match strategy {
                    BenchStrategy::Cascade(FusionStrategy::DfPlusCots) => n,
                    _ => k.min(n),
                };
                let pass = || -> Result<Vec<CandidateList>> {
                    (0..data.probes.len())
                        .into_par_iter()
                        .map(|row| {
                            let probe = ProbeRef {
                                id: data.probes.ids()[row],
                                vector: data.probes.vector(row),
                            };
                            run_one(&index, matcher.as_ref(), probe, k_eff.max(2), strategy)
                        })
                        .collect()
                };
                let (lists, timing) = pool.install(|| -> Result<_> {
                    let lists = pass()?;
                    let timing = if cfg.repetitions > 0 {
                        Some(time_repeated(cfg.repetitions, || pass().map(|_| ()))?)
                    } else {
                        None
                    };
                    Ok((lists, timing))
                })?;
                let aps = lists
                    .into_iter()
                    .zip(&mates)
                    .zip(data.probes.ids())
                    .map(|((list, m), &id)| ap(id, list, m))
                    .collect::<Result<Vec<f64>>>()?;
                let per_probe = data.probes.len() as f64;
                cells.push(BenchCell {
                    distractors: d,
                    gallery_size: n,
                    k: k_eff,
                    strategy,
                    map: map_in_order(&aps),
                    mean_search_seconds: timing.map(|t| t.1 / per_probe),
                    min_search_seconds: timing.map(|t| t.0 / per_probe),
                    enrollment_seconds,
                });
                log::info!(
                    "N = {n}, k = {k_eff}, {strategy}: mAP {:.6}",
                    cells.last().unwrap().map
                );
            }
        }
    }
    let argmax_k = argmax_per_gallery(&cells);
    Ok(BenchReport {
        kind: "scaling",
        config: cfg.clone(),
        codebook_training_seconds: data.codebook_training_seconds,
        cells,
        argmax_k,
    })
}

/// mAP over the candidate-size grid at every gallery size. Each probe is
/// filtered once at the largest k and scored once by the slow matcher;
/// smaller k reuse prefixes, which equal independent runs at that k.
pub fn run_k_sweep(cfg: &BenchConfig) -> Result<BenchReport> {
    let data = BenchData::generate(cfg)?;
    run_k_sweep_on(cfg, &data)
}

/// [`run_k_sweep`] on pre-generated data.
pub fn run_k_sweep_on(cfg: &BenchConfig, data: &BenchData) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.candidate_sizes.is_empty() {
        return Err(invalid("k sweep needs candidate sizes"));
    }
    let strategies: Vec<BenchStrategy> = cfg
        .strategies
        .iter()
        .copied()
        .filter(|s| matches!(s, BenchStrategy::FastOnly | BenchStrategy::Cascade(_)))
        .collect();
    if !strategies
        .iter()
        .any(|s| matches!(s, BenchStrategy::Cascade(f) if f.filters()))
    {
        return Err(invalid("k sweep needs a re-ranking strategy"));
    }
    let pool = pool(cfg.threads)?;
    let mates = data.mate_sets();
    let mut cells = Vec::new();
    for &d in &cfg.distractor_counts {
        let (index, enrollment_seconds) = build(data, d, data.slow_view.is_none())?;
        let n = index.len();
        let matcher = slow_matcher(cfg, data, &index, d)?;
        let mut ks: Vec<usize> = cfg.candidate_sizes.iter().map(|&k| k.min(n)).collect();
        ks.sort_unstable();
        ks.dedup();
        let k_max = *ks.last().unwrap();

        // aps[probe][strategy][k]
        let aps: Vec<Vec<Vec<f64>>> = pool.install(|| {
            (0..data.probes.len())
                .into_par_iter()
                .map(|row| -> Result<Vec<Vec<f64>>> {
                    let id = data.probes.ids()[row];
                    let probe = ProbeRef {
                        id,
                        vector: data.probes.vector(row),
                    };
                    let fast = search_pq(&index, probe.vector, k_max)?;
                    let needs_slow = strategies
                        .iter()
                        .any(|s| matches!(s, BenchStrategy::Cascade(_)));
                    let slow = if needs_slow {
                        slow_scores(&matcher, probe, &fast)?
                    } else {
                        Vec::new()
                    };
                    strategies
                        .iter()
                        .map(|&s| match s {
                            // Unfiltered fusion does not depend on k.
                            BenchStrategy::Cascade(FusionStrategy::DfPlusCots) => {
                                let list = cascade_search(
                                    &index,
                                    &matcher,
                                    probe,
                                    n.max(2),
                                    FusionStrategy::DfPlusCots,
                                )?;
                                Ok(vec![ap(id, list, &mates[row])?; ks.len()])
                            }
                            _ => ks
                                .iter()
                                .map(|&k| {
                                    let list = match s {
                                        BenchStrategy::Cascade(f) => {
                                            rerank(&fast.prefix(k), &slow[..k], f)?
                                        }
                                        _ => fast.prefix(k),
                                    };
                                    ap(id, list, &mates[row])
                                })
                                .collect(),
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (si, &strategy) in strategies.iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let column: Vec<f64> = aps.iter().map(|p| p[si][ki]).collect();
                cells.push(BenchCell {
                    distractors: d,
                    gallery_size: n,
                    k,
                    strategy,
                    map: map_in_order(&column),
                    mean_search_seconds: None,
                    min_search_seconds: None,
                    enrollment_seconds,
                });
            }
        }
        log::info!("k sweep at N = {n} done");
    }
    let argmax_k = argmax_per_gallery(&cells);
    Ok(BenchReport {
        kind: "k-sweep",
        config: cfg.clone(),
        codebook_training_seconds: data.codebook_training_seconds,
        cells,
        argmax_k,
    })
}

fn argmax_per_gallery(cells: &[BenchCell]) -> Vec<ArgmaxK> {
    let mut best: Vec<ArgmaxK> = Vec::new();
    for c in cells {
        match best
            .iter_mut()
            .find(|b| b.gallery_size == c.gallery_size && b.strategy == c.strategy)
        {
            Some(b) => {
                if c.map > b.map || (c.map == b.map && c.k < b.k) {
                    b.k = c.k;
                    b.map = c.map;
                }
            }
            None => best.push(ArgmaxK {
                distractors: c.distractors,
                gallery_size: c.gallery_size,
                strategy: c.strategy,
                k: c.k,
                map: c.map,
            }),
        }
    }
    best
}
