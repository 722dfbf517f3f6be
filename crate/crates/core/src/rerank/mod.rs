//! Re-ranking of a fast-filter candidate list by fusing it with a slow matcher.
//!
//! Four strategies are supported:
//!
//! * [`FusionStrategy::DfPlusCots`]: z-score and sum-fuse both matchers over
//!   the whole gallery, no filtering.
//! * [`FusionStrategy::DfThenCots`]: filter to the top `k` by PQ similarity,
//!   then z-score both matchers over those `k` and sum-fuse.
//! * [`FusionStrategy::DfThenCotsOnly`]: filter, then order by the slow
//!   matcher alone.
//! * [`FusionStrategy::DfThenCotsRank`]: filter, then Borda-fuse the two
//!   candidate orderings.

mod matcher;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embedding::Dataset;
use crate::error::{invalid, Error, Result};
use crate::filter::{rank_order, search_pq, Candidate, CandidateList, GalleryIndex};

pub use matcher::{
    decode_score_file, encode_score_file, ProbeRef, ReferenceSlowMatcher, ScoreRecord,
    ScoreTableMatcher, SlowMatcher, SCORE_FILE_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionStrategy {
    DfPlusCots,
    DfThenCots,
    DfThenCotsOnly,
    DfThenCotsRank,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 4] = [
        FusionStrategy::DfPlusCots,
        FusionStrategy::DfThenCots,
        FusionStrategy::DfThenCotsOnly,
        FusionStrategy::DfThenCotsRank,
    ];

    pub fn filters(self) -> bool {
        self != FusionStrategy::DfPlusCots
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::DfPlusCots => "df-plus-cots",
            FusionStrategy::DfThenCots => "df-then-cots",
            FusionStrategy::DfThenCotsOnly => "df-then-cots-only",
            FusionStrategy::DfThenCotsRank => "df-then-cots-rank",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "df-plus-cots" | "df+cots" => Ok(FusionStrategy::DfPlusCots),
            "df-then-cots" | "df->cots" => Ok(FusionStrategy::DfThenCots),
            "df-then-cots-only" | "df->cots-only" => Ok(FusionStrategy::DfThenCotsOnly),
            "df-then-cots-rank" | "df->cots-rank" => Ok(FusionStrategy::DfThenCotsRank),
            other => Err(invalid(format!("unknown fusion strategy {other:?}"))),
        }
    }
}

/// Affine map to mean 0 and population standard deviation 1.
pub fn zscore_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::DegenerateScores);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !std.is_finite() || std <= 0.0 {
        return Err(Error::DegenerateScores);
    }
    Ok(scores.iter().map(|s| (s - mean) / std).collect())
}

/// Element-wise sum of two already-normalized score lists.
pub fn sum_fuse(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

/// Borda fusion: ascending sum of 1-based ranks, ties by ascending id.
pub fn rank_fuse(rank_a: &[u64], rank_b: &[u64]) -> Result<Vec<u64>> {
    Ok(rank_fuse_with_sums(rank_a, rank_b)?
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

fn rank_fuse_with_sums(rank_a: &[u64], rank_b: &[u64]) -> Result<Vec<(u64, usize)>> {
    if rank_a.len() != rank_b.len() {
        return Err(Error::IdSetMismatch);
    }
    let mut pos_b = HashMap::with_capacity(rank_b.len());
    for (r, &id) in rank_b.iter().enumerate() {
        if pos_b.insert(id, r + 1).is_some() {
            return Err(Error::IdSetMismatch);
        }
    }
    let mut fused = Vec::with_capacity(rank_a.len());
    let mut seen = std::collections::HashSet::with_capacity(rank_a.len());
    for (r, &id) in rank_a.iter().enumerate() {
        if !seen.insert(id) {
            return Err(Error::IdSetMismatch);
        }
        let rb = pos_b.get(&id).ok_or(Error::IdSetMismatch)?;
        fused.push((id, r + 1 + rb));
    }
    fused.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(fused)
}

/// z-scores, or all zeros when the set carries no ordering information.
fn zscore_or_flat(scores: &[f64]) -> Vec<f64> {
    zscore_normalize(scores).unwrap_or_else(|_| vec![0.0; scores.len()])
}

/// Re-order `fast` using the slow matcher's scores for the same candidates
/// (`slow[i]` belongs to `fast.entries()[i]`).
pub fn rerank(
    fast: &CandidateList,
    slow: &[f64],
    strategy: FusionStrategy,
) -> Result<CandidateList> {
    if slow.len() != fast.len() {
        return Err(Error::LengthMismatch(fast.len(), slow.len()));
    }
    let ids = fast.ids();
    let entries: Vec<Candidate> = match strategy {
        FusionStrategy::DfPlusCots | FusionStrategy::DfThenCots => {
            let fused = sum_fuse(&zscore_or_flat(&fast.scores()), &zscore_or_flat(slow))?;
            ids.iter()
                .zip(fused)
                .map(|(&id, score)| Candidate { id, score })
                .collect()
        }
        FusionStrategy::DfThenCotsOnly => ids
            .iter()
            .zip(slow)
            .map(|(&id, &score)| Candidate { id, score })
            .collect(),
        FusionStrategy::DfThenCotsRank => {
            let mut by_slow: Vec<Candidate> = ids
                .iter()
                .zip(slow)
                .map(|(&id, &score)| Candidate { id, score })
                .collect();
            by_slow.sort_by(rank_order);
            let slow_order: Vec<u64> = by_slow.iter().map(|c| c.id).collect();
            rank_fuse_with_sums(&ids, &slow_order)?
                .into_iter()
                .map(|(id, sum)| Candidate {
                    id,
                    score: -(sum as f64),
                })
                .collect()
        }
    };
    Ok(CandidateList::from_unsorted(entries))
}

/// Fast PQ filter followed by slow-matcher re-ranking for one probe.
///
/// The slow matcher is called once per candidate: `min(k, N)` times for the
/// filtering strategies and `N` times for [`FusionStrategy::DfPlusCots`].
pub fn cascade_search(
    index: &GalleryIndex,
    matcher: &dyn SlowMatcher,
    probe: ProbeRef<'_>,
    k: usize,
    strategy: FusionStrategy,
) -> Result<CandidateList> {
    if k < 2 {
        return Err(invalid("cascade search needs k >= 2"));
    }
    let depth = if strategy.filters() {
        k
    } else {
        index.len().max(1)
    };
    let fast = search_pq(index, probe.vector, depth)?;
    let slow = slow_scores(matcher, probe, &fast)?;
    rerank(&fast, &slow, strategy)
}

/// Slow-matcher scores for each candidate, in list order.
pub fn slow_scores(
    matcher: &dyn SlowMatcher,
    probe: ProbeRef<'_>,
    fast: &CandidateList,
) -> Result<Vec<f64>> {
    fast.entries()
        .iter()
        .map(|c| matcher.score(probe, c.id))
        .collect()
}

/// [`cascade_search`] for every row of `probes`, in row order. Runs in
/// parallel when the matcher allows concurrent calls.
pub fn cascade_search_batch(
    index: &GalleryIndex,
    matcher: &dyn SlowMatcher,
    probes: &Dataset,
    k: usize,
    strategy: FusionStrategy,
) -> Result<Vec<CandidateList>> {
    let one = |row: usize| {
        let probe = ProbeRef {
            id: probes.ids()[row],
            vector: probes.vector(row),
        };
        cascade_search(index, matcher, probe, k, strategy)
    };
    if matcher.supports_concurrent_calls() {
        (0..probes.len()).into_par_iter().map(one).collect()
    } else {
        (0..probes.len()).map(one).collect()
    }
}
