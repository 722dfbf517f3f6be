//! Closed-set and open-set search metrics.
//!
//! Conventions shared by every function here:
//!
//! * a probe is *accepted* at threshold `t` when its top-1 score is `>= t`;
//!   a probe with an empty result list is never accepted;
//! * FAR targets are met by the smallest impostor score whose achieved FAR
//!   does not exceed the target (or a threshold just above every impostor
//!   score when none does); a target of 1 or more accepts everything.

mod report;

use std::collections::HashSet;

use crate::error::{invalid, Error, Result};
use crate::filter::{Candidate, CandidateList};

pub use report::{
    attach_ground_truth, evaluate, read_results_jsonl, write_results_jsonl, CmcPoint, DirPoint,
    EvalConfig, EvalReport, FnirFpirPoint, OpenSetPoint, PrPoint, ResultLine, ResultLineEntry,
    TarPoint,
};

/// Search output for one probe together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe_id: u64,
    pub subject: Option<String>,
    /// Descending score, ties by ascending id.
    pub ranked: Vec<Candidate>,
    /// Every gallery id sharing the probe's identity, retrieved or not.
    /// Empty for impostor probes.
    pub mates: HashSet<u64>,
}

impl ProbeResult {
    pub fn new(
        probe_id: u64,
        subject: Option<String>,
        ranked: CandidateList,
        mates: HashSet<u64>,
    ) -> Self {
        Self {
            probe_id,
            subject,
            ranked: ranked.into_entries(),
            mates,
        }
    }

    pub fn top_score(&self) -> f64 {
        self.ranked.first().map_or(f64::NEG_INFINITY, |c| c.score)
    }

    pub fn accepted(&self, threshold: f64) -> bool {
        !self.ranked.is_empty() && self.top_score() >= threshold
    }

    /// 1-based rank of the best-placed mate, if any mate was retrieved.
    pub fn best_mate_rank(&self) -> Option<usize> {
        self.ranked
            .iter()
            .position(|c| self.mates.contains(&c.id))
            .map(|p| p + 1)
    }
}

/// `Σ_k P(k) · (R(k) − R(k−1))` over the ranked list with `R(0) = 0`.
///
/// Recall is relative to the full mate set, so mates missing from a
/// truncated list contribute nothing.
pub fn average_precision(result: &ProbeResult) -> Result<f64> {
    if result.mates.is_empty() {
        return Err(invalid(format!("probe {} has no mates", result.probe_id)));
    }
    let total = result.mates.len() as f64;
    let mut hits = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (i, c) in result.ranked.iter().enumerate() {
        if result.mates.contains(&c.id) {
            hits += 1;
        }
        let precision = hits as f64 / (i + 1) as f64;
        let recall = hits as f64 / total;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(ap)
}

pub fn mean_average_precision(results: &[ProbeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no probes to average".into()));
    }
    let mut sum = 0.0;
    for r in results {
        sum += average_precision(r)?;
    }
    Ok(sum / results.len() as f64)
}

/// Fraction of `scores` at or above `threshold`.
fn fraction_at_or_above(scores: &[f64], threshold: f64) -> f64 {
    scores.iter().filter(|&&s| s >= threshold).count() as f64 / scores.len() as f64
}

/// Threshold meeting `far_target` against the given impostor scores.
pub fn threshold_for_far(impostor_scores: &[f64], far_target: f64) -> Result<f64> {
    if impostor_scores.is_empty() {
        return Err(Error::InsufficientData("no impostor scores".into()));
    }
    if far_target >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut sorted = impostor_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;
    // Walking down from the largest score, candidate t = sorted[i] accepts
    // every impostor scoring >= t.
    let mut best = next_up(sorted[0]);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == t {
            j += 1;
        }
        if j as f64 / n <= far_target {
            best = t;
            i = j;
        } else {
            break;
        }
    }
    Ok(best)
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Open-set trade-off: per threshold, FAR over impostor probes and mAP over
/// genuine probes with rejected probes scoring 0.
pub fn open_set_sweep(
    genuine: &[ProbeResult],
    impostor: &[ProbeResult],
    thresholds: &[f64],
) -> Result<Vec<OpenSetPoint>> {
    if impostor.is_empty() {
        return Err(Error::InsufficientData("empty impostor set".into()));
    }
    if genuine.is_empty() {
        return Err(Error::InsufficientData("empty genuine set".into()));
    }
    let aps = genuine
        .iter()
        .map(average_precision)
        .collect::<Result<Vec<f64>>>()?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let far =
                impostor.iter().filter(|p| p.accepted(t)).count() as f64 / impostor.len() as f64;
            let map = genuine
                .iter()
                .zip(&aps)
                .map(|(p, &ap)| if p.accepted(t) { ap } else { 0.0 })
                .sum::<f64>()
                / genuine.len() as f64;
            OpenSetPoint {
                threshold: t,
                far,
                map,
            }
        })
        .collect())
}

/// Cumulative match characteristic for ranks `1..=max_rank`.
pub fn cmc_curve(results: &[ProbeResult], max_rank: usize) -> Result<Vec<(usize, f64)>> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no probes".into()));
    }
    if let Some(r) = results.iter().find(|r| r.mates.is_empty()) {
        return Err(invalid(format!("probe {} has no mates", r.probe_id)));
    }
    let mut counts = vec![0usize; max_rank + 1];
    for r in results {
        if let Some(rank) = r.best_mate_rank() {
            if rank <= max_rank {
                counts[rank] += 1;
            }
        }
    }
    let n = results.len() as f64;
    let mut cumulative = 0;
    Ok((1..=max_rank)
        .map(|rank| {
            cumulative += counts[rank];
            (rank, cumulative as f64 / n)
        })
        .collect())
}

/// Verification-style TAR at each FAR target.
pub fn tar_at_far(
    genuine_scores: &[f64],
    impostor_scores: &[f64],
    far_targets: &[f64],
) -> Result<Vec<TarPoint>> {
    if genuine_scores.is_empty() || impostor_scores.is_empty() {
        return Err(Error::InsufficientData(
            "TAR@FAR needs genuine and impostor scores".into(),
        ));
    }
    far_targets
        .iter()
        .map(|&target| {
            let threshold = threshold_for_far(impostor_scores, target)?;
            Ok(TarPoint {
                target,
                threshold,
                far: fraction_at_or_above(impostor_scores, threshold),
                tar: fraction_at_or_above(genuine_scores, threshold),
            })
        })
        .collect()
}

/// `(FPIR, FNIR)` per threshold, sorted by FPIR: FPIR is the fraction of
/// impostor probes accepted, FNIR the fraction of genuine probes rejected.
pub fn fnir_fpir(
    genuine: &[ProbeResult],
    impostor: &[ProbeResult],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::InsufficientData(
            "FNIR/FPIR needs genuine and impostor probes".into(),
        ));
    }
    let mut out: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let fpir =
                impostor.iter().filter(|p| p.accepted(t)).count() as f64 / impostor.len() as f64;
            let fnir =
                genuine.iter().filter(|p| !p.accepted(t)).count() as f64 / genuine.len() as f64;
            (fpir, fnir)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    Ok(out)
}

/// Detection and identification rate: genuine probes whose best mate is at
/// rank `<= rank` and whose top-1 score clears the FAR-derived threshold.
pub fn dir_at_rank_far(
    genuine: &[ProbeResult],
    impostor: &[ProbeResult],
    rank: usize,
    far_target: f64,
) -> Result<f64> {
    if rank < 1 {
        return Err(invalid("rank must be at least 1"));
    }
    if impostor.is_empty() {
        return Err(Error::InsufficientData("empty impostor set".into()));
    }
    if genuine.is_empty() {
        return Err(Error::InsufficientData("empty genuine set".into()));
    }
    let impostor_top: Vec<f64> = impostor.iter().map(ProbeResult::top_score).collect();
    let threshold = threshold_for_far(&impostor_top, far_target)?;
    let hits = genuine
        .iter()
        .filter(|p| p.best_mate_rank().is_some_and(|r| r <= rank) && p.accepted(threshold))
        .count();
    Ok(hits as f64 / genuine.len() as f64)
}

/// `(precision, recall)` of the first `k` results.
pub fn precision_recall(result: &ProbeResult, k: usize) -> Result<(f64, f64)> {
    if k < 1 || k > result.ranked.len() {
        return Err(invalid(format!(
            "k = {k} outside 1..={}",
            result.ranked.len()
        )));
    }
    if result.mates.is_empty() {
        return Err(invalid(format!("probe {} has no mates", result.probe_id)));
    }
    let hits = result.ranked[..k]
        .iter()
        .filter(|c| result.mates.contains(&c.id))
        .count() as f64;
    Ok((hits / k as f64, hits / result.mates.len() as f64))
}
