//! Report assembly and result-file formats.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    cmc_curve, dir_at_rank_far, fnir_fpir, mean_average_precision, open_set_sweep,
    precision_recall, tar_at_far, threshold_for_far, ProbeResult,
};
use crate::error::{invalid, Error, Result};
use crate::filter::{Candidate, CandidateList};

/// JSON numbers, with the infinities written as the strings `"inf"` and `"-inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenSetPoint {
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub far: f64,
    pub map: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarPoint {
    pub target: f64,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub depth: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmcPoint {
    pub rank: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirPoint {
    pub far: f64,
    pub rank: usize,
    pub dir: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnirFpirPoint {
    pub fpir: f64,
    pub fnir: f64,
}

/// Which curves to compute and at what resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub far_targets: Vec<f64>,
    pub dir_ranks: Vec<usize>,
    pub cmc_max_rank: usize,
    pub pr_depth: usize,
    /// Number of quantile thresholds in the open-set and FNIR/FPIR sweeps.
    pub sweep_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            far_targets: vec![0.001, 0.01, 0.1],
            dir_ranks: vec![1, 5, 10],
            cmc_max_rank: 20,
            pr_depth: 20,
            sweep_points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_genuine: usize,
    pub num_impostor: usize,
    pub map: f64,
    pub pr_curve: Vec<PrPoint>,
    pub cmc: Vec<CmcPoint>,
    pub tar_far: Vec<TarPoint>,
    pub dir_table: Vec<DirPoint>,
    pub fnir_fpir: Vec<FnirFpirPoint>,
    pub openset_map_far: Vec<OpenSetPoint>,
}

/// Compute every metric over genuine probes (with mates) and impostor probes
/// (without). Open-set tables are left empty when there are no impostors.
///
/// TAR@FAR treats each retrieved (probe, gallery) pair as a verification
/// attempt: mate pairs are genuine, all other pairs are impostor.
pub fn evaluate(
    genuine: &[ProbeResult],
    impostor: &[ProbeResult],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if let Some(p) = impostor.iter().find(|p| !p.mates.is_empty()) {
        return Err(invalid(format!("impostor probe {} has mates", p.probe_id)));
    }
    let map = mean_average_precision(genuine)?;
    let cmc = cmc_curve(genuine, cfg.cmc_max_rank)?
        .into_iter()
        .map(|(rank, rate)| CmcPoint { rank, rate })
        .collect();
    let pr_curve = pr_curve(genuine, cfg.pr_depth)?;

    let mut genuine_scores = Vec::new();
    let mut impostor_scores = Vec::new();
    for p in genuine.iter().chain(impostor) {
        for c in &p.ranked {
            if p.mates.contains(&c.id) {
                genuine_scores.push(c.score);
            } else {
                impostor_scores.push(c.score);
            }
        }
    }
    let mut tar_far = if genuine_scores.is_empty() || impostor_scores.is_empty() {
        Vec::new()
    } else {
        tar_at_far(&genuine_scores, &impostor_scores, &cfg.far_targets)?
    };
    tar_far.sort_by(|a, b| a.far.total_cmp(&b.far).then(a.tar.total_cmp(&b.tar)));

    let (mut dir_table, mut fnir, mut openset) = (Vec::new(), Vec::new(), Vec::new());
    if !impostor.is_empty() {
        for &far in &cfg.far_targets {
            for &rank in &cfg.dir_ranks {
                dir_table.push(DirPoint {
                    far,
                    rank,
                    dir: dir_at_rank_far(genuine, impostor, rank, far)?,
                });
            }
        }
        dir_table.sort_by(|a, b| a.far.total_cmp(&b.far).then(a.rank.cmp(&b.rank)));
        let thresholds = sweep_thresholds(genuine, impostor, cfg)?;
        fnir = fnir_fpir(genuine, impostor, &thresholds)?
            .into_iter()
            .map(|(fpir, fnir)| FnirFpirPoint { fpir, fnir })
            .collect();
        openset = open_set_sweep(genuine, impostor, &thresholds)?;
        openset.sort_by(|a, b| a.far.total_cmp(&b.far).then(a.map.total_cmp(&b.map)));
    }
    Ok(EvalReport {
        num_genuine: genuine.len(),
        num_impostor: impostor.len(),
        map,
        pr_curve,
        cmc,
        tar_far,
        dir_table,
        fnir_fpir: fnir,
        openset_map_far: openset,
    })
}

/// Mean precision and recall over genuine probes at each depth up to the
/// shortest result list, sorted by recall.
fn pr_curve(genuine: &[ProbeResult], max_depth: usize) -> Result<Vec<PrPoint>> {
    let shortest = genuine.iter().map(|p| p.ranked.len()).min().unwrap_or(0);
    let n = genuine.len() as f64;
    let mut out = Vec::new();
    for depth in 1..=max_depth.min(shortest) {
        let (mut p, mut r) = (0.0, 0.0);
        for g in genuine {
            let (pi, ri) = precision_recall(g, depth)?;
            p += pi;
            r += ri;
        }
        out.push(PrPoint {
            depth,
            recall: r / n,
            precision: p / n,
        });
    }
    out.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(a.depth.cmp(&b.depth)));
    Ok(out)
}

/// `-inf`, the FAR-target thresholds, and evenly spaced quantiles of all
/// top-1 scores.
fn sweep_thresholds(
    genuine: &[ProbeResult],
    impostor: &[ProbeResult],
    cfg: &EvalConfig,
) -> Result<Vec<f64>> {
    let impostor_top: Vec<f64> = impostor.iter().map(ProbeResult::top_score).collect();
    let mut tops: Vec<f64> = genuine
        .iter()
        .chain(impostor)
        .map(ProbeResult::top_score)
        .filter(|s| s.is_finite())
        .collect();
    tops.sort_by(f64::total_cmp);
    let mut out = vec![f64::NEG_INFINITY];
    for &far in &cfg.far_targets {
        out.push(threshold_for_far(&impostor_top, far)?);
    }
    if !tops.is_empty() && cfg.sweep_points > 0 {
        let steps = cfg.sweep_points.max(2) - 1;
        for i in 0..=steps {
            out.push(tops[i * (tops.len() - 1) / steps]);
        }
        out.push(f64::INFINITY);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned-column human-readable rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "probes        genuine {}  impostor {}",
            self.num_genuine, self.num_impostor
        );
        let _ = writeln!(s, "mAP           {:.6}", self.map);
        let _ = writeln!(s, "\nCMC\n{:>6}  {:>8}", "rank", "rate");
        for p in &self.cmc {
            let _ = writeln!(s, "{:>6}  {:>8.4}", p.rank, p.rate);
        }
        let _ = writeln!(
            s,
            "\nprecision/recall\n{:>6}  {:>9}  {:>9}",
            "depth", "recall", "precision"
        );
        for p in &self.pr_curve {
            let _ = writeln!(s, "{:>6}  {:>9.4}  {:>9.4}", p.depth, p.recall, p.precision);
        }
        if !self.tar_far.is_empty() {
            let _ = writeln!(
                s,
                "\nTAR@FAR\n{:>8}  {:>10}  {:>10}  {:>8}",
                "target", "far", "threshold", "tar"
            );
            for p in &self.tar_far {
                let _ = writeln!(
                    s,
                    "{:>8}  {:>10.6}  {:>10.4}  {:>8.4}",
                    p.target, p.far, p.threshold, p.tar
                );
            }
        }
        if !self.dir_table.is_empty() {
            let _ = writeln!(s, "\nDIR\n{:>8}  {:>6}  {:>8}", "far", "rank", "dir");
            for p in &self.dir_table {
                let _ = writeln!(s, "{:>8}  {:>6}  {:>8.4}", p.far, p.rank, p.dir);
            }
        }
        if !self.openset_map_far.is_empty() {
            let _ = writeln!(
                s,
                "\nopen-set mAP\n{:>10}  {:>10}  {:>8}",
                "threshold", "far", "mAP"
            );
            for p in &self.openset_map_far {
                let _ = writeln!(s, "{:>10.4}  {:>10.6}  {:>8.4}", p.threshold, p.far, p.map);
            }
        }
        if !self.fnir_fpir.is_empty() {
            let _ = writeln!(s, "\nFNIR/FPIR\n{:>10}  {:>8}", "fpir", "fnir");
            for p in &self.fnir_fpir {
                let _ = writeln!(s, "{:>10.6}  {:>8.4}", p.fpir, p.fnir);
            }
        }
        s
    }
}

/// One JSON-lines record of ranked search output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub probe_id: u64,
    pub results: Vec<ResultLineEntry>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultLineEntry {
    pub gallery_id: u64,
    pub score: f64,
    pub rank: usize,
}

impl ResultLine {
    /// `accepted` is true when the top-1 score reaches `threshold`.
    pub fn new(probe_id: u64, list: &CandidateList, threshold: f64) -> Self {
        Self {
            probe_id,
            results: list
                .entries()
                .iter()
                .enumerate()
                .map(|(i, c)| ResultLineEntry {
                    gallery_id: c.id,
                    score: c.score,
                    rank: i + 1,
                })
                .collect(),
            accepted: list.top().is_some_and(|c| c.score >= threshold),
        }
    }

    pub fn candidates(&self) -> CandidateList {
        CandidateList::from_unsorted(
            self.results
                .iter()
                .map(|e| Candidate {
                    id: e.gallery_id,
                    score: e.score,
                })
                .collect(),
        )
    }
}

pub fn write_results_jsonl<W: Write>(mut out: W, lines: &[ResultLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parse JSON-lines results; blank lines are skipped.
pub fn read_results_jsonl<R: BufRead>(input: R) -> Result<Vec<ResultLine>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ResultLine = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest(format!("results line {}: {e}", n + 1)))?;
        if parsed.results.iter().any(|e| !e.score.is_finite()) {
            return Err(Error::Manifest(format!(
                "results line {}: non-finite score",
                n + 1
            )));
        }
        out.push(parsed);
    }
    Ok(out)
}

/// Split result lines into genuine and impostor probes by subject label.
/// A probe is genuine when its subject labels at least one gallery item.
pub fn attach_ground_truth(
    lines: &[ResultLine],
    probe_subjects: &HashMap<u64, Option<String>>,
    gallery_ids: &[u64],
    gallery_subjects: &[Option<String>],
) -> Result<(Vec<ProbeResult>, Vec<ProbeResult>)> {
    let mut by_subject: HashMap<&str, HashSet<u64>> = HashMap::new();
    for (id, subject) in gallery_ids.iter().zip(gallery_subjects) {
        if let Some(s) = subject {
            by_subject.entry(s.as_str()).or_default().insert(*id);
        }
    }
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for line in lines {
        let subject = probe_subjects
            .get(&line.probe_id)
            .ok_or(Error::UnknownId(line.probe_id))?
            .clone();
        let mates = subject
            .as_deref()
            .and_then(|s| by_subject.get(s))
            .cloned()
            .unwrap_or_default();
        let result = ProbeResult::new(line.probe_id, subject, line.candidates(), mates);
        if result.mates.is_empty() {
            impostor.push(result);
        } else {
            genuine.push(result);
        }
    }
    Ok((genuine, impostor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(id: u64, scores: &[(u64, f64)], mates: &[u64]) -> ProbeResult {
        ProbeResult {
            probe_id: id,
            subject: None,
            ranked: scores
                .iter()
                .map(|&(id, score)| Candidate { id, score })
                .collect(),
            mates: mates.iter().copied().collect(),
        }
    }

    fn sample() -> (Vec<ProbeResult>, Vec<ProbeResult>) {
        let genuine = vec![
            probe(1, &[(10, 0.9), (11, 0.5), (12, 0.2)], &[10]),
            probe(2, &[(11, 0.7), (12, 0.6), (10, 0.1)], &[12, 10]),
        ];
        let impostor = vec![probe(3, &[(10, 0.65), (11, 0.3), (12, 0.0)], &[])];
        (genuine, impostor)
    }

    #[test]
    fn report_curves_sorted_and_bounded() {
        let (g, i) = sample();
        let r = evaluate(&g, &i, &EvalConfig::default()).unwrap();
        assert!((r.map - (1.0 + (0.5 + 2.0 / 3.0) / 2.0) / 2.0).abs() < 1e-12);
        assert_eq!(r.cmc.len(), 20);
        assert!(r.pr_curve.windows(2).all(|w| w[0].recall <= w[1].recall));
        assert!(r.openset_map_far.windows(2).all(|w| w[0].far <= w[1].far));
        assert!(r.fnir_fpir.windows(2).all(|w| w[0].fpir <= w[1].fpir));
        assert!(r.tar_far.windows(2).all(|w| w[0].far <= w[1].far));
        for p in &r.openset_map_far {
            assert!((0.0..=1.0).contains(&p.far) && (0.0..=1.0).contains(&p.map));
        }
        assert_eq!(r.openset_map_far.last().unwrap().map, r.map);
        let json = r.to_json().unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(json.contains("\"-inf\""));
        assert!(r.to_text().contains("mAP"));
    }

    #[test]
    fn closed_set_only_report() {
        let (g, _) = sample();
        let r = evaluate(&g, &[], &EvalConfig::default()).unwrap();
        assert!(r.openset_map_far.is_empty() && r.dir_table.is_empty());
        let (_, i) = sample();
        assert!(evaluate(&i, &[], &EvalConfig::default()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let list = CandidateList::from_unsorted(vec![
            Candidate { id: 4, score: 0.25 },
            Candidate { id: 2, score: 0.75 },
        ]);
        let lines = vec![
            ResultLine::new(7, &list, 0.5),
            ResultLine::new(8, &list, 0.9),
        ];
        assert!(lines[0].accepted && !lines[1].accepted);
        assert_eq!(lines[0].results[0].gallery_id, 2);
        assert_eq!(lines[0].results[1].rank, 2);
        let mut buf = Vec::new();
        write_results_jsonl(&mut buf, &lines).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        let back = read_results_jsonl(&buf[..]).unwrap();
        assert_eq!(back, lines);
        assert_eq!(back[0].candidates(), list);
        assert!(read_results_jsonl(&b"{\"probe_id\": 1}\n"[..]).is_err());
    }

    #[test]
    fn ground_truth_split() {
        let list = CandidateList::from_unsorted(vec![Candidate { id: 1, score: 0.5 }]);
        let lines = vec![
            ResultLine::new(100, &list, 0.0),
            ResultLine::new(101, &list, 0.0),
        ];
        let probes: HashMap<u64, Option<String>> =
            [(100, Some("a".to_string())), (101, Some("zz".to_string()))]
                .into_iter()
                .collect();
        let (g, i) = attach_ground_truth(
            &lines,
            &probes,
            &[1, 2],
            &[Some("a".into()), Some("a".into())],
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].mates.len(), 2);
        assert_eq!(i.len(), 1);
        assert!(attach_ground_truth(&lines, &HashMap::new(), &[], &[]).is_err());
    }
}
