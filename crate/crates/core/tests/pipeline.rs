//! End-to-end: generate, persist, index, search, re-rank and evaluate.

use std::collections::HashMap;

use pqcascade::embedding::{generate_synthetic, load_dataset, save_dataset, SyntheticConfig};
use pqcascade::eval::{
    attach_ground_truth, evaluate, read_results_jsonl, write_results_jsonl, EvalConfig, ResultLine,
};
use pqcascade::filter::{build_index, load_index, save_index, search_pq_batch};
use pqcascade::quantizer::{load_codebook, save_codebook, train_codebooks};
use pqcascade::rerank::{cascade_search_batch, ReferenceSlowMatcher};
use pqcascade::FusionStrategy;
use tempfile::TempDir;

#[test]
fn pipeline_through_files() {
    let dir = TempDir::new().unwrap();
    let all = generate_synthetic(&SyntheticConfig::new(80, 3, 32, 0.08, 0.1, 21)).unwrap();
    let probe_rows: Vec<usize> = (0..all.len()).filter(|r| r % 3 == 0).collect();
    let gallery_rows: Vec<usize> = (0..all.len()).filter(|r| r % 3 != 0).collect();
    let mut gallery = all.select(&gallery_rows).unwrap();
    let distractors = generate_synthetic(
        &SyntheticConfig::new(2000, 1, 32, 0.08, 0.1, 22)
            .with_ids_from(10_000)
            .with_prefix("d"),
    )
    .unwrap();
    gallery.extend(&distractors).unwrap();
    let probes = all.select(&probe_rows).unwrap();

    let gpath = dir.path().join("g.fvec");
    save_dataset(&gallery, &gpath).unwrap();
    let gallery = load_dataset(&gpath).unwrap();
    assert_eq!(gallery.len(), 160 + 2000);

    let cb = train_codebooks(&gallery, 8, 64, 15, 1).unwrap();
    let cpath = dir.path().join("cb.pqcb");
    save_codebook(&cb, &cpath).unwrap();
    assert_eq!(load_codebook(&cpath).unwrap(), cb);

    let index = build_index(&gallery, &cb, true).unwrap();
    let ipath = dir.path().join("g.pqix");
    save_index(&index, &ipath).unwrap();
    let index = load_index(&ipath).unwrap();

    let fast = search_pq_batch(&index, &probes, 50).unwrap();
    let matcher = ReferenceSlowMatcher::new(&index, 0.0, 5).unwrap();
    let cascade =
        cascade_search_batch(&index, &matcher, &probes, 50, FusionStrategy::DfThenCots).unwrap();

    let lines = |lists: &[pqcascade::CandidateList]| -> Vec<ResultLine> {
        probes
            .ids()
            .iter()
            .zip(lists)
            .map(|(&id, l)| ResultLine::new(id, l, f64::NEG_INFINITY))
            .collect()
    };
    let mut buf = Vec::new();
    write_results_jsonl(&mut buf, &lines(&cascade)).unwrap();
    let cascade_lines = read_results_jsonl(buf.as_slice()).unwrap();
    assert_eq!(cascade_lines, lines(&cascade));

    let probe_subjects: HashMap<u64, Option<String>> = probes
        .ids()
        .iter()
        .copied()
        .zip(probes.subjects().iter().cloned())
        .collect();
    let score = |ls: &[ResultLine]| {
        let (g, i) =
            attach_ground_truth(ls, &probe_subjects, gallery.ids(), gallery.subjects()).unwrap();
        assert_eq!((g.len(), i.len()), (80, 0));
        evaluate(&g, &i, &EvalConfig::default()).unwrap().map
    };
    let fast_map = score(&lines(&fast));
    let cascade_map = score(&cascade_lines);
    // Exact re-ranking of the PQ shortlist cannot lose to PQ alone by much.
    assert!(fast_map > 0.5, "fast mAP {fast_map}");
    assert!(
        cascade_map >= fast_map - 0.02,
        "cascade {cascade_map} vs fast {fast_map}"
    );
}
