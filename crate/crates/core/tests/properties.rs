//! Property tests against independent test-side oracles.

use approx::assert_relative_eq;
use pqcascade::embedding::{
    decode_vectors, encode_vectors, generate_synthetic, pca_fit, pca_transform, SyntheticConfig,
};
use pqcascade::filter::{build_index, search_pq};
use pqcascade::quantizer::{adc_distance, build_distance_table, decode, encode, PqCodebook};
use pqcascade::rerank::{rerank, zscore_normalize};
use pqcascade::{CandidateList, Dataset, EmbeddingRecord, FusionStrategy};
use proptest::prelude::*;

fn dataset(dim: usize, rows: &[Vec<f32>]) -> Dataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, v)| EmbeddingRecord {
            id: i as u64,
            subject: None,
            well_aligned: true,
            vector: v.clone(),
        })
        .collect();
    Dataset::from_records(dim, records).unwrap()
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum()
}

/// Leading eigenpair of the population covariance by power iteration.
fn power_iteration(rows: &[Vec<f32>], dim: usize) -> (f64, Vec<f64>) {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| f64::from(r[j])).sum::<f64>() / n)
        .collect();
    let cov = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for r in rows {
            let proj: f64 = (0..dim).map(|j| (f64::from(r[j]) - mean[j]) * v[j]).sum();
            for j in 0..dim {
                out[j] += proj * (f64::from(r[j]) - mean[j]) / n;
            }
        }
        out
    };
    let mut v: Vec<f64> = (0..dim).map(|j| 1.0 + j as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let w = cov(&v);
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / lambda).collect();
    }
    (lambda, v)
}

#[test]
fn pca_leading_direction_matches_power_iteration() {
    // Axis scales 5, 2, 1, 0.5 with a rotation mixing the first two axes.
    let data = generate_synthetic(&SyntheticConfig::new(400, 1, 4, 0.0, 0.0, 11)).unwrap();
    let (c, s) = (0.8f32, 0.6f32);
    let rows: Vec<Vec<f32>> = data
        .vectors()
        .chunks_exact(4)
        .map(|v| {
            let (a, b) = (5.0 * v[0], 2.0 * v[1]);
            vec![c * a - s * b, s * a + c * b, v[2], 0.5 * v[3]]
        })
        .collect();
    let model = pca_fit(&dataset(4, &rows), 2).unwrap();
    let (lambda, v) = power_iteration(&rows, 4);
    assert_relative_eq!(model.explained_variance[0], lambda, max_relative = 1e-6);
    let dot: f64 = model
        .basis_row(0)
        .iter()
        .zip(&v)
        .map(|(&b, &x)| f64::from(b) * x)
        .sum();
    assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-5);

    // Variance of the projected data equals the explained variance.
    for i in 0..2 {
        let proj: Vec<f64> = rows
            .iter()
            .map(|r| f64::from(pca_transform(&model, r).unwrap()[i]))
            .collect();
        let mean = proj.iter().sum::<f64>() / proj.len() as f64;
        let var = proj.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / proj.len() as f64;
        assert_relative_eq!(var, model.explained_variance[i], max_relative = 1e-4);
    }
}

fn codebook_strategy() -> impl Strategy<Value = PqCodebook> {
    (1usize..=4, 1usize..=4, 1usize..=6).prop_flat_map(|(m, s, z)| {
        prop::collection::vec(-1.0f32..1.0, m * z * s)
            .prop_map(move |c| PqCodebook::new(m, z, m * s, c).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pca_basis_is_orthonormal(rows in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 5), 6..30)) {
        let model = pca_fit(&dataset(5, &rows), 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = model.basis_row(i).iter().zip(model.basis_row(j)).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - expected).abs() < 1e-4, "rows {i},{j}: {dot}");
            }
        }
        prop_assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn encode_picks_nearest_centroid(cb in codebook_strategy(), seed in any::<u64>()) {
        let s = cb.sub_dim();
        let v: Vec<f32> = (0..cb.dim()).map(|j| ((seed.wrapping_mul(j as u64 + 1) % 1000) as f32 / 500.0) - 1.0).collect();
        let code = encode(&cb, &v).unwrap();
        for i in 0..cb.m() {
            let sub = &v[i * s..(i + 1) * s];
            let best = (0..cb.z())
                .min_by(|&a, &b| sq_dist(sub, cb.centroid(i, a)).total_cmp(&sq_dist(sub, cb.centroid(i, b))).then(a.cmp(&b)))
                .unwrap();
            let chosen = code.indices()[i] as usize;
            prop_assert!(sq_dist(sub, cb.centroid(i, chosen)) <= sq_dist(sub, cb.centroid(i, best)));
        }
        let table = build_distance_table(&cb, &v).unwrap();
        let oracle = sq_dist(&v, &decode(&cb, &code).unwrap());
        prop_assert!((adc_distance(&table, &code).unwrap() - oracle).abs() <= 1e-9 * (1.0 + oracle));
    }

    #[test]
    fn vector_file_round_trip(dim in 1usize..8, rows in 0usize..6, seed in any::<u32>()) {
        let vectors: Vec<f32> = (0..dim * rows).map(|i| (seed as f32) * 1e-3 - i as f32).collect();
        let bytes = encode_vectors(dim, &vectors).unwrap();
        prop_assert_eq!(decode_vectors(&bytes).unwrap(), (dim, vectors));
    }

    #[test]
    fn zscore_has_zero_mean_unit_variance(xs in prop::collection::vec(-100.0f64..100.0, 2..50)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-6));
        let z = zscore_normalize(&xs).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cots_only_rerank_sorts_by_slow_score(slow in prop::collection::vec(-5.0f64..5.0, 2..30)) {
        let fast = CandidateList::from_unsorted(
            slow.iter().enumerate().map(|(i, _)| pqcascade::Candidate { id: i as u64, score: 1.0 - i as f64 * 0.01 }).collect(),
        );
        let out = rerank(&fast, &slow, FusionStrategy::DfThenCotsOnly).unwrap();
        let mut order: Vec<usize> = (0..slow.len()).collect();
        order.sort_by(|&a, &b| slow[b].total_cmp(&slow[a]).then(a.cmp(&b)));
        prop_assert_eq!(out.ids(), order.iter().map(|&i| i as u64).collect::<Vec<_>>());
    }
}

#[test]
fn pq_search_agrees_with_brute_force_adc() {
    let dim = 16;
    let gallery = generate_synthetic(&SyntheticConfig::new(500, 1, dim, 0.0, 0.0, 3)).unwrap();
    let queries = generate_synthetic(&SyntheticConfig::new(20, 1, dim, 0.0, 0.0, 4)).unwrap();
    let cb = pqcascade::quantizer::train_codebooks(&gallery, 4, 16, 10, 5).unwrap();
    let index = build_index(&gallery, &cb, false).unwrap();
    let k = 25;
    for q in queries.vectors().chunks_exact(dim) {
        let got = search_pq(&index, q, k).unwrap();
        let mut oracle: Vec<(u64, f64)> = gallery
            .vectors()
            .chunks_exact(dim)
            .zip(gallery.ids())
            .map(|(g, &id)| {
                let code = encode(&cb, g).unwrap();
                (id, 1.0 - sq_dist(q, &decode(&cb, &code).unwrap()) / 2.0)
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(got.len(), k);
        for c in got.entries() {
            let expected = oracle.iter().find(|(id, _)| *id == c.id).unwrap().1;
            assert_relative_eq!(c.score, expected, epsilon = 1e-5);
        }
        let kth_oracle = oracle[k - 1].1;
        assert!(got.entries().last().unwrap().score >= kth_oracle - 1e-5);
        assert!(got.scores().windows(2).all(|w| w[0] >= w[1]));
    }
}
