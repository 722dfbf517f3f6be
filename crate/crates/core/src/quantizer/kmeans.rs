//! Lloyd's k-means over a dense row-major buffer.
//!
//! Seeding is k-means++ (D²-weighted sampling). Clusters that lose all their
//! members are re-seeded with the point farthest from its own centroid.

use rand::Rng;

/// Outcome of one k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    /// Within-cluster SSE measured after every assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

/// Stop once the relative SSE improvement falls below this.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITERS: usize = 25;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the smallest index.
pub fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: the first center is uniform, each later one is drawn
/// with probability proportional to its squared distance from the chosen set.
pub fn kmeans_plus_plus(data: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = data.len() / dim;
    assert!(n >= 1 && k >= 1);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);

    let mut d2: Vec<f64> = data
        .chunks_exact(dim)
        .map(|p| sq_dist(p, &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Floating round-off can walk past the end; fall back to the last positive weight.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(&data[pick * dim..(pick + 1) * dim]);
        let c = &centroids[start..];
        for (w, p) in d2.iter_mut().zip(data.chunks_exact(dim)) {
            let d = sq_dist(p, c);
            if d < *w {
                *w = d;
            }
        }
    }
    centroids
}

/// Lloyd iterations from the given initial centroids.
pub fn lloyd(
    data: &[f64],
    dim: usize,
    mut centroids: Vec<f64>,
    max_iters: usize,
    tolerance: f64,
) -> KMeansFit {
    let n = data.len() / dim;
    let k = centroids.len() / dim;
    let mut assignment = vec![0usize; n];
    let mut point_err = vec![0f64; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut sse = 0.0;
        for (i, p) in data.chunks_exact(dim).enumerate() {
            let (j, d) = nearest(p, &centroids, dim);
            assignment[i] = j;
            point_err[i] = d;
            sse += d;
        }
        let converged = match sse_history.last() {
            Some(&prev) => prev <= 0.0 || (prev - sse) / prev < tolerance,
            None => sse == 0.0,
        };
        sse_history.push(sse);
        if converged || iterations == max_iters {
            break;
        }
        update_centroids(
            data,
            dim,
            k,
            &mut assignment,
            &mut point_err,
            &mut centroids,
        );
    }

    KMeansFit {
        centroids,
        sse_history,
        iterations,
    }
}

fn update_centroids(
    data: &[f64],
    dim: usize,
    k: usize,
    assignment: &mut [usize],
    point_err: &mut [f64],
    centroids: &mut [f64],
) {
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    let empties: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    for empty in empties {
        // Farthest point from its own centroid among clusters that can spare one.
        let donor = (0..assignment.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| point_err[a].total_cmp(&point_err[b]).then(b.cmp(&a)));
        let Some(donor) = donor else { break };
        counts[assignment[donor]] -= 1;
        assignment[donor] = empty;
        counts[empty] = 1;
        point_err[donor] = 0.0;
    }

    let mut sums = vec![0f64; k * dim];
    for (p, &a) in data.chunks_exact(dim).zip(assignment.iter()) {
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let inv = counts[j] as f64;
        for (c, s) in centroids[j * dim..(j + 1) * dim]
            .iter_mut()
            .zip(&sums[j * dim..(j + 1) * dim])
        {
            *c = s / inv;
        }
    }
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn sse(data: &[f64], dim: usize, centroids: &[f64]) -> f64 {
    data.chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim).1)
        .sum()
}
