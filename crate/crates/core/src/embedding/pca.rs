use nalgebra::{DMatrix, SymmetricEigen};

use super::Dataset;
use crate::error::{invalid, Error, Result};

/// Linear projection onto the leading principal directions of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f32>,
    /// `target_dim × dim`, row-major, rows orthonormal.
    pub basis: Vec<f32>,
    /// Variance captured by each basis row (population covariance), descending.
    pub explained_variance: Vec<f64>,
    pub target_dim: usize,
    pub dim: usize,
}

impl PcaModel {
    pub fn basis_row(&self, i: usize) -> &[f32] {
        &self.basis[i * self.dim..(i + 1) * self.dim]
    }
}

/// Fit PCA by eigendecomposition of the population covariance matrix.
///
/// Basis rows are ordered by decreasing eigenvalue; each row is signed so
/// that its first nonzero component is positive.
pub fn pca_fit(dataset: &Dataset, target_dim: usize) -> Result<PcaModel> {
    let dim = dataset.dim();
    let n = dataset.len();
    if target_dim == 0 || target_dim > dim {
        return Err(invalid(format!(
            "target_dim must lie in 1..={dim}, got {target_dim}"
        )));
    }
    if n < target_dim || n == 0 {
        return Err(Error::InsufficientData(format!(
            "PCA to {target_dim} dimensions needs at least {target_dim} records, got {n}"
        )));
    }

    let mut mean = vec![0f64; dim];
    for row in dataset.vectors().chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0f64; dim];
    for row in dataset.vectors().chunks_exact(dim) {
        for ((c, &v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = f64::from(v) - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut basis = Vec::with_capacity(target_dim * dim);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for &col in order.iter().take(target_dim) {
        let v = eig.eigenvectors.column(col);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| x.signum());
        basis.extend(v.iter().map(|&x| (sign * x) as f32));
        explained_variance.push(eig.eigenvalues[col].max(0.0));
    }

    Ok(PcaModel {
        mean: mean.into_iter().map(|m| m as f32).collect(),
        basis,
        explained_variance,
        target_dim,
        dim,
    })
}

/// `basis · (vector − mean)`.
pub fn pca_transform(model: &PcaModel, vector: &[f32]) -> Result<Vec<f32>> {
    if vector.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: vector.len(),
        });
    }
    Ok((0..model.target_dim)
        .map(|i| {
            model
                .basis_row(i)
                .iter()
                .zip(vector)
                .zip(&model.mean)
                .map(|((&b, &x), &m)| f64::from(b) * (f64::from(x) - f64::from(m)))
                .sum::<f64>() as f32
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingRecord;

    fn dataset(dim: usize, rows: &[Vec<f32>]) -> Dataset {
        Dataset::from_records(
            dim,
            rows.iter()
                .enumerate()
                .map(|(i, v)| EmbeddingRecord {
                    id: i as u64,
                    subject: None,
                    well_aligned: true,
                    vector: v.clone(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn points_on_a_line() {
        let dir = [1.0f32, 2.0, -2.0];
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|t| dir.iter().map(|d| d * t as f32 + 0.5).collect())
            .collect();
        let model = pca_fit(&dataset(3, &rows), 1).unwrap();
        let row = model.basis_row(0);
        // (1,2,-2)/3 with the positive-first-component convention.
        let expected = [1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0];
        for (a, b) in row.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{row:?}");
        }
    }

    #[test]
    fn vector_equal_to_mean_maps_to_zero() {
        let rows = vec![
            vec![1.0, 0.0, 2.0],
            vec![3.0, 2.0, 0.0],
            vec![2.0, 7.0, 1.0],
        ];
        let model = pca_fit(&dataset(3, &rows), 2).unwrap();
        let out = pca_transform(&model, &model.mean.clone()).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn identity_basis_takes_prefix() {
        let model = PcaModel {
            mean: vec![0.0; 4],
            basis: vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            explained_variance: vec![1.0, 1.0],
            target_dim: 2,
            dim: 4,
        };
        assert_eq!(
            pca_transform(&model, &[5.0, -1.0, 3.0, 9.0]).unwrap(),
            vec![5.0, -1.0]
        );
    }

    #[test]
    fn hand_multiplied_projection() {
        // basis = [[0.6, 0.8, 0], [0, 0, 1]], mean = (1, 1, 1), x = (2, 3, -1)
        // x - mean = (1, 2, -2) -> (0.6 + 1.6, -2) = (2.2, -2)
        let model = PcaModel {
            mean: vec![1.0; 3],
            basis: vec![0.6, 0.8, 0.0, 0.0, 0.0, 1.0],
            explained_variance: vec![2.0, 1.0],
            target_dim: 2,
            dim: 3,
        };
        let out = pca_transform(&model, &[2.0, 3.0, -1.0]).unwrap();
        assert!((out[0] - 2.2).abs() < 1e-6);
        assert!((out[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let ds = dataset(2, &rows);
        assert!(pca_fit(&ds, 3).is_err());
        assert!(pca_fit(&ds.prefix(1), 2).is_err());
        let model = pca_fit(&ds, 1).unwrap();
        assert!(matches!(
            pca_transform(&model, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
