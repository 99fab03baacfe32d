//! PCA fitted on the training prefix only, with two exact routes: the d×d
//! covariance eigendecomposition when samples outnumber dimensions, and the
//! n×n Gram-matrix route otherwise, so a very high-dimensional sparse
//! dataset never materializes its covariance densely.

use nalgebra::{DMatrix, SymmetricEigen};

use super::io::SparseRow;
use super::{Dataset, SparseDataset, StreamError};
use crate::types::{LabeledSample, Sample};

/// Mean vector plus orthonormal principal directions (rows), with a
/// deterministic sign convention: the largest-magnitude coordinate of each
/// component is positive.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    /// Variance explained by each retained component (covariance scale,
    /// 1/n divisor).
    eigenvalues: Vec<f64>,
    /// Cached `component · mean` per component, for sparse transforms.
    component_dot_mean: Vec<f64>,
}

impl PcaModel {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Projects a centered vector onto the components.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "dimension mismatch in transform");
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((ci, xi), mi)| ci * (xi - mi))
                    .sum()
            })
            .collect()
    }

    /// Sparse projection: only the active coordinates contribute beyond the
    /// precomputed mean offset.
    pub fn transform_sparse(&self, row: &SparseRow) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.component_dot_mean)
            .map(|(c, dot_mean)| {
                row.iter().map(|(i, v)| c[*i as usize] * v).sum::<f64>() - dot_mean
            })
            .collect()
    }

    /// Projects a sample, preserving its arrival index.
    pub fn transform_sample(&self, s: &Sample) -> Sample {
        Sample::new(self.transform(s.features()), s.t()).expect("projection of finite input is finite")
    }
}

fn finish_model(
    mean: Vec<f64>,
    mut components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
) -> PcaModel {
    for c in &mut components {
        // Sign convention: flip so the largest-magnitude coordinate is positive.
        let lead = c
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if c[lead] < 0.0 {
            for v in c.iter_mut() {
                *v = -*v;
            }
        }
    }
    let component_dot_mean = components
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(a, b)| a * b).sum())
        .collect();
    PcaModel {
        mean,
        components,
        eigenvalues,
        component_dot_mean,
    }
}

/// Eigenvalues sorted descending with their original indices; rank counts
/// those above a relative tolerance.
fn ranked_eigenvalues(eigen: &SymmetricEigen<f64, nalgebra::Dyn>) -> (Vec<(usize, f64)>, usize) {
    let mut order: Vec<(usize, f64)> = eigen
        .eigenvalues
        .iter()
        .copied()
        .map(|l| l.max(0.0))
        .enumerate()
        .collect();
    order.sort_by(|(_, a), (_, b)| b.total_cmp(a));
    let lead = order.first().map(|(_, l)| *l).unwrap_or(0.0);
    let tol = (lead * 1e-9).max(1e-12);
    let rank = order.iter().filter(|(_, l)| *l > tol).count();
    (order, rank)
}

fn validate_shape(n: usize, d: usize, out_dim: usize) -> Result<(), StreamError> {
    if out_dim == 0 || out_dim > d {
        return Err(StreamError::BadOutDim {
            requested: out_dim,
            dim: d,
        });
    }
    if n <= out_dim {
        return Err(StreamError::TooFewSamples {
            samples: n,
            requested: out_dim,
        });
    }
    Ok(())
}

/// Fits PCA on dense rows. Uses the covariance route when rows outnumber
/// dimensions and the Gram route otherwise.
pub fn fit_pca(rows: &[Vec<f64>], out_dim: usize) -> Result<PcaModel, StreamError> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    validate_shape(n, d, out_dim)?;
    if rows.iter().any(|r| r.len() != d) {
        return Err(StreamError::InvalidSpec("pca rows must share one dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    if n >= d {
        // Covariance route.
        let mut cov = DMatrix::zeros(d, d);
        for row in rows {
            let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in i..d {
                    cov[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] /= n as f64;
                cov[(j, i)] = cov[(i, j)];
            }
        }
        let eigen = SymmetricEigen::new(cov);
        let (order, rank) = ranked_eigenvalues(&eigen);
        if rank < out_dim {
            return Err(StreamError::RankDeficient {
                rank,
                requested: out_dim,
            });
        }
        let components: Vec<Vec<f64>> = order[..out_dim]
            .iter()
            .map(|(idx, _)| eigen.eigenvectors.column(*idx).iter().copied().collect())
            .collect();
        let eigenvalues = order[..out_dim].iter().map(|(_, l)| *l).collect();
        Ok(finish_model(mean, components, eigenvalues))
    } else {
        // Gram route on centered rows.
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = dot;
                gram[(j, i)] = dot;
            }
        }
        let eigen = SymmetricEigen::new(gram);
        let (order, rank) = ranked_eigenvalues(&eigen);
        if rank < out_dim {
            return Err(StreamError::RankDeficient {
                rank,
                requested: out_dim,
            });
        }
        let mut components = Vec::with_capacity(out_dim);
        let mut eigenvalues = Vec::with_capacity(out_dim);
        for (idx, lambda) in &order[..out_dim] {
            let u = eigen.eigenvectors.column(*idx);
            let mut v = vec![0.0; d];
            for (i, row) in centered.iter().enumerate() {
                for (vk, rk) in v.iter_mut().zip(row) {
                    *vk += u[i] * rk;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vk in &mut v {
                *vk /= norm;
            }
            components.push(v);
            eigenvalues.push(*lambda / n as f64);
        }
        Ok(finish_model(mean, components, eigenvalues))
    }
}

/// Fits PCA on sparse rows via the Gram route; the input dimension never
/// appears squared in memory.
pub fn fit_pca_sparse(
    rows: &[SparseRow],
    dim: usize,
    out_dim: usize,
) -> Result<PcaModel, StreamError> {
    let n = rows.len();
    validate_shape(n, dim, out_dim)?;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (i, v) in row {
            mean[*i as usize] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    let row_dot_mean: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|(i, v)| v * mean[*i as usize]).sum())
        .collect();

    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot = sparse_dot(&rows[i], &rows[j]);
            let centered = dot - row_dot_mean[i] - row_dot_mean[j] + mean_sq;
            gram[(i, j)] = centered;
            gram[(j, i)] = centered;
        }
    }
    let eigen = SymmetricEigen::new(gram);
    let (order, rank) = ranked_eigenvalues(&eigen);
    if rank < out_dim {
        return Err(StreamError::RankDeficient {
            rank,
            requested: out_dim,
        });
    }
    let mut components = Vec::with_capacity(out_dim);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for (idx, lambda) in &order[..out_dim] {
        let u = eigen.eigenvectors.column(*idx);
        let u_sum: f64 = u.iter().sum();
        let mut v = vec![0.0; dim];
        for (i, row) in rows.iter().enumerate() {
            for (k, val) in row {
                v[*k as usize] += u[i] * val;
            }
        }
        for (vk, mk) in v.iter_mut().zip(&mean) {
            *vk -= u_sum * mk;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for vk in &mut v {
            *vk /= norm;
        }
        components.push(v);
        eigenvalues.push(*lambda / n as f64);
    }
    Ok(finish_model(mean, components, eigenvalues))
}

fn sparse_dot(a: &SparseRow, b: &SparseRow) -> f64 {
    let mut dot = 0.0;
    let (mut ia, mut ib) = (0, 0);
    while ia < a.len() && ib < b.len() {
        match a[ia].0.cmp(&b[ib].0) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                dot += a[ia].1 * b[ib].1;
                ia += 1;
                ib += 1;
            }
        }
    }
    dot
}

/// PCA-reduces a sparse dataset to `out_dim` features. The model is fitted
/// on the leading `train_fraction` of the stream only and then applied to
/// every sample, so the reduction leaks nothing from the evaluation segment.
pub fn reduce_dataset(
    dataset: &SparseDataset,
    out_dim: usize,
    train_fraction: f64,
) -> Result<Dataset, StreamError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(StreamError::InvalidFraction(train_fraction));
    }
    let cut = (train_fraction * dataset.rows.len() as f64).floor() as usize;
    if cut == 0 {
        return Err(StreamError::EmptySegment("train"));
    }
    let model = fit_pca_sparse(&dataset.rows[..cut], dataset.dim, out_dim)?;
    let samples = dataset
        .rows
        .iter()
        .zip(&dataset.labels)
        .enumerate()
        .map(|(t, (row, label))| LabeledSample {
            sample: Sample::new(model.transform_sparse(row), t as u64)
                .expect("projection of finite input is finite"),
            label: *label,
        })
        .collect();
    Ok(Dataset {
        samples,
        n_classes: dataset.n_classes,
        dim: out_dim,
        name: format!("{}_pca{}", dataset.name, out_dim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|j| rng.random::<f64>() * (j + 1) as f64).collect())
            .collect()
    }

    #[test]
    fn axis_aligned_component_is_sign_fixed() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let model = fit_pca(&rows, 1).unwrap();
        let c = &model.components()[0];
        assert!((c[0] - 1.0).abs() < 1e-9, "component {c:?}");
        assert!(c[1].abs() < 1e-9);
    }

    #[test]
    fn full_rank_transform_is_an_isometry() {
        let rows = random_rows(40, 4, 5);
        let model = fit_pca(&rows, 4).unwrap();
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let orig: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let (ti, tj) = (model.transform(&rows[i]), model.transform(&rows[j]));
                let proj: f64 = ti
                    .iter()
                    .zip(&tj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!((orig - proj).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let rows = random_rows(50, 8, 11);
        let model = fit_pca(&rows, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = model.components()[i]
                    .iter()
                    .zip(&model.components()[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "c{i}·c{j} = {dot}");
            }
        }
    }

    #[test]
    fn reconstruction_error_matches_trailing_eigenvalues() {
        // Rank-k residual must equal the variance the dropped components
        // explain; checked against the full eigendecomposition.
        let rows = random_rows(50, 8, 17);
        let full = fit_pca(&rows, 8).unwrap();
        let total_var: f64 = full.eigenvalues().iter().sum();
        for k in [2usize, 4, 6] {
            let model = fit_pca(&rows, k).unwrap();
            let retained: f64 = model.eigenvalues().iter().sum();
            let mut residual = 0.0;
            for row in &rows {
                let centered_sq: f64 = row
                    .iter()
                    .zip(model.mean())
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum();
                let proj = model.transform(row);
                let proj_sq: f64 = proj.iter().map(|v| v * v).sum();
                residual += centered_sq - proj_sq;
            }
            residual /= rows.len() as f64;
            assert!(
                (residual - (total_var - retained)).abs() < 1e-6,
                "k={k}: residual {residual} vs expected {}",
                total_var - retained
            );
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        let rows = random_rows(30, 6, 23);
        // Covariance route (n >= d).
        let dense = fit_pca(&rows, 3).unwrap();
        // Gram route via the sparse entry point on the same data.
        let sparse_rows: Vec<SparseRow> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(i, v)| (i as u32, *v)).collect())
            .collect();
        let sparse = fit_pca_sparse(&sparse_rows, 6, 3).unwrap();
        for row in &rows {
            let a = dense.transform(row);
            let b = sparse.transform(row);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-8, "routes disagree: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn sparse_transform_matches_dense_transform() {
        let rows = random_rows(20, 7, 31);
        let sparse_rows: Vec<SparseRow> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(i, v)| (i as u32, *v)).collect())
            .collect();
        let model = fit_pca_sparse(&sparse_rows, 7, 4).unwrap();
        for (dense_row, sparse_row) in rows.iter().zip(&sparse_rows) {
            let a = model.transform(dense_row);
            let b = model.transform_sparse(sparse_row);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_deficient_input_reports_achievable_rank() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let err = fit_pca(&rows, 2).unwrap_err();
        match err {
            StreamError::RankDeficient { rank, requested } => {
                assert_eq!(rank, 1);
                assert_eq!(requested, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shape_violations_error() {
        let rows = random_rows(5, 8, 3);
        assert!(matches!(
            fit_pca(&rows, 8),
            Err(StreamError::TooFewSamples { .. })
        ));
        assert!(matches!(
            fit_pca(&rows, 9),
            Err(StreamError::BadOutDim { .. })
        ));
    }
}
