use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SparseVec, TermMatrix, TextError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 15,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub version: u32,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, final assignment included.
    pub inertia_history: Vec<f64>,
    pub assignments: Vec<usize>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn predict(&self, row: &SparseVec) -> usize {
        let norms: Vec<f64> = self.centroids.iter().map(|c| norm2(c)).collect();
        nearest(row, row.norm_squared(), &self.centroids, &norms).0
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn norm2(dense: &[f64]) -> f64 {
    dense.iter().map(|v| v * v).sum()
}

fn squared_distance(row: &SparseVec, row_norm2: f64, centroid: &[f64], centroid_norm2: f64) -> f64 {
    (row_norm2 + centroid_norm2 - 2.0 * row.dot_dense(centroid)).max(0.0)
}

fn nearest(
    row: &SparseVec,
    row_norm2: f64,
    centroids: &[Vec<f64>],
    norms: &[f64],
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, (c, &n)) in centroids.iter().zip(norms).enumerate() {
        let d = squared_distance(row, row_norm2, c, n);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Seeded farthest-point initialisation: a random first centre, then
/// repeatedly the row farthest from every chosen centre.
fn farthest_point_init(matrix: &TermMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = matrix.n_rows();
    let row_norms: Vec<f64> = matrix.rows.iter().map(SparseVec::norm_squared).collect();
    let first = rng.gen_range(0..n);
    let mut centroids = vec![matrix.rows[first].to_dense(matrix.n_cols)];
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(&matrix.rows[i], row_norms[i], &centroids[0], norm2(&centroids[0])))
        .collect();
    while centroids.len() < k {
        let mut pick = 0;
        for i in 1..n {
            if min_dist[i] > min_dist[pick] {
                pick = i;
            }
        }
        let centre = matrix.rows[pick].to_dense(matrix.n_cols);
        let cn = norm2(&centre);
        for i in 0..n {
            let d = squared_distance(&matrix.rows[i], row_norms[i], &centre, cn);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        centroids.push(centre);
    }
    centroids
}

/// Lloyd iterations from farthest-point seeding. Stops when every centroid
/// moves less than `tol` (Euclidean) or after `max_iter` updates. A cluster
/// left empty by an assignment is re-seeded at the row farthest from its
/// current centroid.
pub fn kmeans_fit(matrix: &TermMatrix, params: KMeansParams) -> Result<KMeansModel, TextError> {
    let n = matrix.n_rows();
    let k = params.k;
    if k == 0 || k > n {
        return Err(TextError::InvalidClusterCount { k, docs: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let row_norms: Vec<f64> = matrix.rows.iter().map(SparseVec::norm_squared).collect();
    let mut centroids = farthest_point_init(matrix, k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut assignments = vec![0usize; n];
    let mut distances = vec![0.0f64; n];

    let assign = |centroids: &[Vec<f64>], assignments: &mut [usize], distances: &mut [f64]| {
        let norms: Vec<f64> = centroids.iter().map(|c| norm2(c)).collect();
        let mut inertia = 0.0;
        for i in 0..n {
            let (j, d) = nearest(&matrix.rows[i], row_norms[i], centroids, &norms);
            assignments[i] = j;
            distances[i] = d;
            inertia += d;
        }
        inertia
    };

    while iterations < params.max_iter {
        history.push(assign(&centroids, &mut assignments, &mut distances));

        let mut sums = vec![vec![0.0; matrix.n_cols]; k];
        let mut counts = vec![0usize; k];
        for (row, &a) in matrix.rows.iter().zip(&assignments) {
            counts[a] += 1;
            for (idx, v) in row.iter() {
                sums[a][idx] += v;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for v in &mut sums[j] {
                    *v /= c;
                }
                continue;
            }
            let donor = (0..n)
                .filter(|i| !reseeded.contains(i))
                .max_by(|&a, &b| {
                    distances[a]
                        .partial_cmp(&distances[b])
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            reseeded.push(donor);
            log::debug!("k-means: cluster {j} empty, re-seeded at row {donor}");
            sums[j] = matrix.rows[donor].to_dense(matrix.n_cols);
        }

        let shift = centroids
            .iter()
            .zip(&sums)
            .map(|(old, new)| {
                old.iter()
                    .zip(new)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = sums;
        iterations += 1;
        if shift < params.tol && reseeded.is_empty() {
            break;
        }
    }

    let inertia = assign(&centroids, &mut assignments, &mut distances);
    history.push(inertia);
    Ok(KMeansModel {
        version: 1,
        centroids,
        seed: params.seed,
        inertia,
        iterations,
        inertia_history: history,
        assignments,
    })
}

/// The `n` highest-weight terms of a centroid, ties broken
/// lexicographically. Zero-weight terms are never listed.
pub fn top_terms(
    model: &KMeansModel,
    vocab: &Vocabulary,
    cluster: usize,
    n: usize,
) -> Vec<(String, f64)> {
    let Some(centroid) = model.centroids.get(cluster) else {
        return Vec::new();
    };
    let mut ranked: Vec<(usize, f64)> = centroid
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, w)| w > 0.0)
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| vocab.term(a.0).cmp(vocab.term(b.0)))
    });
    ranked
        .into_iter()
        .take(n)
        .map(|(i, w)| (vocab.term(i).to_string(), w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmodel::{metrics::adjusted_rand_index, tfidf_fit};

    fn params(k: usize, seed: u64) -> KMeansParams {
        KMeansParams {
            k,
            seed,
            max_iter: 100,
            tol: 1e-9,
        }
    }

    #[test]
    fn k_equal_to_distinct_rows_has_zero_inertia() {
        let m = TermMatrix::from_dense(&[vec![0.0, 1.0], vec![3.0, 0.5], vec![-2.0, 4.0]]);
        let model = kmeans_fit(&m, params(3, 1)).unwrap();
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn single_cluster_centroid_is_column_mean() {
        let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, 0.0, 1.0], vec![2.0, 7.0, 5.0]];
        let model = kmeans_fit(&TermMatrix::from_dense(&rows), params(1, 3)).unwrap();
        let expected = [2.0, 3.0, 2.0];
        for (got, want) in model.centroids[0].iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_clusters() {
        let m = TermMatrix::from_dense(&[vec![1.0]]);
        assert!(matches!(
            kmeans_fit(&m, params(2, 0)),
            Err(TextError::InvalidClusterCount { k: 2, docs: 1 })
        ));
        assert!(kmeans_fit(&m, params(0, 0)).is_err());
    }

    #[test]
    fn separated_blobs_recovered() {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..20 {
            let jitter = (i % 5) as f64 * 0.01;
            rows.push(vec![jitter, 0.1 - jitter]);
            truth.push(0);
            rows.push(vec![10.0 + jitter, 10.0 - jitter]);
            truth.push(1);
        }
        let model = kmeans_fit(&TermMatrix::from_dense(&rows), params(2, 7)).unwrap();
        assert_eq!(adjusted_rand_index(&truth, &model.assignments), 1.0);
        for pair in model.inertia_history.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64])
            .collect();
        let m = TermMatrix::from_dense(&rows);
        let a = kmeans_fit(&m, params(4, 11)).unwrap();
        let b = kmeans_fit(&m, params(4, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn top_terms_ranking_and_ties() {
        let docs: Vec<Vec<String>> = vec![vec!["vaccine".into(), "mask".into()]];
        let vocab = tfidf_fit(&docs).unwrap();
        let model = KMeansModel {
            version: 1,
            centroids: vec![vec![0.5, 0.5], vec![0.0, 0.9]],
            seed: 0,
            inertia: 0.0,
            iterations: 0,
            inertia_history: vec![],
            assignments: vec![],
        };
        let tied = top_terms(&model, &vocab, 0, 2);
        assert_eq!(tied[0].0, "mask");
        assert_eq!(tied[1].0, "vaccine");
        let single = top_terms(&model, &vocab, 1, 10);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].0, "vaccine");
    }
}
