//! Lloyd's k-means with seeded-shuffle initialization.
//!
//! Deterministic: the same vectors, k, and seed always give the same
//! centroids and assignments. Empty clusters are repaired by reseeding them
//! with the point farthest from its current centroid, which keeps the
//! objective non-increasing.

use crate::error::{Error, Result};
use crate::num::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult<T> {
    pub centroids: Vec<Vec<T>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of every point to its assigned centroid.
    pub objective: T,
    pub iterations: usize,
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

fn nearest<T: Real>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = 0;
    let mut best_d = squared_distance(point, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Clusters `vectors` into k groups.
///
/// Initial centroids are k distinct input points chosen by a seeded shuffle.
/// Iteration stops when assignments are stable or after `max_iters` rounds.
pub fn kmeans<T: Real>(
    vectors: &[Vec<T>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansResult<T>> {
    if k == 0 || max_iters == 0 {
        return Err(Error::InvalidConfig(
            "kmeans needs k >= 1 and max_iters >= 1".to_string(),
        ));
    }
    let dim = match vectors.first() {
        Some(v) => v.len(),
        None => return Err(Error::TooManyClusters { k, distinct: 0 }),
    };
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{dim}"),
                actual: format!("{}", v.len()),
            });
        }
    }

    let mut distinct: Vec<&Vec<T>> = Vec::new();
    for v in vectors {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    if k > distinct.len() {
        return Err(Error::TooManyClusters {
            k,
            distinct: distinct.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let mut centroids: Vec<Vec<T>> = distinct[..k].iter().map(|v| (*v).clone()).collect();

    let mut assignments = vec![0usize; vectors.len()];
    let mut objective = T::zero();
    let mut iterations = 0;
    for iter in 1..=max_iters {
        iterations = iter;
        let mut next: Vec<usize> = Vec::with_capacity(vectors.len());
        let mut distances: Vec<T> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let (j, d) = nearest(v, &centroids);
            next.push(j);
            distances.push(d);
        }

        // Reseed any empty cluster with the globally farthest point.
        let mut counts = vec![0usize; k];
        for &j in &next {
            counts[j] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..vectors.len())
                .filter(|&i| counts[next[i]] > 1)
                .max_by(|&a, &b| distances[a].partial_cmp(&distances[b]).unwrap())
                .expect("some cluster has more than one point");
            counts[next[far]] -= 1;
            counts[empty] += 1;
            centroids[empty] = vectors[far].clone();
            next[far] = empty;
            distances[far] = T::zero();
        }

        objective = distances.into_iter().sum();
        let stable = iter > 1 && next == assignments;
        assignments = next;
        if stable {
            break;
        }

        let mut sums = vec![vec![T::zero(); dim]; k];
        for (v, &j) in vectors.iter().zip(&assignments) {
            for (s, &x) in sums[j].iter_mut().zip(v) {
                *s += x;
            }
        }
        for (j, sum) in sums.into_iter().enumerate() {
            let count = T::from_usize(counts[j]).unwrap();
            centroids[j] = sum.into_iter().map(|s| s / count).collect();
        }
    }

    Ok(KmeansResult {
        centroids,
        assignments,
        objective,
        iterations,
    })
}

/// Objective value of an (assignments, centroids) pair; what [`kmeans`]
/// minimizes.
pub fn kmeans_objective<T: Real>(
    vectors: &[Vec<T>],
    centroids: &[Vec<T>],
    assignments: &[usize],
) -> T {
    vectors
        .iter()
        .zip(assignments)
        .map(|(v, &j)| squared_distance(v, &centroids[j]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn k1_centroid_is_the_mean() {
        let vectors = vec![
            vec![1.0f64, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
            vec![7.0, 0.0],
        ];
        let result = kmeans(&vectors, 1, 0, 100).unwrap();
        assert!((result.centroids[0][0] - 4.0).abs() < 1e-12);
        assert!((result.centroids[0][1] - 3.0).abs() < 1e-12);
        assert!(result.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_equals_n_gives_zero_objective() {
        let vectors = vec![vec![0.0f64, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let result = kmeans(&vectors, 3, 7, 100).unwrap();
        assert_eq!(result.objective, 0.0);
    }

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Vec::new();
        let mut truth = Vec::new();
        for (b, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..20 {
                let dx: f64 = rng.gen_range(-0.1..0.1);
                let dy: f64 = rng.gen_range(-0.1..0.1);
                vectors.push(vec![cx + dx, cy + dy]);
                truth.push(b);
            }
        }
        (vectors, truth)
    }

    #[test]
    fn three_blobs_recovered_exactly() {
        let (vectors, truth) = blobs(42);
        let result = kmeans(&vectors, 3, 5, 100).unwrap();
        // Same cluster iff same blob, up to label permutation.
        for i in 0..vectors.len() {
            for j in 0..vectors.len() {
                assert_eq!(
                    result.assignments[i] == result.assignments[j],
                    truth[i] == truth[j],
                    "points {i} and {j} split incorrectly"
                );
            }
        }
        // And the fixed point holds: every point sits nearest its centroid.
        for (v, &a) in vectors.iter().zip(&result.assignments) {
            let (nearest_j, _) = nearest(v, &result.centroids);
            assert_eq!(nearest_j, a);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (vectors, _) = blobs(1);
        let a = kmeans(&vectors, 3, 9, 100).unwrap();
        let b = kmeans(&vectors, 3, 9, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let vectors = vec![vec![1.0f64], vec![1.0], vec![2.0]];
        let err = kmeans(&vectors, 3, 0, 10).unwrap_err();
        assert!(matches!(
            err,
            Error::TooManyClusters { k: 3, distinct: 2 }
        ));
    }

    #[test]
    fn objective_matches_reported() {
        let (vectors, _) = blobs(3);
        let result = kmeans(&vectors, 3, 11, 100).unwrap();
        let recomputed = kmeans_objective(&vectors, &result.centroids, &result.assignments);
        assert!((result.objective - recomputed).abs() < 1e-9);
    }

    #[test]
    fn runs_at_f32() {
        let vectors = vec![vec![0.0f32, 0.0], vec![4.0, 0.0], vec![0.0, 4.0], vec![4.0, 4.0]];
        let result = kmeans(&vectors, 2, 0, 50).unwrap();
        assert_eq!(result.centroids.len(), 2);
    }
}
