use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ClusterAssignment;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// One row per cluster, in canonical cluster-id order.
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid after each Lloyd
    /// iteration (assignment, empty-cluster repair, centroid update).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

pub fn kmeans(
    vectors: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    Ok(kmeans_fit(vectors, k, seed, max_iter)?.assignment)
}

/// Lloyd's algorithm with k-means++ seeding and a single restart.
///
/// `k` is clamped to the number of vectors, in which case every vector is
/// its own cluster. An emptied cluster takes over the point farthest from its
/// centroid among clusters with at least two members.
pub fn kmeans_fit(
    vectors: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansFit> {
    let n = vectors.nrows();
    if n == 0 {
        return Err(Error::DegenerateInput("k-means on an empty input".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k-means needs k >= 1".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("k-means needs max_iter >= 1".into()));
    }
    if k >= n {
        return Ok(KMeansFit {
            assignment: ClusterAssignment::singletons(n),
            centroids: vectors.to_owned(),
            objective_trace: vec![0.0],
            iterations: 0,
        });
    }

    let rows: Vec<Vec<f64>> = vectors.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(&rows, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let next: Vec<usize> = rows.par_iter().map(|x| nearest(x, &centroids)).collect();
        let changed = next != labels;
        labels = next;
        repair_empty(&rows, &mut labels, &mut centroids);
        centroids = means(&rows, &labels, k);
        trace.push(objective(&rows, &labels, &centroids));
        if !changed {
            break;
        }
    }

    let assignment = ClusterAssignment::from_labels(labels.iter().copied());
    // canonical order: cluster c of the assignment is raw label order[c]
    let mut order = vec![usize::MAX; k];
    for (&raw, &canon) in labels.iter().zip(assignment.labels()) {
        order[canon] = raw;
    }
    let dim = vectors.ncols();
    let mut out = Array2::zeros((k, dim));
    for (c, &raw) in order.iter().enumerate() {
        for (d, &x) in centroids[raw].iter().enumerate() {
            out[[c, d]] = x;
        }
    }
    Ok(KMeansFit {
        assignment,
        centroids: out,
        objective_trace: trace,
        iterations,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(x, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![rows[first].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|x| sq_dist(x, &rows[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        for (d, x) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(x, &rows[pick]));
        }
        centroids.push(rows[pick].clone());
    }
    centroids
}

fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, x) in rows.iter().enumerate() {
            let l = labels[i];
            if sizes[l] < 2 {
                continue;
            }
            let d = sq_dist(x, &centroids[l]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let p = far.expect("k <= n guarantees a cluster with two members");
        sizes[labels[p]] -= 1;
        labels[p] = empty;
        sizes[empty] = 1;
        centroids[empty] = rows[p].clone();
    }
}

fn means(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

fn objective(rows: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(x, &l)| sq_dist(x, &centroids[l]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_cluster_centroid_is_mean() {
        let v = array![[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]];
        let fit = kmeans_fit(v.view(), 1, 3, 10).unwrap();
        assert_eq!(fit.assignment.k(), 1);
        assert!((fit.centroids[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((fit.centroids[[0, 1]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k_at_least_n_gives_singletons() {
        let v = array![[0.0], [1.0], [2.0]];
        assert_eq!(kmeans(v.view(), 3, 0, 10).unwrap(), ClusterAssignment::singletons(3));
        assert_eq!(kmeans(v.view(), 8, 0, 10).unwrap(), ClusterAssignment::singletons(3));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let v = array![[1.0], [1.0], [1.0], [1.0], [5.0]];
        let a = kmeans(v.view(), 3, 11, 20).unwrap();
        assert_eq!(a.k(), 3);
    }

    #[test]
    fn parameter_errors() {
        let v = array![[1.0]];
        assert!(kmeans(v.view(), 0, 0, 10).is_err());
        assert!(kmeans(v.view(), 1, 0, 0).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(kmeans(empty.view(), 1, 0, 10), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn deterministic_for_seed() {
        let v = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 31 + j * 17) % 23) as f64);
        let a = kmeans_fit(v.view(), 4, 5, 100).unwrap();
        let b = kmeans_fit(v.view(), 4, 5, 100).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.objective_trace, b.objective_trace);
    }
}
