use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DistanceMetric;
use crate::{Error, Result};

/// Pair budget for the distance distribution; above it pairs are sampled.
pub const DEFAULT_SAMPLE_CAP: usize = 2_000_000;

/// `1 - cos(u, v)`, clamped to `[0, 2]`. Zero vectors are at distance 1 from
/// everything except another zero vector.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    cosine_from_parts(dot, nu.sqrt(), nv.sqrt())
}

fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        return if norm_u == norm_v { 0.0 } else { 1.0 };
    }
    (1.0 - dot / (norm_u * norm_v)).clamp(0.0, 2.0)
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Condensed upper-triangular matrix of pairwise distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Computes all `n(n-1)/2` distances between the rows of `vectors`.
    /// Rows are filled in parallel; each entry is computed independently so
    /// the result does not depend on the thread count.
    pub fn compute(vectors: ArrayView2<'_, f64>, metric: DistanceMetric) -> Self {
        let n = vectors.nrows();
        let rows: Vec<Vec<f64>> = to_rows(vectors);
        let norms: Vec<f64> = match metric {
            DistanceMetric::Cosine => rows.iter().map(|r| dot(r, r).sqrt()).collect(),
            DistanceMetric::Euclidean => Vec::new(),
        };
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (rows, norms) = (&rows, &norms);
                (i + 1..n).map(move |j| match metric {
                    DistanceMetric::Cosine => {
                        cosine_from_parts(dot(&rows[i], &rows[j]), norms[i], norms[j])
                    }
                    DistanceMetric::Euclidean => euclidean_distance(&rows[i], &rows[j]),
                })
            })
            .collect();
        DistanceMatrix { n, data }
    }

    /// Builds a matrix from a full symmetric distance function, mostly for
    /// tests.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub(crate) fn index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.data[Self::index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[Self::index(self.n, j, i)],
        }
    }

    pub(crate) fn into_condensed(self) -> Vec<f64> {
        self.data
    }

    /// Exact statistics over every pair.
    pub fn stats(&self) -> Result<DistanceStats> {
        if self.n < 2 {
            return Err(degenerate(self.n));
        }
        Ok(DistanceStats::from_values(self.data.iter().copied()))
    }

    /// Exact statistics when the pair count is within `sample_cap`,
    /// otherwise statistics over `sample_cap` pairs drawn with `seed`
    /// (the same pairs [`pairwise_distance_stats`] would draw).
    pub fn stats_capped(&self, sample_cap: usize, seed: u64) -> Result<DistanceStats> {
        if self.n < 2 {
            return Err(degenerate(self.n));
        }
        if self.pair_count() <= sample_cap {
            return self.stats();
        }
        let values: Vec<f64> = sample_pairs(self.n, sample_cap, seed)
            .map(|(i, j)| self.get(i, j))
            .collect();
        Ok(DistanceStats::from_values(values.into_iter()))
    }
}

fn to_rows(vectors: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    vectors.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn degenerate(n: usize) -> Error {
    Error::DegenerateInput(format!("distance statistics need at least 2 vectors, got {n}"))
}

/// Unordered pairs `(i, j)`, `i < j`, drawn uniformly with replacement.
fn sample_pairs(n: usize, count: usize, seed: u64) -> impl Iterator<Item = (usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a.min(b), a.max(b))
    })
}

/// Mean and population standard deviation of a distance distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl DistanceStats {
    fn from_values<I: Iterator<Item = f64> + Clone>(values: I) -> Self {
        let (sum, count) = values.clone().fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
        let mean = sum / count as f64;
        let var = values.map(|d| (d - mean) * (d - mean)).sum::<f64>() / count as f64;
        DistanceStats {
            mean,
            std: var.sqrt(),
            count,
        }
    }
}

/// Distance statistics between the rows of `vectors`: exact over all pairs
/// when there are at most `sample_cap` of them, otherwise over a seeded
/// uniform sample of `sample_cap` pairs.
pub fn pairwise_distance_stats(
    vectors: ArrayView2<'_, f64>,
    metric: DistanceMetric,
    sample_cap: usize,
    seed: u64,
) -> Result<DistanceStats> {
    let n = vectors.nrows();
    if n < 2 {
        return Err(degenerate(n));
    }
    let pairs = n * (n - 1) / 2;
    if pairs <= sample_cap {
        return DistanceMatrix::compute(vectors, metric).stats();
    }
    let rows = to_rows(vectors);
    let values: Vec<f64> = sample_pairs(n, sample_cap, seed)
        .map(|(i, j)| metric.distance(&rows[i], &rows[j]))
        .collect();
    Ok(DistanceStats::from_values(values.into_iter()))
}

/// `tau = mean - nu * std`. A negative result is legal and means "no merge".
pub fn derive_threshold(mean: f64, std: f64, nu: f64) -> f64 {
    debug_assert!(std >= 0.0);
    mean - nu * std
}

/// Distance threshold indexed on the observed distance distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub nu: f64,
}

impl ThresholdRule {
    pub fn tau(&self, stats: &DistanceStats) -> f64 {
        derive_threshold(stats.mean, stats.std, self.nu)
    }
}
