//! Clustering algorithms shared by the local and global levels.

mod agglomerative;
mod distance;
mod kmeans;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

pub use agglomerative::{
    agglomerative, agglomerative_from_matrix, cut_merges, merge_until, Merge,
};
pub use distance::{
    cosine_distance, derive_threshold, euclidean_distance, pairwise_distance_stats,
    DistanceMatrix, DistanceStats, ThresholdRule, DEFAULT_SAMPLE_CAP,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit, DEFAULT_MAX_ITER};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl DistanceMetric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            DistanceMetric::Cosine => cosine_distance(u, v),
            DistanceMetric::Euclidean => euclidean_distance(u, v),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            "euclidean" | "l2" => Ok(DistanceMetric::Euclidean),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}

/// Inter-cluster distance of agglomerative clustering. `Average` is UPGMA.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
    Complete,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        })
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "min" => Ok(Linkage::Single),
            "average" | "avg" | "upgma" => Ok(Linkage::Average),
            "complete" | "max" => Ok(Linkage::Complete),
            other => Err(Error::Parse(format!("unknown linkage {other:?}"))),
        }
    }
}

/// A hard clustering of `labels.len()` items into `k` clusters.
///
/// Labels are canonical: cluster ids are numbered `0..k` in order of first
/// appearance, so two assignments describing the same partition compare
/// equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster ids into canonical form.
    pub fn from_labels<I: IntoIterator<Item = usize>>(raw: I) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .into_iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            k: map.len(),
            labels,
        }
    }

    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        ClusterAssignment {
            labels: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of every cluster, in cluster-id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}
