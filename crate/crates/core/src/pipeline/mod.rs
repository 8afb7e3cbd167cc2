//! Local, global and bi-level concept induction.
//!
//! The pipeline produces three nested views of the corpus:
//!
//! * a [`SensePartition`]: every lemma's occurrences split into local clusters;
//! * a [`ConceptPartition`]: every occurrence assigned to one global cluster,
//!   with all occurrences of a local cluster sharing it;
//! * a [`WordClustering`]: for every global cluster, the lemmas whose
//!   occurrences it contains. A lemma appears once per distinct global
//!   cluster among its occurrences.

mod artifact;
mod baselines;
mod config;
mod run;
mod sweep;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::cluster::ClusterAssignment;
use crate::corpus::Corpus;

pub use artifact::{ClusterArtifact, ConceptEntry, SenseEntry};
pub use baselines::{
    baseline_lemmas, baseline_lemmas_partition, baseline_oracle_wsi,
    baseline_oracle_wsi_partition,
};
pub use config::{GlobalAlgorithm, LocalAlgorithm, Mode, PipelineConfig};
pub use run::{
    aggregate_centroids, derive_word_clustering, global_kmeans_k, induce, run_bilevel,
    run_global, run_global_only, run_local, run_local_only, validate_constraints,
    InductionOutput,
};
pub use sweep::{agglo_grid, nu_range, sweep, SweepEntry, SweepObjective, SweepOutcome};

/// Soft clustering of lemmas. Cluster `k` is the sorted lemma set of global
/// cluster `k`; identical clusters are kept as distinct entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WordClustering {
    clusters: Vec<Vec<String>>,
}

impl WordClustering {
    pub fn new(clusters: Vec<Vec<String>>) -> Self {
        let clusters = clusters
            .into_iter()
            .map(|mut c| {
                c.sort();
                c.dedup();
                c
            })
            .collect();
        WordClustering { clusters }
    }

    pub fn clusters(&self) -> &[Vec<String>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn lexicon(&self) -> BTreeSet<&str> {
        self.clusters
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    /// Number of clusters each lemma belongs to.
    pub fn membership_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for lemma in self.clusters.iter().flatten() {
            *out.entry(lemma.clone()).or_insert(0) += 1;
        }
        out
    }
}

/// A local cluster, named by the lemma's position in the corpus and the
/// local cluster index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SenseId {
    pub lemma: usize,
    pub local: usize,
}

/// The local clustering of one lemma.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LemmaSenses {
    pub lemma: String,
    /// Occurrence ids in corpus order; `assignment` labels them.
    pub occurrences: Vec<String>,
    pub assignment: ClusterAssignment,
}

impl LemmaSenses {
    pub fn parts(&self) -> Vec<Vec<&str>> {
        self.assignment
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(|i| self.occurrences[i].as_str()).collect())
            .collect()
    }
}

/// Ŝ: per-lemma hard partitions, in corpus lemma order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SensePartition {
    lemmas: Vec<LemmaSenses>,
}

impl SensePartition {
    pub fn new(lemmas: Vec<LemmaSenses>) -> Self {
        SensePartition { lemmas }
    }

    /// One local cluster per occurrence.
    pub fn singletons(corpus: &Corpus) -> Self {
        SensePartition {
            lemmas: corpus
                .iter_lemmas()
                .map(|(lemma, occs)| LemmaSenses {
                    lemma: lemma.id.clone(),
                    occurrences: occs.iter().map(|o| o.id.clone()).collect(),
                    assignment: ClusterAssignment::singletons(occs.len()),
                })
                .collect(),
        }
    }

    pub fn lemmas(&self) -> &[LemmaSenses] {
        &self.lemmas
    }

    /// Σ_w n_w.
    pub fn sense_count(&self) -> usize {
        self.lemmas.iter().map(|l| l.assignment.k()).sum()
    }

    /// Local clusters in global order (lemma by lemma, then local index).
    pub fn senses(&self) -> impl Iterator<Item = (SenseId, Vec<&str>)> + '_ {
        self.lemmas.iter().enumerate().flat_map(|(li, l)| {
            l.parts()
                .into_iter()
                .enumerate()
                .map(move |(j, part)| (SenseId { lemma: li, local: j }, part))
        })
    }

    pub fn provenance(&self) -> Vec<SenseId> {
        self.senses().map(|(id, _)| id).collect()
    }
}

/// Ĉ: a hard partition of the occurrences into `p` global clusters.
///
/// Cluster ids are canonical: numbered by first appearance in occurrence
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptPartition {
    occurrence_ids: Vec<String>,
    labels: Vec<usize>,
    p: usize,
    index: HashMap<String, usize>,
}

impl ConceptPartition {
    pub fn from_labels(occurrence_ids: Vec<String>, raw_labels: Vec<usize>) -> Self {
        assert_eq!(occurrence_ids.len(), raw_labels.len());
        let canon = ClusterAssignment::from_labels(raw_labels);
        let index = occurrence_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        ConceptPartition {
            p: canon.k(),
            labels: canon.labels().to_vec(),
            occurrence_ids,
            index,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn occurrence_ids(&self) -> &[String] {
        &self.occurrence_ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_of(&self, occurrence: &str) -> Option<usize> {
        self.index.get(occurrence).map(|&i| self.labels[i])
    }

    /// Occurrence ids of every cluster, in cluster-id order.
    pub fn clusters(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.p];
        for (id, &l) in self.occurrence_ids.iter().zip(&self.labels) {
            out[l].push(id.as_str());
        }
        out
    }

    /// Keeps only the listed occurrences, in the given order.
    pub fn restrict<'a, I>(&self, ids: I) -> Option<ConceptPartition>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut kept = Vec::new();
        let mut labels = Vec::new();
        for id in ids {
            labels.push(self.label_of(id)?);
            kept.push(id.to_string());
        }
        Some(ConceptPartition::from_labels(kept, labels))
    }
}
