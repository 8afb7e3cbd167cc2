//! Concept induction: soft clustering of a lexicon from contextual occurrence
//! embeddings.
//!
//! The engine clusters each lemma's occurrences locally (word senses), averages
//! every local cluster into a centroid, and clusters those centroids globally
//! across the lexicon (concepts). The resulting occurrence partition induces a
//! soft clustering of lemmas, which is scored with Extended BCubed against a
//! gold annotation.
//!
//! Module map:
//!
//! * [`corpus`]: lexicon, occurrences, gold annotations and evaluation splits.
//! * [`store`]: the binary / JSONL embedding store.
//! * [`cluster`]: distances, the threshold rule, k-means and agglomerative clustering.
//! * [`pipeline`]: local, global and bi-level induction, baselines and sweeps.
//! * [`eval`]: Extended BCubed, per-lemma WSI BCubed, F-beta and Spearman.
//! * [`concept`]: concept-aware embeddings and the Word-in-Context classifier.
//! * [`cli`]: the `concept-forge` command line.

pub mod cli;
pub mod cluster;
pub mod concept;
pub mod corpus;
mod error;
pub mod eval;
pub mod pipeline;
pub mod store;

pub use error::{Error, Result};

pub use cluster::{ClusterAssignment, DistanceMetric, Linkage};
pub use concept::ConceptEmbeddingTable;
pub use corpus::{Corpus, GoldClusterings, OccurrenceRecord, SplitName, SplitSpec};
pub use eval::BCubedScore;
pub use pipeline::{
    ConceptPartition, GlobalAlgorithm, LocalAlgorithm, PipelineConfig, SensePartition,
    WordClustering,
};
pub use store::EmbeddingStore;
