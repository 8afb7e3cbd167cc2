use std::collections::{BTreeSet, HashMap};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::{
    ConceptPartition, GlobalAlgorithm, LemmaSenses, LocalAlgorithm, Mode, PipelineConfig,
    SenseId, SensePartition, WordClustering,
};
use crate::cluster::{
    agglomerative_from_matrix, derive_threshold, kmeans, ClusterAssignment, DistanceMatrix,
    DistanceMetric, Linkage,
};
use crate::corpus::Corpus;
use crate::store::EmbeddingStore;
use crate::{Error, Result};

/// Everything one induction run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct InductionOutput {
    pub senses: SensePartition,
    pub concepts: ConceptPartition,
    pub words: WordClustering,
}

fn lemma_seed(seed: u64, lemma: usize) -> u64 {
    seed ^ (lemma as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn unit_rows(vectors: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = vectors.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

fn run_kmeans(
    vectors: ArrayView2<'_, f64>,
    k: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ClusterAssignment> {
    match config.metric {
        DistanceMetric::Euclidean => kmeans(vectors, k, seed, config.max_iter),
        DistanceMetric::Cosine => kmeans(unit_rows(vectors).view(), k, seed, config.max_iter),
    }
}

fn run_agglo(
    vectors: ArrayView2<'_, f64>,
    linkage: Linkage,
    nu: f64,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ClusterAssignment> {
    if vectors.nrows() < 2 {
        return Ok(ClusterAssignment::single_cluster(vectors.nrows()));
    }
    let matrix = DistanceMatrix::compute(vectors, config.metric);
    let stats = matrix.stats_capped(config.sample_cap, seed)?;
    let tau = derive_threshold(stats.mean, stats.std, nu);
    Ok(agglomerative_from_matrix(&matrix, linkage, tau))
}

fn gather_rows(store: &EmbeddingStore, ids: &[&str]) -> Result<Array2<f64>> {
    store.gather(ids)
}

/// Clusters each lemma's occurrence vectors independently.
///
/// Lemmas run in parallel; each uses a seed derived from the configured seed
/// and the lemma's corpus position, so the result does not depend on
/// scheduling.
pub fn run_local(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<SensePartition> {
    config.validate()?;
    let lemmas: Vec<Result<LemmaSenses>> = (0..corpus.lemma_count())
        .into_par_iter()
        .map(|li| {
            let occs = corpus.occurrences_at(li);
            let ids: Vec<&str> = occs.iter().map(|o| o.id.as_str()).collect();
            let vectors = gather_rows(store, &ids)?;
            let seed = lemma_seed(config.seed, li);
            let assignment = match config.local {
                LocalAlgorithm::Identity => ClusterAssignment::singletons(ids.len()),
                LocalAlgorithm::KMeans { k } => run_kmeans(vectors.view(), k, config, seed)?,
                LocalAlgorithm::Agglomerative { linkage, nu } => {
                    run_agglo(vectors.view(), linkage, nu, config, seed)?
                }
            };
            Ok(LemmaSenses {
                lemma: corpus.lemmas()[li].id.clone(),
                occurrences: ids.into_iter().map(str::to_string).collect(),
                assignment,
            })
        })
        .collect();
    Ok(SensePartition::new(lemmas.into_iter().collect::<Result<_>>()?))
}

/// One centroid per local cluster (64-bit mean of its member vectors), in
/// the order of [`SensePartition::senses`].
pub fn aggregate_centroids(
    store: &EmbeddingStore,
    senses: &SensePartition,
) -> Result<(Array2<f64>, Vec<SenseId>)> {
    let dim = store.dim();
    let parts: Vec<(SenseId, Vec<&str>)> = senses.senses().collect();
    let mut centroids = Array2::zeros((parts.len(), dim));
    let mut provenance = Vec::with_capacity(parts.len());
    for (row, (id, members)) in parts.iter().enumerate() {
        let mut acc = centroids.row_mut(row);
        for (m, occ) in members.iter().enumerate() {
            let v = store
                .vector_of(occ)
                .ok_or_else(|| Error::MissingVector(occ.to_string()))?;
            if m == 0 {
                acc.iter_mut().zip(v).for_each(|(a, &x)| *a = f64::from(x));
            } else {
                acc.iter_mut().zip(v).for_each(|(a, &x)| *a += f64::from(x));
            }
        }
        if members.len() > 1 {
            acc /= members.len() as f64;
        }
        provenance.push(*id);
    }
    Ok((centroids, provenance))
}

/// `round(pi * |W|)` clamped to `[1, items]`.
pub fn global_kmeans_k(proportion: f64, lemma_count: usize, items: usize) -> usize {
    ((proportion * lemma_count as f64).round() as usize).clamp(1, items.max(1))
}

fn cluster_global(
    vectors: ArrayView2<'_, f64>,
    lemma_count: usize,
    config: &PipelineConfig,
) -> Result<ClusterAssignment> {
    let n = vectors.nrows();
    match config.global {
        GlobalAlgorithm::None => Ok(ClusterAssignment::singletons(n)),
        GlobalAlgorithm::KMeans { proportion } => {
            let k = global_kmeans_k(proportion, lemma_count, n);
            run_kmeans(vectors, k, config, config.seed)
        }
        GlobalAlgorithm::Agglomerative { linkage, nu } => {
            run_agglo(vectors, linkage, nu, config, config.seed)
        }
    }
}

/// Clusters the local-cluster centroids; every occurrence inherits the
/// global cluster of its local cluster.
pub fn run_global(
    centroids: ArrayView2<'_, f64>,
    provenance: &[SenseId],
    senses: &SensePartition,
    config: &PipelineConfig,
) -> Result<ConceptPartition> {
    config.validate()?;
    if centroids.nrows() == 0 {
        return Err(Error::DegenerateInput("global clustering needs at least one centroid".into()));
    }
    if centroids.nrows() != provenance.len() {
        return Err(Error::Consistency(format!(
            "{} centroids but {} provenance entries",
            centroids.nrows(),
            provenance.len()
        )));
    }
    let lemma_count = provenance
        .iter()
        .map(|s| s.lemma)
        .collect::<BTreeSet<_>>()
        .len();
    let assignment = cluster_global(centroids, lemma_count, config)?;
    lift_global(&assignment, provenance, senses)
}

/// Gives every occurrence the global cluster of its local cluster.
pub(crate) fn lift_global(
    assignment: &ClusterAssignment,
    provenance: &[SenseId],
    senses: &SensePartition,
) -> Result<ConceptPartition> {
    let global_of: HashMap<SenseId, usize> = provenance
        .iter()
        .copied()
        .zip(assignment.labels().iter().copied())
        .collect();

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (li, lemma) in senses.lemmas().iter().enumerate() {
        for (occ, &local) in lemma.occurrences.iter().zip(lemma.assignment.labels()) {
            let label = global_of.get(&SenseId { lemma: li, local }).ok_or_else(|| {
                Error::Consistency(format!("local cluster {local} of {:?} has no centroid", lemma.lemma))
            })?;
            ids.push(occ.clone());
            labels.push(*label);
        }
    }
    Ok(ConceptPartition::from_labels(ids, labels))
}

/// Cluster k of the result is the lemma set of global cluster k.
pub fn derive_word_clustering(concepts: &ConceptPartition, corpus: &Corpus) -> WordClustering {
    WordClustering::new(
        concepts
            .clusters()
            .into_iter()
            .map(|members| {
                members
                    .into_iter()
                    .filter_map(|id| corpus.occurrence(id).map(|o| o.lemma.clone()))
                    .collect()
            })
            .collect(),
    )
}

/// Local clustering, centroid averaging, then global clustering.
pub fn run_bilevel(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<InductionOutput> {
    let senses = run_local(corpus, store, config)?;
    let (centroids, provenance) = aggregate_centroids(store, &senses)?;
    let concepts = run_global(centroids.view(), &provenance, &senses, config)?;
    let words = derive_word_clustering(&concepts, corpus);
    Ok(InductionOutput {
        senses,
        concepts,
        words,
    })
}

/// Global clustering of the raw occurrence vectors, without a local step.
/// The configured local algorithm is ignored.
pub fn run_global_only(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<InductionOutput> {
    let config = PipelineConfig {
        local: LocalAlgorithm::Identity,
        ..config.clone()
    };
    config.validate()?;
    let ids: Vec<&str> = corpus.occurrences().iter().map(|o| o.id.as_str()).collect();
    if ids.is_empty() {
        return Err(Error::DegenerateInput("global clustering needs at least one occurrence".into()));
    }
    let vectors = gather_rows(store, &ids)?;
    let assignment = cluster_global(vectors.view(), corpus.lemma_count(), &config)?;
    let concepts = ConceptPartition::from_labels(
        ids.into_iter().map(str::to_string).collect(),
        assignment.labels().to_vec(),
    );
    let words = derive_word_clustering(&concepts, corpus);
    Ok(InductionOutput {
        senses: SensePartition::singletons(corpus),
        concepts,
        words,
    })
}

/// Local clustering only: every local cluster is its own concept.
pub fn run_local_only(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<InductionOutput> {
    let config = PipelineConfig {
        global: GlobalAlgorithm::None,
        ..config.clone()
    };
    let senses = run_local(corpus, store, &config)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0;
    for lemma in senses.lemmas() {
        for (occ, &local) in lemma.occurrences.iter().zip(lemma.assignment.labels()) {
            ids.push(occ.clone());
            labels.push(offset + local);
        }
        offset += lemma.assignment.k();
    }
    let concepts = ConceptPartition::from_labels(ids, labels);
    let words = derive_word_clustering(&concepts, corpus);
    Ok(InductionOutput {
        senses,
        concepts,
        words,
    })
}

/// Runs whichever system the configuration describes.
pub fn induce(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &PipelineConfig,
) -> Result<InductionOutput> {
    match config.mode() {
        Mode::Bilevel => run_bilevel(corpus, store, config),
        Mode::GlobalOnly => run_global_only(corpus, store, config),
        Mode::LocalOnly => run_local_only(corpus, store, config),
    }
}

/// Checks the structural constraints linking Ŝ and Ĉ:
///
/// 1. a local cluster holds occurrences of a single lemma;
/// 2. every occurrence lies in exactly one local cluster;
/// 3. every occurrence lies in exactly one global cluster;
/// 4. all occurrences of a local cluster share their global cluster.
pub fn validate_constraints(
    corpus: &Corpus,
    senses: &SensePartition,
    concepts: &ConceptPartition,
) -> Result<()> {
    let violation = |n: u8, msg: String| Err(Error::Consistency(format!("constraint {n}: {msg}")));

    let mut seen = vec![0u32; corpus.len()];
    for lemma in senses.lemmas() {
        if lemma.assignment.len() != lemma.occurrences.len() {
            return violation(2, format!("{:?} labels do not match its occurrences", lemma.lemma));
        }
        for occ in &lemma.occurrences {
            let Some(pos) = corpus.occurrence_position(occ) else {
                return violation(2, format!("unknown occurrence {occ:?}"));
            };
            if corpus.occurrences()[pos].lemma != lemma.lemma {
                return violation(1, format!("{occ:?} filed under {:?}", lemma.lemma));
            }
            seen[pos] += 1;
        }
    }
    if let Some(pos) = seen.iter().position(|&c| c != 1) {
        return violation(
            2,
            format!("{:?} is in {} local clusters", corpus.occurrences()[pos].id, seen[pos]),
        );
    }

    let mut seen = vec![0u32; corpus.len()];
    for occ in concepts.occurrence_ids() {
        match corpus.occurrence_position(occ) {
            Some(pos) => seen[pos] += 1,
            None => return violation(3, format!("unknown occurrence {occ:?}")),
        }
    }
    if let Some(pos) = seen.iter().position(|&c| c != 1) {
        return violation(
            3,
            format!("{:?} is in {} global clusters", corpus.occurrences()[pos].id, seen[pos]),
        );
    }

    for lemma in senses.lemmas() {
        for part in lemma.parts() {
            let first = concepts.label_of(part[0]);
            if part.iter().any(|o| concepts.label_of(o) != first) {
                return violation(4, format!("a local cluster of {:?} spans global clusters", lemma.lemma));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, OccurrenceRecord};
    use crate::store::StoreRecord;

    /// `spec` lists (lemma, vector) pairs; ids are `lemma.index`.
    fn fixture(spec: &[(&str, Vec<f32>)]) -> (Corpus, EmbeddingStore) {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut rows = Vec::new();
        for (lemma, v) in spec {
            let i = counts.entry(lemma).or_insert(0);
            let id = format!("{lemma}.{i:02}");
            *i += 1;
            rows.push((
                StoreRecord {
                    id: id.clone(),
                    lemma: lemma.to_string(),
                    sentence_id: id,
                    token_index: 0,
                    gold_concept: None,
                },
                v.clone(),
            ));
        }
        let store = EmbeddingStore::from_rows(spec[0].1.len(), rows).unwrap();
        let records: Vec<OccurrenceRecord> = store.occurrence_records();
        (load_corpus(records, 1).unwrap(), store)
    }

    #[test]
    fn identical_vectors_form_one_local_part() {
        let (corpus, store) = fixture(&[
            ("trial", vec![1.0, 2.0]),
            ("trial", vec![1.0, 2.0]),
            ("trial", vec![1.0, 2.0]),
        ]);
        let config = PipelineConfig::bilevel_agglo_reference();
        let senses = run_local(&corpus, &store, &config).unwrap();
        assert_eq!(senses.sense_count(), 1);
    }

    #[test]
    fn local_kmeans_clamps_k() {
        let (corpus, store) = fixture(&[
            ("aaa", vec![1.0, 0.0]),
            ("aaa", vec![0.0, 1.0]),
            ("bbb", vec![1.0, 0.0]),
            ("bbb", vec![0.0, 1.0]),
            ("bbb", vec![1.0, 1.0]),
            ("bbb", vec![-1.0, 1.0]),
        ]);
        let config = PipelineConfig::new(LocalAlgorithm::KMeans { k: 3 }, GlobalAlgorithm::None);
        let senses = run_local(&corpus, &store, &config).unwrap();
        assert_eq!(senses.lemmas()[0].assignment.k(), 2);
        assert_eq!(senses.lemmas()[1].assignment.k(), 3);
    }

    #[test]
    fn missing_vector_is_reported() {
        let (corpus, _) = fixture(&[("trial", vec![1.0]), ("trial", vec![2.0])]);
        let (_, other) = fixture(&[("trial", vec![1.0])]);
        let err = run_local(&corpus, &other, &PipelineConfig::bilevel_agglo_reference()).unwrap_err();
        assert!(matches!(err, Error::MissingVector(id) if id == "trial.01"));
    }

    #[test]
    fn centroids_are_means() {
        let (corpus, store) = fixture(&[("trial", vec![0.0, 2.0]), ("trial", vec![2.0, 0.0])]);
        let senses = SensePartition::new(vec![LemmaSenses {
            lemma: "trial".into(),
            occurrences: corpus.occurrences().iter().map(|o| o.id.clone()).collect(),
            assignment: ClusterAssignment::single_cluster(2),
        }]);
        let (c, prov) = aggregate_centroids(&store, &senses).unwrap();
        assert_eq!(c.row(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(prov, vec![SenseId { lemma: 0, local: 0 }]);
    }

    #[test]
    fn global_k_from_proportion() {
        assert_eq!(global_kmeans_k(1.2, 1560, 10_000), 1872);
        assert_eq!(global_kmeans_k(1.2, 1560, 52_997), 1872);
        assert_eq!(global_kmeans_k(1.2, 1560, 100), 100);
        assert_eq!(global_kmeans_k(0.01, 10, 5), 1);
    }

    #[test]
    fn identical_centroids_across_lemmas_merge() {
        let (corpus, store) = fixture(&[
            ("test", vec![1.0, 0.0]),
            ("trial", vec![1.0, 0.0]),
            ("trial", vec![0.0, 1.0]),
        ]);
        let config = PipelineConfig::new(
            LocalAlgorithm::KMeans { k: 2 },
            GlobalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 0.0 },
        );
        let out = run_bilevel(&corpus, &store, &config).unwrap();
        assert_eq!(out.senses.sense_count(), 3);
        assert_eq!(out.concepts.p(), 2);
        assert_eq!(
            out.words.clusters(),
            &[vec!["test".to_string(), "trial".to_string()], vec!["trial".to_string()]]
        );
        validate_constraints(&corpus, &out.senses, &out.concepts).unwrap();
    }

    #[test]
    fn negative_global_threshold_keeps_every_sense() {
        let (corpus, store) = fixture(&[
            ("test", vec![1.0, 0.0]),
            ("test", vec![0.9, 0.1]),
            ("trial", vec![1.0, 0.0]),
            ("trial", vec![0.0, 1.0]),
        ]);
        let config = PipelineConfig::new(
            LocalAlgorithm::KMeans { k: 2 },
            GlobalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 1e6 },
        );
        let out = run_bilevel(&corpus, &store, &config).unwrap();
        assert_eq!(out.concepts.p(), out.senses.sense_count());
        assert!(out.words.clusters().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn single_occurrence_corpus() {
        let (corpus, store) = fixture(&[("trial", vec![1.0, 0.0])]);
        let config = PipelineConfig::new(
            LocalAlgorithm::Identity,
            GlobalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 0.0 },
        );
        let out = run_global_only(&corpus, &store, &config).unwrap();
        assert_eq!(out.concepts.p(), 1);
        let out = run_bilevel(&corpus, &store, &PipelineConfig::bilevel_agglo_reference()).unwrap();
        assert_eq!(out.words.clusters(), &[vec!["trial".to_string()]]);
    }

    #[test]
    fn validator_catches_split_sense() {
        let (corpus, store) = fixture(&[("trial", vec![1.0, 0.0]), ("trial", vec![0.0, 1.0])]);
        let config = PipelineConfig::new(LocalAlgorithm::KMeans { k: 1 }, GlobalAlgorithm::None);
        let out = run_local_only(&corpus, &store, &config).unwrap();
        validate_constraints(&corpus, &out.senses, &out.concepts).unwrap();
        let broken = ConceptPartition::from_labels(out.concepts.occurrence_ids().to_vec(), vec![0, 1]);
        let err = validate_constraints(&corpus, &out.senses, &broken).unwrap_err();
        assert!(err.to_string().contains("constraint 4"), "{err}");
        let partial = ConceptPartition::from_labels(vec!["trial.00".into()], vec![0]);
        let err = validate_constraints(&corpus, &out.senses, &partial).unwrap_err();
        assert!(err.to_string().contains("constraint 3"), "{err}");
    }
}
