use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use serde::Serialize;

use super::run::lift_global;
use super::{
    aggregate_centroids, derive_word_clustering, induce, run_global, run_local, GlobalAlgorithm,
    LocalAlgorithm, Mode, PipelineConfig, SenseId, SensePartition,
};
use crate::cluster::{cut_merges, derive_threshold, merge_until, DistanceMatrix, Linkage, Merge};
use crate::corpus::{Corpus, GoldClusterings, SplitSpec};
use crate::eval::{bcubed_wsi_restricted, evaluate_partition};
use crate::store::EmbeddingStore;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    /// Extended BCubed F1 on the split's concepts.
    ConceptF1,
    /// Per-lemma BCubed F1 on the split's polysemous lemmas.
    WsiF1,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub label: String,
    pub config: PipelineConfig,
    pub objective: SweepObjective,
    pub score: f64,
    pub n_clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub best: PipelineConfig,
    pub best_index: usize,
    /// One entry per grid point, in grid order.
    pub leaderboard: Vec<SweepEntry>,
}

/// `start, start + step, ...` up to and including `end` (within 1e-9).
pub fn nu_range(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && end.is_finite()) || end < start {
        return Err(Error::InvalidParameter(format!(
            "bad range {start}..={end} step {step}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Bi-level agglomerative configurations: for each linkage (used on both
/// levels), every `(nu_local, nu_global)` pair.
pub fn agglo_grid(
    local_nus: &[f64],
    global_nus: &[f64],
    linkages: &[Linkage],
    base: &PipelineConfig,
) -> Vec<PipelineConfig> {
    let mut grid = Vec::new();
    for &linkage in linkages {
        for &nl in local_nus {
            for &ng in global_nus {
                grid.push(PipelineConfig {
                    local: LocalAlgorithm::Agglomerative { linkage, nu: nl },
                    global: GlobalAlgorithm::Agglomerative { linkage, nu: ng },
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// Everything the local step's output depends on.
fn local_key(config: &PipelineConfig) -> String {
    format!(
        "{}|{}|{}|{}|{}",
        config.local, config.metric, config.seed, config.sample_cap, config.max_iter
    )
}

type LocalCache = HashMap<String, (SensePartition, Array2<f64>, Vec<SenseId>)>;

/// A full global merge sequence with the statistics of its distances; a
/// global threshold only decides where the sequence is cut.
struct Dendrogram {
    n: usize,
    mean: f64,
    std: f64,
    merges: Vec<Merge>,
}

/// Scores every configuration of `grid` on the `dev` split and returns the
/// best one; ties go to the earliest in grid order.
///
/// Bi-level and global-only systems are scored by Extended BCubed F1 on the
/// split's concepts. Local-only systems are scored by WSI F1 over the lemmas
/// that have split occurrences and at least two gold senses. Local
/// clusterings are computed once per distinct local configuration.
pub fn sweep(
    corpus: &Corpus,
    store: &EmbeddingStore,
    gold: &GoldClusterings,
    dev: &SplitSpec,
    grid: &[PipelineConfig],
) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    for config in grid {
        config.validate()?;
    }
    let polysemous: BTreeSet<String> = dev
        .lemmas(gold)
        .into_iter()
        .filter(|l| gold.sense_count(l) >= 2)
        .collect();

    let mut cache: LocalCache = HashMap::new();
    let mut dendrograms: HashMap<(String, Linkage), Dendrogram> = HashMap::new();
    let mut leaderboard = Vec::with_capacity(grid.len());
    for (index, config) in grid.iter().enumerate() {
        let (objective, score, n_clusters) = match config.mode() {
            Mode::Bilevel => {
                let key = local_key(config);
                if !cache.contains_key(&key) {
                    let senses = run_local(corpus, store, config)?;
                    let (centroids, provenance) = aggregate_centroids(store, &senses)?;
                    cache.insert(key.clone(), (senses, centroids, provenance));
                }
                let (senses, centroids, provenance) = &cache[&key];
                let concepts = match config.global {
                    GlobalAlgorithm::Agglomerative { linkage, nu } if centroids.nrows() >= 2 => {
                        let dkey = (key.clone(), linkage);
                        if !dendrograms.contains_key(&dkey) {
                            let matrix = DistanceMatrix::compute(centroids.view(), config.metric);
                            let stats = matrix.stats_capped(config.sample_cap, config.seed)?;
                            let (_, merges) = merge_until(matrix, linkage, f64::INFINITY);
                            dendrograms.insert(
                                dkey.clone(),
                                Dendrogram {
                                    n: centroids.nrows(),
                                    mean: stats.mean,
                                    std: stats.std,
                                    merges,
                                },
                            );
                        }
                        let tree = &dendrograms[&dkey];
                        let tau = derive_threshold(tree.mean, tree.std, nu);
                        lift_global(&cut_merges(tree.n, &tree.merges, tau), provenance, senses)?
                    }
                    _ => run_global(centroids.view(), provenance, senses, config)?,
                };
                let report =
                    evaluate_partition(corpus, gold, &concepts, dev, &config.label(), 1.0)?;
                (SweepObjective::ConceptF1, report.f1, report.n_clusters)
            }
            Mode::GlobalOnly => {
                let out = induce(corpus, store, config)?;
                let report =
                    evaluate_partition(corpus, gold, &out.concepts, dev, &config.label(), 1.0)?;
                (SweepObjective::ConceptF1, report.f1, report.n_clusters)
            }
            Mode::LocalOnly => {
                if polysemous.is_empty() {
                    return Err(Error::DegenerateInput(
                        "the split has no polysemous lemma to score a local-only system".into(),
                    ));
                }
                let out = induce(corpus, store, config)?;
                let wsi = bcubed_wsi_restricted(
                    &out.concepts,
                    gold,
                    corpus,
                    1.0,
                    Some(&dev.occurrence_ids),
                    Some(&polysemous),
                )?;
                let n = derive_word_clustering(&out.concepts, corpus).len();
                (SweepObjective::WsiF1, wsi.f_beta, n)
            }
        };
        leaderboard.push(SweepEntry {
            index,
            label: config.label(),
            config: config.clone(),
            objective,
            score,
            n_clusters,
        });
    }

    let mut best_index = 0;
    for entry in &leaderboard {
        if entry.score > leaderboard[best_index].score {
            best_index = entry.index;
        }
    }
    Ok(SweepOutcome {
        best: grid[best_index].clone(),
        best_index,
        leaderboard,
    })
}
