use std::collections::HashMap;

use super::{ConceptPartition, WordClustering};
use crate::corpus::{Corpus, GoldClusterings};
use crate::{Error, Result};

/// One singleton cluster per lemma.
pub fn baseline_lemmas(corpus: &Corpus) -> WordClustering {
    WordClustering::new(corpus.lemmas().iter().map(|l| vec![l.id.clone()]).collect())
}

/// The occurrence partition behind [`baseline_lemmas`]: all occurrences of
/// a lemma share one cluster.
pub fn baseline_lemmas_partition(corpus: &Corpus) -> ConceptPartition {
    let mut ids = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for (li, (_, occs)) in corpus.iter_lemmas().enumerate() {
        for occ in occs {
            ids.push(occ.id.clone());
            labels.push(li);
        }
    }
    ConceptPartition::from_labels(ids, labels)
}

/// The occurrence partition behind [`baseline_oracle_wsi`]: a lemma's
/// occurrences are grouped by gold concept, and no two lemmas share a
/// cluster.
pub fn baseline_oracle_wsi_partition(
    corpus: &Corpus,
    gold: &GoldClusterings,
) -> Result<ConceptPartition> {
    let mut ids = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    let mut next = 0;
    for (_, occs) in corpus.iter_lemmas() {
        let mut local: HashMap<&str, usize> = HashMap::new();
        for occ in occs {
            let concept = gold
                .concept_of(&occ.id)
                .ok_or_else(|| Error::MissingAnnotation(occ.id.clone()))?;
            let label = *local.entry(concept).or_insert_with(|| {
                next += 1;
                next - 1
            });
            ids.push(occ.id.clone());
            labels.push(label);
        }
    }
    Ok(ConceptPartition::from_labels(ids, labels))
}

/// For every lemma, one singleton cluster per distinct gold concept among
/// its occurrences.
pub fn baseline_oracle_wsi(corpus: &Corpus, gold: &GoldClusterings) -> Result<WordClustering> {
    let partition = baseline_oracle_wsi_partition(corpus, gold)?;
    Ok(super::derive_word_clustering(&partition, corpus))
}
