use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ConceptPartition, InductionOutput, LemmaSenses, PipelineConfig, SensePartition};
use crate::cluster::ClusterAssignment;
use crate::corpus::Corpus;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub id: usize,
    pub lemmas: Vec<String>,
    pub occurrences: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseEntry {
    pub lemma: String,
    pub parts: Vec<Vec<String>>,
}

/// The JSON form of an induction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub concepts: Vec<ConceptEntry>,
    pub senses: Vec<SenseEntry>,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl ClusterArtifact {
    pub fn from_output(output: &InductionOutput, corpus: &Corpus, config: &PipelineConfig) -> Self {
        let config_json = serde_json::to_value(config).expect("configuration serialises");
        Self::from_parts(&output.senses, &output.concepts, corpus, config_json, config.seed)
    }

    /// Builds an artifact from any sense and concept partition, e.g. a
    /// baseline; `config` is stored verbatim.
    pub fn from_parts(
        senses: &SensePartition,
        concepts: &ConceptPartition,
        corpus: &Corpus,
        config: serde_json::Value,
        seed: u64,
    ) -> Self {
        let concepts = concepts
            .clusters()
            .into_iter()
            .enumerate()
            .map(|(id, members)| {
                let mut lemmas: Vec<String> = members
                    .iter()
                    .filter_map(|o| corpus.occurrence(o).map(|o| o.lemma.clone()))
                    .collect();
                lemmas.sort();
                lemmas.dedup();
                ConceptEntry {
                    id,
                    lemmas,
                    occurrences: members.into_iter().map(str::to_string).collect(),
                }
            })
            .collect();
        let senses = senses
            .lemmas()
            .iter()
            .map(|l| SenseEntry {
                lemma: l.lemma.clone(),
                parts: l
                    .parts()
                    .into_iter()
                    .map(|p| p.into_iter().map(str::to_string).collect())
                    .collect(),
            })
            .collect();
        ClusterArtifact {
            concepts,
            senses,
            config,
            seed,
        }
    }

    /// The occurrence partition, with occurrences in artifact order.
    pub fn concept_partition(&self) -> Result<ConceptPartition> {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for entry in &self.concepts {
            for occ in &entry.occurrences {
                if !seen.insert(occ.as_str()) {
                    return Err(Error::Consistency(format!(
                        "occurrence {occ:?} appears in two concepts"
                    )));
                }
                ids.push(occ.clone());
                labels.push(entry.id);
            }
        }
        Ok(ConceptPartition::from_labels(ids, labels))
    }

    pub fn sense_partition(&self) -> SensePartition {
        SensePartition::new(
            self.senses
                .iter()
                .map(|s| {
                    let mut occurrences = Vec::new();
                    let mut labels = Vec::new();
                    for (j, part) in s.parts.iter().enumerate() {
                        for occ in part {
                            occurrences.push(occ.clone());
                            labels.push(j);
                        }
                    }
                    LemmaSenses {
                        lemma: s.lemma.clone(),
                        occurrences,
                        assignment: ClusterAssignment::from_labels(labels),
                    }
                })
                .collect(),
        )
    }

    pub fn write_json<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self).map_err(|e| Error::Json { line: 0, source: e })
    }

    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        serde_json::from_reader(source).map_err(|e| Error::Json {
            line: e.line(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, OccurrenceRecord};
    use crate::pipeline::{baseline_lemmas_partition, derive_word_clustering};

    #[test]
    fn round_trip() {
        let records = ["a1", "a2", "b1"]
            .iter()
            .map(|id| OccurrenceRecord {
                id: id.to_string(),
                lemma: if id.starts_with('a') { "apple" } else { "berry" }.into(),
                pos: None,
                sentence_id: id.to_string(),
                token_index: 0,
                gold_concept: None,
            })
            .collect::<Vec<_>>();
        let corpus = load_corpus(records, 1).unwrap();
        let concepts = baseline_lemmas_partition(&corpus);
        let senses = SensePartition::singletons(&corpus);
        let out = InductionOutput {
            words: derive_word_clustering(&concepts, &corpus),
            senses,
            concepts,
        };
        let config = PipelineConfig::bilevel_agglo_reference();
        let art = ClusterArtifact::from_output(&out, &corpus, &config);
        let mut buf = Vec::new();
        art.write_json(&mut buf).unwrap();
        let back = ClusterArtifact::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.concept_partition().unwrap(), out.concepts);
        assert_eq!(back.sense_partition(), out.senses);
        assert_eq!(back.concepts[0].lemmas, vec!["apple".to_string()]);
    }
}
