//! Lexicon, occurrences, gold annotations and evaluation splits.
//!
//! A [`Corpus`] is built from flat occurrence records (coming either from an
//! embedding store or from a JSONL annotation file). Only common nouns made of
//! at least three alphabetic characters and with enough occurrences survive.
//! Gold annotations, when present, are collected into [`GoldClusterings`],
//! from which the `dev` and `synon` evaluation splits are drawn.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::WordClustering;
use crate::{Error, Result};

pub const DEFAULT_MIN_OCCURRENCES: usize = 10;
pub const MIN_LEMMA_LENGTH: usize = 3;
pub const DEFAULT_DEV_FRACTION: f64 = 0.10;

/// One annotated token as supplied by ingestion.
///
/// `pos` is optional: binary embedding stores do not carry it, and their
/// records are assumed to have been filtered by the extractor already.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub id: String,
    pub lemma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    pub sentence_id: String,
    pub token_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_concept: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Lemma {
    pub id: String,
    pub pos: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Occurrence {
    pub id: String,
    pub lemma: String,
    pub sentence_id: String,
    pub token_index: u32,
    pub gold_concept: Option<String>,
}

/// The filtered lexicon and its occurrences, grouped by lemma.
///
/// Lemmas are sorted by id; the occurrences of each lemma form a contiguous
/// block sorted by occurrence id.
#[derive(Clone, Debug)]
pub struct Corpus {
    lemmas: Vec<Lemma>,
    occurrences: Vec<Occurrence>,
    ranges: Vec<Range<usize>>,
    lemma_index: HashMap<String, usize>,
    occurrence_index: HashMap<String, usize>,
}

/// Whether a POS tag denotes a common noun. A missing tag passes.
pub fn is_common_noun(tag: Option<&str>) -> bool {
    match tag {
        None => true,
        Some(t) => matches!(
            t.trim().to_ascii_lowercase().as_str(),
            "n" | "nn" | "nns" | "noun"
        ),
    }
}

/// Lemma form filter: alphabetic only, at least [`MIN_LEMMA_LENGTH`] characters.
pub fn is_valid_lemma_form(lemma: &str) -> bool {
    lemma.chars().count() >= MIN_LEMMA_LENGTH && lemma.chars().all(char::is_alphabetic)
}

/// Builds a [`Corpus`] from raw records.
///
/// Lemmas are case-folded. Records failing the POS or form filters are
/// dropped, then lemmas with fewer than `min_occurrences` occurrences are
/// dropped with all their occurrences. Duplicate ids or duplicate
/// `(sentence_id, token_index, lemma)` keys are rejected, even among records
/// that would have been filtered out.
pub fn load_corpus<I>(records: I, min_occurrences: usize) -> Result<Corpus>
where
    I: IntoIterator<Item = OccurrenceRecord>,
{
    let mut seen_ids = HashSet::new();
    let mut seen_keys = HashSet::new();
    let mut grouped: BTreeMap<String, Vec<Occurrence>> = BTreeMap::new();

    for record in records {
        let lemma = record.lemma.to_lowercase();
        if !seen_ids.insert(record.id.clone()) {
            return Err(Error::DuplicateOccurrence {
                key: format!("id {:?}", record.id),
            });
        }
        let key = (record.sentence_id.clone(), record.token_index, lemma.clone());
        if !seen_keys.insert(key) {
            return Err(Error::DuplicateOccurrence {
                key: format!(
                    "({:?}, {}, {:?})",
                    record.sentence_id, record.token_index, lemma
                ),
            });
        }
        if !is_common_noun(record.pos.as_deref()) || !is_valid_lemma_form(&lemma) {
            continue;
        }
        grouped.entry(lemma.clone()).or_default().push(Occurrence {
            id: record.id,
            lemma,
            sentence_id: record.sentence_id,
            token_index: record.token_index,
            gold_concept: record.gold_concept,
        });
    }

    let mut lemmas = Vec::new();
    let mut occurrences = Vec::new();
    let mut ranges = Vec::new();
    for (lemma, mut occs) in grouped {
        if occs.len() < min_occurrences.max(1) {
            continue;
        }
        occs.sort_by(|a, b| a.id.cmp(&b.id));
        let start = occurrences.len();
        occurrences.extend(occs);
        ranges.push(start..occurrences.len());
        lemmas.push(Lemma {
            id: lemma,
            pos: "noun".to_string(),
        });
    }
    if lemmas.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let lemma_index = lemmas
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.clone(), i))
        .collect();
    let occurrence_index = occurrences
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.clone(), i))
        .collect();
    Ok(Corpus {
        lemmas,
        occurrences,
        ranges,
        lemma_index,
        occurrence_index,
    })
}

impl Corpus {
    pub fn lemmas(&self) -> &[Lemma] {
        &self.lemmas
    }

    pub fn lemma_count(&self) -> usize {
        self.lemmas.len()
    }

    /// All occurrences, lemma by lemma.
    pub fn occurrences(&self) -> &[Occurrence] {
        &self.occurrences
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    pub fn lemma_position(&self, lemma: &str) -> Option<usize> {
        self.lemma_index.get(lemma).copied()
    }

    /// Occurrences of the lemma at position `idx` in [`Corpus::lemmas`].
    pub fn occurrences_at(&self, idx: usize) -> &[Occurrence] {
        &self.occurrences[self.ranges[idx].clone()]
    }

    pub fn occurrences_of(&self, lemma: &str) -> Result<&[Occurrence]> {
        self.lemma_position(lemma)
            .map(|i| self.occurrences_at(i))
            .ok_or_else(|| Error::UnknownLemma(lemma.to_string()))
    }

    pub fn occurrence(&self, id: &str) -> Option<&Occurrence> {
        self.occurrence_index.get(id).map(|&i| &self.occurrences[i])
    }

    /// Position of an occurrence in [`Corpus::occurrences`].
    pub fn occurrence_position(&self, id: &str) -> Option<usize> {
        self.occurrence_index.get(id).copied()
    }

    pub fn iter_lemmas(&self) -> impl Iterator<Item = (&Lemma, &[Occurrence])> + '_ {
        self.lemmas
            .iter()
            .zip(&self.ranges)
            .map(move |(l, r)| (l, &self.occurrences[r.clone()]))
    }
}

/// Copies the gold concept and POS of every annotation onto the record
/// with the same id. Records without an annotation keep their own values.
pub fn apply_annotations(records: &mut [OccurrenceRecord], annotations: &[OccurrenceRecord]) {
    let by_id: BTreeMap<&str, &OccurrenceRecord> =
        annotations.iter().map(|r| (r.id.as_str(), r)).collect();
    for r in records {
        if let Some(a) = by_id.get(r.id.as_str()) {
            r.gold_concept = a.gold_concept.clone();
            r.pos = a.pos.clone();
        }
    }
}

/// Reads a JSONL annotation file: one [`OccurrenceRecord`] per line.
pub fn read_annotations_jsonl<R: BufRead>(reader: R) -> Result<Vec<OccurrenceRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::Json {
            line: n + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reference clusterings derived from gold concept annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldClusterings {
    concept_of: BTreeMap<String, String>,
    lemma_of: BTreeMap<String, String>,
    word_clustering: BTreeMap<String, BTreeSet<String>>,
    concept_occurrences: BTreeMap<String, Vec<String>>,
    sense_counts: BTreeMap<String, usize>,
}

impl GoldClusterings {
    /// Collects the annotated occurrences of `corpus`. Unannotated
    /// occurrences are skipped.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_pairs(corpus.occurrences().iter().filter_map(|o| {
            o.gold_concept
                .as_ref()
                .map(|k| (o.id.clone(), o.lemma.clone(), k.clone()))
        }))
    }

    /// Builds the gold from `(occurrence, lemma, concept)` triples.
    pub fn from_pairs<I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (String, String, String)>,
    {
        let mut concept_of = BTreeMap::new();
        let mut lemma_of = BTreeMap::new();
        let mut concept_occurrences: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (occ, lemma, concept) in triples {
            concept_occurrences
                .entry(concept.clone())
                .or_default()
                .push(occ.clone());
            lemma_of.insert(occ.clone(), lemma);
            concept_of.insert(occ, concept);
        }
        let word_clustering = derive_gold_word_clustering(&concept_of, &lemma_of);
        let mut per_lemma: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        for (occ, concept) in &concept_of {
            per_lemma
                .entry(lemma_of[occ].clone())
                .or_default()
                .insert(concept.as_str());
        }
        let sense_counts = per_lemma.into_iter().map(|(l, s)| (l, s.len())).collect();
        GoldClusterings {
            concept_of,
            lemma_of,
            word_clustering,
            concept_occurrences,
            sense_counts,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.concept_of.is_empty()
    }

    pub fn concept_of(&self, occurrence: &str) -> Option<&str> {
        self.concept_of.get(occurrence).map(String::as_str)
    }

    pub fn lemma_of(&self, occurrence: &str) -> Option<&str> {
        self.lemma_of.get(occurrence).map(String::as_str)
    }

    /// The reference occurrence partition C as occurrence → concept.
    pub fn concept_partition(&self) -> &BTreeMap<String, String> {
        &self.concept_of
    }

    /// The reference word clustering C^W as concept → lemmas.
    pub fn word_clustering(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.word_clustering
    }

    pub fn concept_count(&self) -> usize {
        self.word_clustering.len()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> + '_ {
        self.word_clustering.keys().map(String::as_str)
    }

    pub fn occurrences_of_concept(&self, concept: &str) -> &[String] {
        self.concept_occurrences
            .get(concept)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn sense_counts(&self) -> &BTreeMap<String, usize> {
        &self.sense_counts
    }

    pub fn sense_count(&self, lemma: &str) -> usize {
        self.sense_counts.get(lemma).copied().unwrap_or(0)
    }

    /// C^W restricted to the given concepts, as a [`WordClustering`] ordered
    /// by concept id.
    pub fn to_word_clustering(&self, concepts: Option<&BTreeSet<String>>) -> WordClustering {
        WordClustering::new(
            self.word_clustering
                .iter()
                .filter(|(k, _)| concepts.is_none_or(|c| c.contains(*k)))
                .map(|(_, lemmas)| lemmas.iter().cloned().collect())
                .collect(),
        )
    }
}

/// Regenerates C^W from an occurrence → concept map: lemma `w` belongs to
/// cluster `k` iff some occurrence of `w` has concept `k`.
pub fn derive_gold_word_clustering(
    concept_of: &BTreeMap<String, String>,
    lemma_of: &BTreeMap<String, String>,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut clusters: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (occ, concept) in concept_of {
        if let Some(lemma) = lemma_of.get(occ) {
            clusters
                .entry(concept.clone())
                .or_default()
                .insert(lemma.clone());
        }
    }
    clusters
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Full,
    Dev,
    Synon,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Full => "full",
            SplitName::Dev => "dev",
            SplitName::Synon => "synon",
        })
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(SplitName::Full),
            "dev" => Ok(SplitName::Dev),
            "synon" => Ok(SplitName::Synon),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

/// A set of gold concepts and the occurrences annotated with them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitSpec {
    pub name: SplitName,
    pub concept_ids: BTreeSet<String>,
    pub occurrence_ids: BTreeSet<String>,
}

impl SplitSpec {
    fn from_concepts(name: SplitName, gold: &GoldClusterings, concepts: BTreeSet<String>) -> Self {
        let occurrence_ids = concepts
            .iter()
            .flat_map(|k| gold.occurrences_of_concept(k).iter().cloned())
            .collect();
        SplitSpec {
            name,
            concept_ids: concepts,
            occurrence_ids,
        }
    }

    pub fn full(gold: &GoldClusterings) -> Self {
        Self::from_concepts(
            SplitName::Full,
            gold,
            gold.concepts().map(str::to_string).collect(),
        )
    }

    pub fn contains_occurrence(&self, id: &str) -> bool {
        self.occurrence_ids.contains(id)
    }

    /// Lemmas with at least one occurrence in the split.
    pub fn lemmas(&self, gold: &GoldClusterings) -> BTreeSet<String> {
        self.occurrence_ids
            .iter()
            .filter_map(|o| gold.lemma_of(o).map(str::to_string))
            .collect()
    }
}

/// Number of concepts drawn into the dev split: `floor(fraction * total)`.
pub fn dev_concept_count(total: usize, fraction: f64) -> usize {
    // 1e-9 absorbs representation error such as 0.1 * 30 = 3.0000000000000004
    ((fraction * total as f64) + 1e-9).floor() as usize
}

/// Samples `floor(fraction * #concepts)` gold concepts uniformly without
/// replacement, using a ChaCha8 generator seeded with `seed`.
pub fn make_dev_split(gold: &GoldClusterings, fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dev fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if gold.is_empty() {
        return Err(Error::DegenerateInput("gold annotation is empty".into()));
    }
    let concepts: Vec<&str> = gold.concepts().collect();
    let amount = dev_concept_count(concepts.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, concepts.len(), amount);
    let chosen = picked.iter().map(|i| concepts[i].to_string()).collect();
    Ok(SplitSpec::from_concepts(SplitName::Dev, gold, chosen))
}

/// Concepts instantiated through at least two distinct lemmas.
pub fn make_synon_split(gold: &GoldClusterings) -> SplitSpec {
    let chosen = gold
        .word_clustering()
        .iter()
        .filter(|(_, lemmas)| lemmas.len() >= 2)
        .map(|(k, _)| k.clone())
        .collect();
    SplitSpec::from_concepts(SplitName::Synon, gold, chosen)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub split: SplitName,
    pub occurrences: usize,
    pub lemmas: usize,
    pub concepts: usize,
    pub occurrences_per_concept: f64,
    pub occurrences_per_lemma: f64,
    /// Mean number of unique lemmas per concept.
    pub d_lex: f64,
    /// Mean number of distinct concepts per lemma.
    pub d_polysemy: f64,
}

/// Table-style statistics of the corpus occurrences falling in `split`.
pub fn corpus_stats(corpus: &Corpus, gold: &GoldClusterings, split: &SplitSpec) -> StatsReport {
    let mut lemmas_per_concept: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut concepts_per_lemma: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut occurrences = 0usize;
    for occ in corpus.occurrences() {
        if !split.contains_occurrence(&occ.id) {
            continue;
        }
        let Some(concept) = gold.concept_of(&occ.id) else {
            continue;
        };
        occurrences += 1;
        lemmas_per_concept
            .entry(concept)
            .or_default()
            .insert(&occ.lemma);
        concepts_per_lemma
            .entry(&occ.lemma)
            .or_default()
            .insert(concept);
    }
    let concepts = lemmas_per_concept.len();
    let lemmas = concepts_per_lemma.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let d_lex = ratio(
        lemmas_per_concept.values().map(BTreeSet::len).sum(),
        concepts,
    );
    let d_polysemy = ratio(concepts_per_lemma.values().map(BTreeSet::len).sum(), lemmas);
    StatsReport {
        split: split.name,
        occurrences,
        lemmas,
        concepts,
        occurrences_per_concept: ratio(occurrences, concepts),
        occurrences_per_lemma: ratio(occurrences, lemmas),
        d_lex,
        d_polysemy,
    }
}
