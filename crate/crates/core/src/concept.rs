//! Concept-aware static embeddings and the same-concept WiC classifier.
//!
//! Every global cluster gets the mean vector of its occurrences. A new
//! occurrence is mapped to the entry with the smallest cosine distance, and
//! two occurrences are judged to share a meaning iff they map to the same
//! entry.

use std::io::BufRead;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::cluster::cosine_distance;
use crate::pipeline::ConceptPartition;
use crate::store::{EmbeddingStore, StoreRecord};
use crate::{Error, Result};

/// Lemma field written for table rows when exported as a store.
pub const TABLE_LEMMA: &str = "concept";

/// One vector per global cluster, keyed by cluster id in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptEmbeddingTable {
    ids: Vec<usize>,
    vectors: Array2<f64>,
}

impl ConceptEmbeddingTable {
    /// Validates ids (strictly increasing) and vectors (finite, nonzero).
    pub fn new(ids: Vec<usize>, vectors: Array2<f64>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::ZeroDim);
        }
        if ids.len() != vectors.nrows() {
            return Err(Error::Consistency(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.nrows()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Consistency("concept ids must be strictly increasing".into()));
        }
        for (id, row) in ids.iter().zip(vectors.rows()) {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidVector {
                    id: id.to_string(),
                    reason: "non-finite component".into(),
                });
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidVector {
                    id: id.to_string(),
                    reason: "zero vector".into(),
                });
            }
        }
        Ok(ConceptEmbeddingTable { ids, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, id: usize) -> Option<ArrayView1<'_, f64>> {
        self.ids
            .binary_search(&id)
            .ok()
            .map(|row| self.vectors.row(row))
    }

    /// The table as an embedding store: record id = cluster id. Components
    /// are narrowed to `f32`.
    pub fn to_store(&self) -> Result<EmbeddingStore> {
        let records = self
            .ids
            .iter()
            .map(|id| StoreRecord {
                id: id.to_string(),
                lemma: TABLE_LEMMA.to_string(),
                sentence_id: String::new(),
                token_index: 0,
                gold_concept: None,
            })
            .collect();
        let data = self.vectors.iter().map(|&x| x as f32).collect();
        EmbeddingStore::new(self.dim(), records, data)
    }

    /// Reads a table written by [`ConceptEmbeddingTable::to_store`]. Record
    /// ids must parse as cluster ids.
    pub fn from_store(store: &EmbeddingStore) -> Result<Self> {
        let mut rows: Vec<(usize, usize)> = store
            .records()
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r.id.parse::<usize>()
                    .map(|id| (id, row))
                    .map_err(|_| Error::Parse(format!("concept id {:?} is not an integer", r.id)))
            })
            .collect::<Result<_>>()?;
        rows.sort_unstable();
        let mut vectors = Array2::zeros((rows.len(), store.dim()));
        for (dst, &(_, row)) in vectors.rows_mut().into_iter().zip(&rows) {
            dst.into_iter()
                .zip(store.vector(row))
                .for_each(|(d, &s)| *d = f64::from(s));
        }
        Self::new(rows.into_iter().map(|(id, _)| id).collect(), vectors)
    }
}

/// Mean occurrence vector (64-bit accumulation) of every global cluster.
pub fn build_concept_embeddings(
    store: &EmbeddingStore,
    concepts: &ConceptPartition,
) -> Result<ConceptEmbeddingTable> {
    let clusters = concepts.clusters();
    let mut vectors = Array2::zeros((clusters.len(), store.dim()));
    for (k, (mut acc, members)) in vectors.rows_mut().into_iter().zip(&clusters).enumerate() {
        if members.is_empty() {
            return Err(Error::Consistency(format!("concept {k} is empty")));
        }
        for occ in members {
            let v = store
                .vector_of(occ)
                .ok_or_else(|| Error::MissingVector(occ.to_string()))?;
            acc.iter_mut().zip(v).for_each(|(a, &x)| *a += f64::from(x));
        }
        acc /= members.len() as f64;
    }
    ConceptEmbeddingTable::new((0..clusters.len()).collect(), vectors)
}

/// Cluster id of the entry closest to `vector` in cosine distance; ties go
/// to the smallest id.
pub fn assign_concept(vector: &[f64], table: &ConceptEmbeddingTable) -> Result<usize> {
    if table.is_empty() {
        return Err(Error::DegenerateInput("concept table is empty".into()));
    }
    if vector.len() != table.dim() {
        return Err(Error::Consistency(format!(
            "query has {} components, table has {}",
            vector.len(),
            table.dim()
        )));
    }
    if vector.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateInput("cannot assign a zero vector".into()));
    }
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("query vector has a non-finite component".into()));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (row, entry) in table.vectors.rows().into_iter().enumerate() {
        let d = match entry.as_slice() {
            Some(s) => cosine_distance(s, vector),
            None => cosine_distance(&entry.to_vec(), vector),
        };
        if d < best_d {
            best = row;
            best_d = d;
        }
    }
    Ok(table.ids[best])
}

/// One scored WiC item.
#[derive(Clone, Debug, PartialEq)]
pub struct WicPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub gold: bool,
}

/// Accuracy of the same-concept rule on `pairs`.
pub fn wic_evaluate(pairs: &[WicPair], table: &ConceptEmbeddingTable) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no WiC pairs to evaluate".into()));
    }
    let mut correct = 0usize;
    for pair in pairs {
        let same = assign_concept(&pair.first, table)? == assign_concept(&pair.second, table)?;
        correct += usize::from(same == pair.gold);
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// One line of a WiC data file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WicRecord {
    pub target: String,
    pub pos: String,
    /// Token positions of the target in each sentence, as written (`3-7`).
    pub positions: String,
    pub sentence1: String,
    pub sentence2: String,
}

impl WicRecord {
    pub fn is_noun(&self) -> bool {
        self.pos.eq_ignore_ascii_case("N")
    }
}

/// Parses the tab-separated WiC data layout: target, POS, positions, then
/// the two sentences.
pub fn read_wic_tsv<R: BufRead>(reader: R) -> Result<Vec<WicRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!(
                "WiC line {}: expected 5 tab-separated fields, got {}",
                n + 1,
                fields.len()
            )));
        }
        out.push(WicRecord {
            target: fields[0].to_string(),
            pos: fields[1].to_string(),
            positions: fields[2].to_string(),
            sentence1: fields[3].to_string(),
            sentence2: fields[4].to_string(),
        });
    }
    Ok(out)
}

/// Parses a WiC gold file of `T` / `F` lines.
pub fn read_wic_gold<R: BufRead>(reader: R) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        match line.trim() {
            "" => continue,
            "T" => out.push(true),
            "F" => out.push(false),
            other => {
                return Err(Error::Parse(format!(
                    "WiC gold line {}: expected T or F, got {other:?}",
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Store ids holding the two occurrence vectors of WiC item `index`.
pub fn wic_vector_ids(index: usize) -> (String, String) {
    (format!("wic-{index}-a"), format!("wic-{index}-b"))
}

/// Noun items of a WiC dataset paired with their vectors from `store`.
/// Item `i` of the data file uses the ids given by [`wic_vector_ids`].
pub fn wic_noun_pairs(
    records: &[WicRecord],
    gold: &[bool],
    store: &EmbeddingStore,
) -> Result<Vec<WicPair>> {
    if records.len() != gold.len() {
        return Err(Error::Consistency(format!(
            "{} WiC items but {} gold labels",
            records.len(),
            gold.len()
        )));
    }
    let widen = |id: &str| -> Result<Vec<f64>> {
        store
            .vector_of(id)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| Error::MissingVector(id.to_string()))
    };
    records
        .iter()
        .zip(gold)
        .enumerate()
        .filter(|(_, (r, _))| r.is_noun())
        .map(|(i, (_, &g))| {
            let (a, b) = wic_vector_ids(i);
            Ok(WicPair {
                first: widen(&a)?,
                second: widen(&b)?,
                gold: g,
            })
        })
        .collect()
}
