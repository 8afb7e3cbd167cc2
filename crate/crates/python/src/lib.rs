//! Python bindings for `concept-forge`.
//!
//! The module exposes the embedding store, corpora with their gold
//! annotation, pipeline configurations, induction, evaluation, the sweep,
//! concept embedding tables and the standalone metrics. Library errors are
//! raised as `ConceptForgeError`; long computations release the GIL.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use concept_forge::cluster::{derive_threshold as core_threshold, Linkage};
use concept_forge::concept::{
    assign_concept, build_concept_embeddings, wic_evaluate, ConceptEmbeddingTable, WicPair,
};
use concept_forge::corpus::{
    apply_annotations, corpus_stats, load_corpus, make_dev_split, make_synon_split,
    read_annotations_jsonl, Corpus, GoldClusterings, SplitName, SplitSpec, DEFAULT_DEV_FRACTION,
    DEFAULT_MIN_OCCURRENCES,
};
use concept_forge::eval::{self, evaluate_partition};
use concept_forge::pipeline::{
    self, agglo_grid, baseline_lemmas_partition, baseline_oracle_wsi_partition, ClusterArtifact,
    ConceptPartition, InductionOutput, PipelineConfig, WordClustering,
};
use concept_forge::store::{EmbeddingStore, StoreRecord};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(concept_forge_py, ConceptForgeError, PyException);

fn to_py_err(e: concept_forge::Error) -> PyErr {
    ConceptForgeError::new_err(format!("{}: {e}", e.kind()))
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for concept_forge::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn parse<T>(s: &str) -> PyResult<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e: T::Err| ConceptForgeError::new_err(e.to_string()))
}

/// Converts any serialisable value into plain Python objects.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value)
        .map_err(|e| ConceptForgeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Occurrence embeddings with their metadata.
#[pyclass(name = "EmbeddingStore", module = "concept_forge_py", frozen)]
pub struct PyEmbeddingStore {
    inner: EmbeddingStore,
}

#[pymethods]
impl PyEmbeddingStore {
    /// Opens a binary or JSONL store.
    #[staticmethod]
    fn open(py: Python<'_>, path: &str) -> PyResult<Self> {
        let inner = py.detach(|| EmbeddingStore::open(path)).or_raise()?;
        Ok(PyEmbeddingStore { inner })
    }

    /// Builds a store from parallel lists; `gold` may be omitted or hold
    /// `None` for unannotated occurrences.
    #[staticmethod]
    #[pyo3(signature = (ids, lemmas, sentence_ids, token_indices, vectors, gold=None))]
    fn from_rows(
        ids: Vec<String>,
        lemmas: Vec<String>,
        sentence_ids: Vec<String>,
        token_indices: Vec<u32>,
        vectors: Vec<Vec<f32>>,
        gold: Option<Vec<Option<String>>>,
    ) -> PyResult<Self> {
        let n = ids.len();
        if [lemmas.len(), sentence_ids.len(), token_indices.len(), vectors.len()]
            .iter()
            .any(|&l| l != n)
            || gold.as_ref().is_some_and(|g| g.len() != n)
        {
            return Err(ConceptForgeError::new_err("row lists have different lengths"));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(ConceptForgeError::new_err("vectors have different lengths"));
        }
        let gold = gold.unwrap_or_else(|| vec![None; n]);
        let records = ids
            .into_iter()
            .zip(lemmas)
            .zip(sentence_ids)
            .zip(token_indices)
            .zip(gold)
            .map(|((((id, lemma), sentence_id), token_index), gold_concept)| StoreRecord {
                id,
                lemma,
                sentence_id,
                token_index,
                gold_concept,
            })
            .collect();
        let inner = EmbeddingStore::new(dim, records, vectors.concat()).or_raise()?;
        Ok(PyEmbeddingStore { inner })
    }

    /// Writes the binary format; returns the number of bytes written.
    fn save(&self, py: Python<'_>, path: &str) -> PyResult<u64> {
        py.detach(|| self.inner.save(path)).or_raise()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.id.clone()).collect()
    }

    fn records(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.records())
    }

    fn vector(&self, id: &str) -> PyResult<Vec<f32>> {
        self.inner
            .vector_of(id)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| ConceptForgeError::new_err(format!("no vector for {id:?}")))
    }
}

/// The filtered lexicon, its embeddings and its gold annotation.
#[pyclass(name = "Corpus", module = "concept_forge_py", frozen)]
pub struct PyCorpus {
    corpus: Corpus,
    store: EmbeddingStore,
    gold: GoldClusterings,
}

impl PyCorpus {
    fn split(&self, name: &str, dev_fraction: f64, seed: u64) -> PyResult<SplitSpec> {
        match parse::<SplitName>(name)? {
            SplitName::Full => Ok(SplitSpec::full(&self.gold)),
            SplitName::Dev => make_dev_split(&self.gold, dev_fraction, seed).or_raise(),
            SplitName::Synon => Ok(make_synon_split(&self.gold)),
        }
    }
}

#[pymethods]
impl PyCorpus {
    /// Builds the corpus from a store. Annotations in the JSONL file at
    /// `gold` replace those carried by the store.
    #[new]
    #[pyo3(signature = (store, gold=None, min_occurrences=DEFAULT_MIN_OCCURRENCES))]
    fn new(store: &PyEmbeddingStore, gold: Option<&str>, min_occurrences: usize) -> PyResult<Self> {
        let mut records = store.inner.occurrence_records();
        if let Some(path) = gold {
            let file = File::open(path).map_err(|e| to_py_err(e.into()))?;
            let annotations = read_annotations_jsonl(BufReader::new(file)).or_raise()?;
            apply_annotations(&mut records, &annotations);
        }
        let corpus = load_corpus(records, min_occurrences).or_raise()?;
        let store = store.inner.restrict_to_corpus(&corpus).or_raise()?;
        let gold = GoldClusterings::from_corpus(&corpus);
        Ok(PyCorpus { corpus, store, gold })
    }

    fn __len__(&self) -> usize {
        self.corpus.len()
    }

    #[getter]
    fn lemma_count(&self) -> usize {
        self.corpus.lemma_count()
    }

    fn lemmas(&self) -> Vec<String> {
        self.corpus.lemmas().iter().map(|l| l.id.clone()).collect()
    }

    /// The store restricted to the corpus occurrences.
    fn store(&self) -> PyEmbeddingStore {
        PyEmbeddingStore {
            inner: self.store.clone(),
        }
    }

    #[pyo3(signature = (split="full", dev_fraction=DEFAULT_DEV_FRACTION, seed=0))]
    fn stats(&self, py: Python<'_>, split: &str, dev_fraction: f64, seed: u64) -> PyResult<Py<PyAny>> {
        let split = self.split(split, dev_fraction, seed)?;
        to_python(py, &corpus_stats(&self.corpus, &self.gold, &split))
    }
}

/// Local and global algorithm choices plus the shared settings. Algorithms
/// use the command-line syntax, e.g. `agglo:average:nu=0.5`, `kmeans:k=3`,
/// `identity`, `kmeans:pi=0.8` or `none`.
#[pyclass(name = "PipelineConfig", module = "concept_forge_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPipelineConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    #[pyo3(signature = (local="agglo:average:nu=0", global_="agglo:average:nu=0", metric="cosine", seed=0, sample_cap=None, max_iter=None))]
    fn new(
        local: &str,
        global_: &str,
        metric: &str,
        seed: u64,
        sample_cap: Option<usize>,
        max_iter: Option<usize>,
    ) -> PyResult<Self> {
        let mut inner = PipelineConfig::new(parse(local)?, parse(global_)?)
            .with_metric(parse(metric)?)
            .with_seed(seed);
        if let Some(cap) = sample_cap {
            inner.sample_cap = cap;
        }
        if let Some(iters) = max_iter {
            inner.max_iter = iters;
        }
        inner.validate().or_raise()?;
        Ok(PyPipelineConfig { inner })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("PipelineConfig({})", self.inner.label())
    }
}

/// Senses, concepts and the word-level clustering of one run.
#[pyclass(name = "Induction", module = "concept_forge_py", frozen)]
pub struct PyInduction {
    output: InductionOutput,
    artifact: ClusterArtifact,
}

impl PyInduction {
    fn new(output: InductionOutput, artifact: ClusterArtifact) -> Self {
        PyInduction { output, artifact }
    }

    fn from_partition(corpus: &PyCorpus, concepts: ConceptPartition, name: &str) -> Self {
        let words = pipeline::derive_word_clustering(&concepts, &corpus.corpus);
        let senses = pipeline::SensePartition::singletons(&corpus.corpus);
        let artifact = ClusterArtifact::from_parts(
            &senses,
            &concepts,
            &corpus.corpus,
            serde_json::json!({ "baseline": name }),
            0,
        );
        PyInduction::new(
            InductionOutput {
                senses,
                concepts,
                words,
            },
            artifact,
        )
    }
}

#[pymethods]
impl PyInduction {
    #[getter]
    fn n_concepts(&self) -> usize {
        self.output.concepts.p()
    }

    #[getter]
    fn n_senses(&self) -> usize {
        self.output.senses.sense_count()
    }

    /// Occurrence id to concept label.
    fn concepts(&self) -> BTreeMap<String, usize> {
        self.output
            .concepts
            .occurrence_ids()
            .iter()
            .cloned()
            .zip(self.output.concepts.labels().iter().copied())
            .collect()
    }

    /// Occurrence id to `(lemma, local sense label)`.
    fn senses(&self) -> BTreeMap<String, (String, usize)> {
        let mut out = BTreeMap::new();
        for lemma in self.output.senses.lemmas() {
            for (occ, &label) in lemma.occurrences.iter().zip(lemma.assignment.labels()) {
                out.insert(occ.clone(), (lemma.lemma.clone(), label));
            }
        }
        out
    }

    /// The lemmas of every concept, one list per concept.
    fn word_clusters(&self) -> Vec<Vec<String>> {
        self.output.words.clusters().to_vec()
    }

    /// The `clusters.json` document written by the command line.
    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.artifact.write_json(&mut buf).or_raise()?;
        String::from_utf8(buf).map_err(|e| ConceptForgeError::new_err(e.to_string()))
    }
}

/// Runs the pipeline described by `config` on `corpus`.
#[pyfunction]
fn induce(py: Python<'_>, corpus: &PyCorpus, config: &PyPipelineConfig) -> PyResult<PyInduction> {
    let output = py
        .detach(|| pipeline::induce(&corpus.corpus, &corpus.store, &config.inner))
        .or_raise()?;
    let artifact = ClusterArtifact::from_output(&output, &corpus.corpus, &config.inner);
    Ok(PyInduction::new(output, artifact))
}

/// The `lemmas` or `oracle-wsi` baseline as an induction result.
#[pyfunction]
fn baseline(corpus: &PyCorpus, name: &str) -> PyResult<PyInduction> {
    let concepts = match name {
        "lemmas" => baseline_lemmas_partition(&corpus.corpus),
        "oracle-wsi" | "oracle_wsi" => {
            baseline_oracle_wsi_partition(&corpus.corpus, &corpus.gold).or_raise()?
        }
        other => return Err(ConceptForgeError::new_err(format!("unknown baseline {other:?}"))),
    };
    Ok(PyInduction::from_partition(corpus, concepts, name))
}

/// Extended BCubed, WSI F1 and Spearman rho of `induction` on a split.
#[pyfunction]
#[pyo3(signature = (corpus, induction, split="full", dev_fraction=DEFAULT_DEV_FRACTION, seed=0, beta=1.0))]
fn evaluate(
    py: Python<'_>,
    corpus: &PyCorpus,
    induction: &PyInduction,
    split: &str,
    dev_fraction: f64,
    seed: u64,
    beta: f64,
) -> PyResult<Py<PyAny>> {
    let split = corpus.split(split, dev_fraction, seed)?;
    let report = py
        .detach(|| {
            evaluate_partition(
                &corpus.corpus,
                &corpus.gold,
                &induction.output.concepts,
                &split,
                "python",
                beta,
            )
        })
        .or_raise()?;
    to_python(py, &report)
}

/// Grid search over agglomerative thresholds; returns the best
/// configuration and the leaderboard.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (corpus, local_nus, global_nus, linkages=vec!["average".to_string()], base=None, split="dev", dev_fraction=DEFAULT_DEV_FRACTION))]
fn sweep(
    py: Python<'_>,
    corpus: &PyCorpus,
    local_nus: Vec<f64>,
    global_nus: Vec<f64>,
    linkages: Vec<String>,
    base: Option<&PyPipelineConfig>,
    split: &str,
    dev_fraction: f64,
) -> PyResult<(PyPipelineConfig, Py<PyAny>)> {
    let base = base.map_or_else(PipelineConfig::bilevel_agglo_reference, |b| b.inner.clone());
    let linkages = linkages
        .iter()
        .map(|l| parse::<Linkage>(l))
        .collect::<PyResult<Vec<_>>>()?;
    let grid = agglo_grid(&local_nus, &global_nus, &linkages, &base);
    let split = corpus.split(split, dev_fraction, base.seed)?;
    let outcome = py
        .detach(|| pipeline::sweep(&corpus.corpus, &corpus.store, &corpus.gold, &split, &grid))
        .or_raise()?;
    Ok((
        PyPipelineConfig {
            inner: outcome.best.clone(),
        },
        to_python(py, &outcome.leaderboard)?,
    ))
}

/// One mean vector per induced concept.
#[pyclass(name = "ConceptTable", module = "concept_forge_py", frozen)]
pub struct PyConceptTable {
    inner: ConceptEmbeddingTable,
}

#[pymethods]
impl PyConceptTable {
    /// Averages the store vectors of every concept of `induction`.
    #[staticmethod]
    fn build(store: &PyEmbeddingStore, induction: &PyInduction) -> PyResult<Self> {
        let inner = build_concept_embeddings(&store.inner, &induction.output.concepts).or_raise()?;
        Ok(PyConceptTable { inner })
    }

    /// Reads a table written by `save` or `export-embeddings`.
    #[staticmethod]
    fn open(path: &str) -> PyResult<Self> {
        let store = EmbeddingStore::open(path).or_raise()?;
        let inner = ConceptEmbeddingTable::from_store(&store).or_raise()?;
        Ok(PyConceptTable { inner })
    }

    fn save(&self, path: &str) -> PyResult<u64> {
        self.inner.to_store().or_raise()?.save(path).or_raise()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn ids(&self) -> Vec<usize> {
        self.inner.ids().to_vec()
    }

    fn vector(&self, id: usize) -> PyResult<Vec<f64>> {
        self.inner
            .vector(id)
            .map(|v| v.to_vec())
            .ok_or_else(|| ConceptForgeError::new_err(format!("no concept {id}")))
    }

    /// The concept whose vector is closest in cosine distance.
    fn assign(&self, vector: Vec<f64>) -> PyResult<usize> {
        assign_concept(&vector, &self.inner).or_raise()
    }

    /// Accuracy of the same-concept classifier on `(first, second, gold)`
    /// triples.
    fn wic_accuracy(&self, pairs: Vec<(Vec<f64>, Vec<f64>, bool)>) -> PyResult<f64> {
        let pairs: Vec<WicPair> = pairs
            .into_iter()
            .map(|(first, second, gold)| WicPair { first, second, gold })
            .collect();
        wic_evaluate(&pairs, &self.inner).or_raise()
    }
}

/// Extended BCubed of two soft clusterings given as lists of lemma lists;
/// returns `(precision, recall, f)`.
#[pyfunction]
#[pyo3(signature = (pred, gold, beta=1.0))]
fn bcubed_ci(pred: Vec<Vec<String>>, gold: Vec<Vec<String>>, beta: f64) -> PyResult<(f64, f64, f64)> {
    let s = eval::bcubed_ci(&WordClustering::new(pred), &WordClustering::new(gold), beta, None)
        .or_raise()?;
    Ok((s.precision, s.recall, s.f_beta))
}

/// Item-level BCubed of two label lists; returns `(precision, recall, f)`.
#[pyfunction]
#[pyo3(signature = (pred, gold, beta=1.0))]
fn bcubed_classic(pred: Vec<usize>, gold: Vec<usize>, beta: f64) -> PyResult<(f64, f64, f64)> {
    let s = eval::bcubed_classic(&pred, &gold, beta).or_raise()?;
    Ok((s.precision, s.recall, s.f_beta))
}

#[pyfunction]
#[pyo3(signature = (precision, recall, beta=1.0))]
fn f_beta(precision: f64, recall: f64, beta: f64) -> PyResult<f64> {
    eval::f_beta(precision, recall, beta).or_raise()
}

/// Spearman correlation of per-lemma counts; `None` when undefined.
#[pyfunction]
fn spearman(pred: BTreeMap<String, usize>, gold: BTreeMap<String, usize>) -> PyResult<Option<f64>> {
    eval::spearman_rho(&pred, &gold).or_raise()
}

#[pyfunction]
fn derive_threshold(mean: f64, std: f64, nu: f64) -> PyResult<f64> {
    if std.is_nan() || std < 0.0 {
        return Err(ConceptForgeError::new_err("std must be non-negative"));
    }
    Ok(core_threshold(mean, std, nu))
}

#[pymodule]
pub fn concept_forge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConceptForgeError", m.py().get_type::<ConceptForgeError>())?;
    m.add_class::<PyEmbeddingStore>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_class::<PyInduction>()?;
    m.add_class::<PyConceptTable>()?;
    m.add_function(wrap_pyfunction!(induce, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(bcubed_ci, m)?)?;
    m.add_function(wrap_pyfunction!(bcubed_classic, m)?)?;
    m.add_function(wrap_pyfunction!(f_beta, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(derive_threshold, m)?)?;
    Ok(())
}
