//! Clustering quality measures.
//!
//! * Extended BCubed compares two soft clusterings of the lexicon
//!   ([`bcubed_ci`], the concept induction score).
//! * Classic BCubed per lemma compares occurrence partitions
//!   ([`bcubed_wsi`], the word sense induction score).
//! * Spearman's ρ relates predicted and gold cluster counts per lemma.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::corpus::{Corpus, GoldClusterings, SplitName, SplitSpec};
use crate::pipeline::{derive_word_clustering, ConceptPartition, WordClustering};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BCubedScore {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
}

impl BCubedScore {
    pub fn new(precision: f64, recall: f64, beta: f64) -> Result<Self> {
        Ok(BCubedScore {
            precision,
            recall,
            f_beta: f_beta(precision, recall, beta)?,
            beta,
        })
    }
}

/// `(1 + β²)·P·R / (β²·P + R)`, or 0 when both are 0.
pub fn f_beta(p: f64, r: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let b2 = beta * beta;
    let den = b2 * p + r;
    Ok(if den == 0.0 { 0.0 } else { (1.0 + b2) * p * r / den })
}

/// For every lemma, how many clusters it shares with each lemma (itself
/// included). Identical clusters count separately.
fn co_counts(clustering: &WordClustering) -> HashMap<&str, HashMap<&str, usize>> {
    let mut out: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
    for cluster in clustering.clusters() {
        for a in cluster {
            let row = out.entry(a.as_str()).or_default();
            for b in cluster {
                *row.entry(b.as_str()).or_insert(0) += 1;
            }
        }
    }
    out
}

fn shared(counts: &HashMap<&str, HashMap<&str, usize>>, w1: &str, w2: &str) -> usize {
    counts
        .get(w1)
        .and_then(|row| row.get(w2))
        .copied()
        .unwrap_or(0)
}

/// Multiplicity precision and recall of a lemma pair. `None` marks a pair
/// that shares no cluster in `f` (for MP) or in `g` (for MR).
pub fn multiplicity_scores(
    w1: &str,
    w2: &str,
    f: &WordClustering,
    g: &WordClustering,
) -> (Option<f64>, Option<f64>) {
    let count = |c: &WordClustering| {
        c.clusters()
            .iter()
            .filter(|k| k.iter().any(|w| w == w1) && k.iter().any(|w| w == w2))
            .count()
    };
    ratios(count(f), count(g))
}

fn ratios(sf: usize, sg: usize) -> (Option<f64>, Option<f64>) {
    let m = sf.min(sg) as f64;
    let mp = (sf > 0).then(|| m / sf as f64);
    let mr = (sg > 0).then(|| m / sg as f64);
    (mp, mr)
}

/// Extended BCubed of a predicted word clustering against the gold one.
///
/// Each lemma's precision averages MP over the lemmas it shares a predicted
/// cluster with (itself included), its recall averages MR over its gold
/// partners; both are then averaged over the lexicon, or over `restrict`.
pub fn bcubed_ci(
    pred: &WordClustering,
    gold: &WordClustering,
    beta: f64,
    restrict: Option<&BTreeSet<String>>,
) -> Result<BCubedScore> {
    let lexicon = pred.lexicon();
    if lexicon != gold.lexicon() {
        let diff: Vec<&str> = lexicon
            .symmetric_difference(&gold.lexicon())
            .take(5)
            .copied()
            .collect();
        return Err(Error::Consistency(format!(
            "predicted and gold clusterings cover different lexicons (e.g. {diff:?})"
        )));
    }
    let targets: Vec<&str> = match restrict {
        Some(set) => {
            if let Some(w) = set.iter().find(|w| !lexicon.contains(w.as_str())) {
                return Err(Error::Consistency(format!("restricted lemma {w:?} is not in the lexicon")));
            }
            set.iter().map(String::as_str).collect()
        }
        None => lexicon.iter().copied().collect(),
    };
    if targets.is_empty() {
        return Err(Error::DegenerateInput("no lemmas to evaluate".into()));
    }

    let fc = co_counts(pred);
    let gc = co_counts(gold);
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for w in &targets {
        let mut partners: Vec<&str> = fc[w].keys().chain(gc[w].keys()).copied().collect();
        partners.sort_unstable();
        partners.dedup();
        let (mut mp, mut np, mut mr, mut nr) = (0.0, 0usize, 0.0, 0usize);
        for w2 in partners {
            let (p, r) = ratios(shared(&fc, w, w2), shared(&gc, w, w2));
            if let Some(p) = p {
                mp += p;
                np += 1;
            }
            if let Some(r) = r {
                mr += r;
                nr += 1;
            }
        }
        // the self pair guarantees np, nr >= 1
        p_sum += mp / np as f64;
        r_sum += mr / nr as f64;
    }
    let n = targets.len() as f64;
    BCubedScore::new(p_sum / n, r_sum / n, beta)
}

/// Classic item-level BCubed of two hard partitions given as label vectors.
pub fn bcubed_classic(pred: &[usize], gold: &[usize], beta: f64) -> Result<BCubedScore> {
    if pred.len() != gold.len() {
        return Err(Error::Consistency(format!(
            "{} predicted labels but {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::DegenerateInput("no items to evaluate".into()));
    }
    let mut pred_size: HashMap<usize, usize> = HashMap::new();
    let mut gold_size: HashMap<usize, usize> = HashMap::new();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        *pred_size.entry(p).or_insert(0) += 1;
        *gold_size.entry(g).or_insert(0) += 1;
        *joint.entry((p, g)).or_insert(0) += 1;
    }
    let (mut ps, mut rs) = (0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gold) {
        let both = joint[&(p, g)] as f64;
        ps += both / pred_size[&p] as f64;
        rs += both / gold_size[&g] as f64;
    }
    let n = pred.len() as f64;
    BCubedScore::new(ps / n, rs / n, beta)
}

/// Per-lemma WSI scores and their macro averages. `f_beta` is the mean of
/// the per-lemma F values, not F of the mean P and R.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WsiScores {
    pub per_lemma: BTreeMap<String, BCubedScore>,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
}

/// Classic BCubed between the predicted and gold partitions of each
/// lemma's occurrences, macro-averaged over lemmas.
pub fn bcubed_wsi(
    pred: &ConceptPartition,
    gold: &GoldClusterings,
    corpus: &Corpus,
    beta: f64,
) -> Result<WsiScores> {
    bcubed_wsi_restricted(pred, gold, corpus, beta, None, None)
}

/// [`bcubed_wsi`] over a subset: only occurrences in `occurrences` count,
/// and only lemmas in `lemmas` are averaged. Lemmas left without
/// occurrences are skipped.
pub fn bcubed_wsi_restricted(
    pred: &ConceptPartition,
    gold: &GoldClusterings,
    corpus: &Corpus,
    beta: f64,
    occurrences: Option<&BTreeSet<String>>,
    lemmas: Option<&BTreeSet<String>>,
) -> Result<WsiScores> {
    let mut per_lemma = BTreeMap::new();
    for (lemma, occs) in corpus.iter_lemmas() {
        if lemmas.is_some_and(|set| !set.contains(&lemma.id)) {
            continue;
        }
        let mut pred_labels = Vec::new();
        let mut gold_ids: HashMap<&str, usize> = HashMap::new();
        let mut gold_labels = Vec::new();
        for occ in occs {
            if occurrences.is_some_and(|set| !set.contains(&occ.id)) {
                continue;
            }
            let p = pred.label_of(&occ.id).ok_or_else(|| {
                Error::Consistency(format!("occurrence {:?} has no predicted cluster", occ.id))
            })?;
            let g = gold
                .concept_of(&occ.id)
                .ok_or_else(|| Error::MissingAnnotation(occ.id.clone()))?;
            let next = gold_ids.len();
            pred_labels.push(p);
            gold_labels.push(*gold_ids.entry(g).or_insert(next));
        }
        if pred_labels.is_empty() {
            continue;
        }
        per_lemma.insert(lemma.id.clone(), bcubed_classic(&pred_labels, &gold_labels, beta)?);
    }
    if per_lemma.is_empty() {
        return Err(Error::DegenerateInput("no lemmas to evaluate".into()));
    }
    let n = per_lemma.len() as f64;
    let mean = |f: fn(&BCubedScore) -> f64| per_lemma.values().map(f).sum::<f64>() / n;
    Ok(WsiScores {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f_beta: mean(|s| s.f_beta),
        beta,
        per_lemma,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied items share the mean of positions i..=j
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// fewer than two lemmas are given or either side is constant.
pub fn spearman_rho(
    pred_counts: &BTreeMap<String, usize>,
    gold_counts: &BTreeMap<String, usize>,
) -> Result<Option<f64>> {
    if !pred_counts.keys().eq(gold_counts.keys()) {
        return Err(Error::Consistency(
            "predicted and gold counts cover different lemmas".into(),
        ));
    }
    if pred_counts.len() < 2 {
        return Ok(None);
    }
    let x: Vec<f64> = pred_counts.values().map(|&v| v as f64).collect();
    let y: Vec<f64> = gold_counts.values().map(|&v| v as f64).collect();
    Ok(pearson(&average_ranks(&x), &average_ranks(&y)))
}

/// One line of evaluation output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub split: SplitName,
    pub system: String,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub wsi_f1: f64,
    pub rho: Option<f64>,
    pub n_clusters: usize,
}

/// The split's occurrences present in the corpus, in corpus order.
pub fn split_occurrences<'a>(corpus: &'a Corpus, split: &SplitSpec) -> Vec<&'a str> {
    corpus
        .occurrences()
        .iter()
        .filter(|o| split.contains_occurrence(&o.id))
        .map(|o| o.id.as_str())
        .collect()
}

/// CI and WSI scores of `pred` on `split`.
///
/// The prediction is restricted to the split's occurrences and the gold to
/// the split's concepts; the lexicon is then every lemma with at least one
/// occurrence in the split.
pub fn evaluate_partition(
    corpus: &Corpus,
    gold: &GoldClusterings,
    pred: &ConceptPartition,
    split: &SplitSpec,
    system: &str,
    beta: f64,
) -> Result<MetricsReport> {
    let occs = split_occurrences(corpus, split);
    if occs.is_empty() {
        return Err(Error::DegenerateInput(format!("split {} has no corpus occurrences", split.name)));
    }
    let restricted = pred.restrict(occs.iter().copied()).ok_or_else(|| {
        Error::Consistency("prediction does not cover every split occurrence".into())
    })?;
    let pred_wc = derive_word_clustering(&restricted, corpus);
    let split_gold = GoldClusterings::from_pairs(occs.iter().filter_map(|&o| {
        let concept = gold.concept_of(o)?;
        let lemma = corpus.occurrence(o)?.lemma.clone();
        Some((o.to_string(), lemma, concept.to_string()))
    }));
    let gold_wc = split_gold.to_word_clustering(None);
    let ci = bcubed_ci(&pred_wc, &gold_wc, beta, None)?;
    let occ_set: BTreeSet<String> = occs.iter().map(|o| o.to_string()).collect();
    let wsi = bcubed_wsi_restricted(pred, gold, corpus, beta, Some(&occ_set), None)?;
    let rho = spearman_rho(&pred_wc.membership_counts(), &gold_wc.membership_counts())?;
    Ok(MetricsReport {
        split: split.name,
        system: system.to_string(),
        precision: ci.precision,
        recall: ci.recall,
        f1: ci.f_beta,
        wsi_f1: wsi.f_beta,
        rho,
        n_clusters: restricted.p(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wc(clusters: &[&[&str]]) -> WordClustering {
        WordClustering::new(
            clusters
                .iter()
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
    }

    #[test]
    fn f_beta_values() {
        assert_abs_diff_eq!(f_beta(0.75, 0.60, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f_beta(0.4, 0.4, 1.0).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(f_beta(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(f_beta(0.0, 0.0, 2.0).unwrap(), 0.0);
        assert!(f_beta(0.5, 0.5, 0.0).is_err());
        assert!(f_beta(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn multiplicity_examples() {
        // a and b share two predicted clusters and one gold cluster
        let f = wc(&[&["a", "b"], &["a", "b"]]);
        let g = wc(&[&["a", "b"], &["a"]]);
        assert_eq!(multiplicity_scores("a", "b", &f, &g), (Some(0.5), Some(1.0)));
        let f = wc(&[&["a", "b"]]);
        let g = wc(&[&["a", "b"], &["a", "b"], &["a", "b"]]);
        let (mp, mr) = multiplicity_scores("a", "b", &f, &g);
        assert_eq!(mp, Some(1.0));
        assert_abs_diff_eq!(mr.unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(multiplicity_scores("a", "c", &f, &wc(&[&["a"], &["c"]])), (None, None));
    }

    #[test]
    fn identical_clusterings_score_one() {
        let g = wc(&[&["a", "b"], &["a"], &["c"]]);
        let s = bcubed_ci(&g, &g, 1.0, None).unwrap();
        assert_eq!((s.precision, s.recall, s.f_beta), (1.0, 1.0, 1.0));
    }

    #[test]
    fn lemma_baseline_recall_by_hand() {
        // gold: {a,b}, {a}; pred: {a}, {b}
        // a: MR partners a (sg=2, sf=1 -> 1/2), b (sg=1, sf=0 -> 0) => 1/4
        // b: partners a (sg=1 -> 0), b (sg=1, sf=1 -> 1) => 1/2
        let gold = wc(&[&["a", "b"], &["a"]]);
        let pred = wc(&[&["a"], &["b"]]);
        let s = bcubed_ci(&pred, &gold, 1.0, None).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_abs_diff_eq!(s.recall, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn lexicon_mismatch_is_an_error() {
        let err = bcubed_ci(&wc(&[&["a"]]), &wc(&[&["b"]]), 1.0, None).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
        let restrict: BTreeSet<String> = ["z".to_string()].into();
        assert!(bcubed_ci(&wc(&[&["a"]]), &wc(&[&["a"]]), 1.0, Some(&restrict)).is_err());
    }

    #[test]
    fn duplicate_cluster_lowers_precision() {
        let gold = wc(&[&["a", "b"]]);
        let once = bcubed_ci(&wc(&[&["a", "b"]]), &gold, 1.0, None).unwrap();
        let twice = bcubed_ci(&wc(&[&["a", "b"], &["a", "b"]]), &gold, 1.0, None).unwrap();
        assert!(twice.precision < once.precision);
    }

    #[test]
    fn classic_bcubed_two_plus_two() {
        let s = bcubed_classic(&[0, 0, 0, 0], &[0, 0, 1, 1], 1.0).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
    }

    #[test]
    fn spearman_cases() {
        let m = |v: &[(&str, usize)]| -> BTreeMap<String, usize> {
            v.iter().map(|(k, c)| (k.to_string(), *c)).collect()
        };
        let gold = m(&[("a", 1), ("b", 2), ("c", 5)]);
        assert_eq!(spearman_rho(&gold, &gold).unwrap(), Some(1.0));
        let rev = m(&[("a", 5), ("b", 2), ("c", 1)]);
        assert_eq!(spearman_rho(&rev, &gold).unwrap(), Some(-1.0));
        let flat = m(&[("a", 3), ("b", 3), ("c", 3)]);
        assert_eq!(spearman_rho(&flat, &gold).unwrap(), None);
        assert_eq!(spearman_rho(&m(&[("a", 1)]), &m(&[("a", 2)])).unwrap(), None);
        assert!(spearman_rho(&m(&[("a", 1), ("b", 2)]), &m(&[("a", 1), ("c", 2)])).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }
}
