//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use concept_forge::cluster::{DistanceMetric, Linkage};
use concept_forge::corpus::{load_corpus, Corpus};
use concept_forge::store::{EmbeddingStore, StoreRecord};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Extended BCubed straight from the pair definitions: the clusters of a
/// lemma form a multiset of lemma sets, and the clusters two lemmas share
/// are the multiset intersection of their two multisets.
pub fn brute_force_bcubed(pred: &[Vec<String>], gold: &[Vec<String>]) -> (f64, f64) {
    fn clusters_of<'a>(c: &'a [Vec<String>], w: &str) -> BTreeMap<&'a [String], usize> {
        let mut out = BTreeMap::new();
        for k in c {
            if k.iter().any(|x| x == w) {
                *out.entry(k.as_slice()).or_insert(0) += 1;
            }
        }
        out
    }
    fn intersection(a: &BTreeMap<&[String], usize>, b: &BTreeMap<&[String], usize>) -> usize {
        a.iter()
            .map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0)))
            .sum()
    }
    let lexicon: BTreeSet<&str> = pred.iter().flatten().map(String::as_str).collect();
    let (mut p_total, mut r_total) = (0.0, 0.0);
    for &w in &lexicon {
        let (fw, gw) = (clusters_of(pred, w), clusters_of(gold, w));
        let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0, 0.0, 0);
        for &w2 in &lexicon {
            let sf = intersection(&fw, &clusters_of(pred, w2));
            let sg = intersection(&gw, &clusters_of(gold, w2));
            if sf >= 1 {
                p_sum += sf.min(sg) as f64 / sf as f64;
                p_n += 1;
            }
            if sg >= 1 {
                r_sum += sf.min(sg) as f64 / sg as f64;
                r_n += 1;
            }
        }
        p_total += p_sum / p_n as f64;
        r_total += r_sum / r_n as f64;
    }
    let n = lexicon.len() as f64;
    (p_total / n, r_total / n)
}

/// Item-level BCubed by enumerating all item pairs.
pub fn brute_force_classic(pred: &[usize], gold: &[usize]) -> (f64, f64) {
    let n = pred.len();
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..n {
        let same_pred = (0..n).filter(|&j| pred[j] == pred[i]).count();
        let same_gold = (0..n).filter(|&j| gold[j] == gold[i]).count();
        let both = (0..n)
            .filter(|&j| pred[j] == pred[i] && gold[j] == gold[i])
            .count();
        p += both as f64 / same_pred as f64;
        r += both as f64 / same_gold as f64;
    }
    (p / n as f64, r / n as f64)
}

/// Agglomerative clustering recomputing every cluster distance from the
/// point distances at every step. Clusters are named by their smallest
/// member; ties go to the lexicographically smallest name pair. Returns
/// the merges as (members of the first, members of the second, distance).
pub fn dendrogram_oracle(
    points: &[Vec<f64>],
    metric: DistanceMetric,
    linkage: Linkage,
) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let d = |a: usize, b: usize| metric.distance(&points[a], &points[b]);
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let pair: Vec<f64> = clusters[a]
                    .iter()
                    .flat_map(|&x| clusters[b].iter().map(move |&y| (x, y)))
                    .map(|(x, y)| d(x, y))
                    .collect();
                let v = match linkage {
                    Linkage::Single => pair.iter().copied().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pair.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Average => pair.iter().sum::<f64>() / pair.len() as f64,
                };
                if best.is_none_or(|(_, _, bv)| v < bv) {
                    best = Some((a, b, v));
                }
            }
        }
        let (a, b, v) = best.unwrap();
        merges.push((clusters[a].clone(), clusters[b].clone(), v));
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    merges
}

/// Canonical labels of the partition obtained by applying the merges whose
/// distance is at most `tau`, in order, stopping at the first that is not.
pub fn partition_after(n: usize, merges: &[(Vec<usize>, Vec<usize>, f64)], tau: f64) -> Vec<usize> {
    let mut owner: Vec<usize> = (0..n).collect();
    for (a, b, v) in merges {
        if v.is_nan() || *v > tau {
            break;
        }
        for &m in a.iter().chain(b) {
            owner[m] = a[0];
        }
    }
    canonical(&owner)
}

pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Store records of one synthetic occurrence.
pub fn record(id: String, lemma: &str, concept: Option<String>) -> StoreRecord {
    StoreRecord {
        sentence_id: format!("s-{id}"),
        id,
        lemma: lemma.to_string(),
        token_index: 0,
        gold_concept: concept,
    }
}

/// Synthetic lemma names that pass the lexicon filters.
pub fn lemma_name(i: usize) -> String {
    let letters: Vec<char> = ('a'..='z').collect();
    format!(
        "lem{}{}",
        letters[i / letters.len() % letters.len()],
        letters[i % letters.len()]
    )
}

/// A corpus whose lemmas instantiate concepts with known centres.
pub struct Planted {
    pub corpus: Corpus,
    pub store: EmbeddingStore,
    /// Smallest distance between two concept centres divided by the
    /// expected norm of the within-concept noise.
    pub separation: f64,
}

/// `lemma_concepts[w]` lists the concepts of lemma `w`; every
/// (lemma, concept) pair gets `per_pair` occurrences of
/// `centre + N(0, noise^2 I)`.
pub fn planted(
    lemma_concepts: &[Vec<usize>],
    concepts: usize,
    dim: usize,
    per_pair: usize,
    separation: f64,
    seed: u64,
) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..concepts)
        .map(|_| (0..dim).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..concepts {
        for b in a + 1..concepts {
            min_dist = min_dist.min(DistanceMetric::Euclidean.distance(&centres[a], &centres[b]));
        }
    }
    // expected noise norm is noise * sqrt(dim)
    let noise = min_dist / (separation * (dim as f64).sqrt());
    let mut rows = Vec::new();
    for (w, cs) in lemma_concepts.iter().enumerate() {
        let lemma = lemma_name(w);
        for &c in cs {
            for i in 0..per_pair {
                let v: Vec<f32> = centres[c]
                    .iter()
                    .map(|&x| (x + noise * gaussian(&mut rng)) as f32)
                    .collect();
                rows.push((record(format!("{lemma}-c{c}-{i:03}"), &lemma, Some(format!("k{c:03}"))), v));
            }
        }
    }
    let store = EmbeddingStore::from_rows(dim, rows).unwrap();
    let corpus = load_corpus(store.occurrence_records(), 1).unwrap();
    let store = store.restrict_to_corpus(&corpus).unwrap();
    Planted {
        corpus,
        store,
        separation: min_dist / (noise * (dim as f64).sqrt()),
    }
}

/// The layout of the planted-recovery benchmark: 40 lemmas and 60
/// concepts, of which 12 are shared by 2 or 3 lemmas.
pub fn planted_layout(seed: u64) -> (Vec<Vec<usize>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lemmas = 40;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); lemmas];
    // 48 private concepts: one per lemma, then 8 more to random lemmas
    for (w, cs) in out.iter_mut().enumerate() {
        cs.push(w);
    }
    for c in 40..48 {
        let w = rng.random_range(0..lemmas);
        out[w].push(c);
    }
    // 12 shared concepts, alternately over 2 and 3 distinct lemmas
    for (i, c) in (48..60).enumerate() {
        let want = 2 + i % 2;
        let mut picked = BTreeSet::new();
        while picked.len() < want {
            picked.insert(rng.random_range(0..lemmas));
        }
        for w in picked {
            out[w].push(c);
        }
    }
    (out, 60)
}

/// Small random corpus: up to `max_lemmas` lemmas with 1..=`max_occ`
/// occurrences each, random vectors and random gold concepts.
pub fn random_corpus(seed: u64, max_lemmas: usize, max_occ: usize, dim: usize) -> (Corpus, EmbeddingStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lemmas = rng.random_range(1..=max_lemmas);
    let concepts = rng.random_range(1..=4);
    let mut rows = Vec::new();
    for w in 0..lemmas {
        let lemma = lemma_name(w);
        for i in 0..rng.random_range(1..=max_occ) {
            let mut v: Vec<f32> = (0..dim).map(|_| gaussian(&mut rng) as f32).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            let concept = format!("k{}", rng.random_range(0..concepts));
            rows.push((record(format!("{lemma}-{i:03}"), &lemma, Some(concept)), v));
        }
    }
    let store = EmbeddingStore::from_rows(dim, rows).unwrap();
    let corpus = load_corpus(store.occurrence_records(), 1).unwrap();
    let store = store.restrict_to_corpus(&corpus).unwrap();
    (corpus, store)
}

/// Random soft clustering of `n` lemmas into `k` non-empty clusters
/// covering every lemma; clusters may repeat or overlap.
pub fn random_soft(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<String>> {
    let mut clusters: Vec<BTreeSet<usize>> = (0..k)
        .map(|_| {
            let mut c: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
            if c.is_empty() {
                c.insert(rng.random_range(0..n));
            }
            c
        })
        .collect();
    for w in 0..n {
        if !clusters.iter().any(|c| c.contains(&w)) {
            let target = rng.random_range(0..k);
            clusters[target].insert(w);
        }
    }
    if rng.random_bool(0.3) {
        let dup = clusters[rng.random_range(0..k)].clone();
        clusters.push(dup);
    }
    clusters
        .into_iter()
        .map(|c| c.into_iter().map(lemma_name).collect())
        .collect()
}

pub fn random_hard(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    canonical(&(0..n).map(|_| rng.random_range(0..k)).collect::<Vec<_>>())
}

pub fn hard_to_soft(labels: &[usize]) -> Vec<Vec<String>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (w, &l) in labels.iter().enumerate() {
        out[l].push(lemma_name(w));
    }
    out
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| gaussian(rng)).collect())
        .collect()
}

pub fn to_array(points: &[Vec<f64>]) -> Array2<f64> {
    let dim = points[0].len();
    Array2::from_shape_vec((points.len(), dim), points.concat()).unwrap()
}
