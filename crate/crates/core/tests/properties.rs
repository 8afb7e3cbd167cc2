mod common;

use std::collections::{BTreeMap, BTreeSet};

use approx::assert_abs_diff_eq;
use concept_forge::cluster::{
    derive_threshold, kmeans_fit, merge_until, DistanceMatrix, DistanceMetric, Linkage,
};
use concept_forge::concept::{
    assign_concept, build_concept_embeddings, ConceptEmbeddingTable, WicPair,
};
use concept_forge::eval::{bcubed_ci, bcubed_classic, f_beta, spearman_rho};
use concept_forge::pipeline::{
    aggregate_centroids, derive_word_clustering, run_bilevel, run_global_only, validate_constraints, ConceptPartition,
    GlobalAlgorithm, LocalAlgorithm, PipelineConfig, WordClustering,
};
use concept_forge::store::{read_store, read_store_jsonl, write_store, write_store_jsonl};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extended_bcubed_matches_pair_oracle(seed in any::<u64>(), n in 1usize..=8, kp in 1usize..=4, kg in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_soft(&mut rng, n, kp);
        let gold = random_soft(&mut rng, n, kg);
        let s = bcubed_ci(&WordClustering::new(pred.clone()), &WordClustering::new(gold.clone()), 1.0, None).unwrap();
        let (p, r) = brute_force_bcubed(&pred, &gold);
        prop_assert!((s.precision - p).abs() <= 1e-12);
        prop_assert!((s.recall - r).abs() <= 1e-12);
        for v in [s.precision, s.recall, s.f_beta] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn extended_bcubed_of_identical_clusterings_is_one(seed in any::<u64>(), n in 1usize..=8, k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = WordClustering::new(random_soft(&mut rng, n, k));
        let s = bcubed_ci(&c, &c, 1.0, None).unwrap();
        prop_assert_eq!((s.precision, s.recall, s.f_beta), (1.0, 1.0, 1.0));
    }

    #[test]
    fn extended_bcubed_on_partitions_is_classic(seed in any::<u64>(), n in 1usize..=12, kp in 1usize..=5, kg in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_hard(&mut rng, n, kp);
        let gold = random_hard(&mut rng, n, kg);
        let ci = bcubed_ci(&WordClustering::new(hard_to_soft(&pred)), &WordClustering::new(hard_to_soft(&gold)), 1.0, None).unwrap();
        let (p, r) = brute_force_classic(&pred, &gold);
        prop_assert!((ci.precision - p).abs() <= 1e-12);
        prop_assert!((ci.recall - r).abs() <= 1e-12);
        let classic = bcubed_classic(&pred, &gold, 1.0).unwrap();
        prop_assert!((classic.precision - p).abs() <= 1e-12);
        prop_assert!((classic.recall - r).abs() <= 1e-12);
    }

    #[test]
    fn duplicating_a_cluster_never_raises_precision(seed in any::<u64>(), n in 2usize..=8, k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_soft(&mut rng, n, k);
        let gold = random_soft(&mut rng, n, k);
        let which = rng.random_range(0..pred.len());
        let mut doubled = pred.clone();
        doubled.push(pred[which].clone());
        let before = bcubed_ci(&WordClustering::new(pred.clone()), &WordClustering::new(gold.clone()), 1.0, None).unwrap();
        let after = bcubed_ci(&WordClustering::new(doubled), &WordClustering::new(gold.clone()), 1.0, None).unwrap();
        // a pair inside the duplicated cluster that shares a gold cluster,
        // but no more gold clusters than predicted ones, loses precision
        let count = |c: &[Vec<String>], a: &String, b: &String| c.iter().filter(|k| k.contains(a) && k.contains(b)).count();
        let loses = pred[which].iter().any(|a| pred[which].iter().any(|b| (1..=count(&pred, a, b)).contains(&count(&gold, a, b))));
        if loses {
            prop_assert!(after.precision < before.precision);
        } else {
            prop_assert!(after.precision >= before.precision);
        }
    }

    #[test]
    fn f_beta_is_symmetric_only_for_beta_one(p in 0.01f64..1.0, r in 0.01f64..1.0, beta in 0.1f64..4.0) {
        prop_assert_eq!(f_beta(p, r, 1.0).unwrap(), f_beta(r, p, 1.0).unwrap());
        if (p - r).abs() > 1e-3 && (beta - 1.0).abs() > 1e-3 {
            prop_assert!((f_beta(p, r, beta).unwrap() - f_beta(r, p, beta).unwrap()).abs() > 1e-12);
        }
        let f = f_beta(p, r, beta).unwrap();
        prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
    }

    #[test]
    fn agglomerative_matches_dendrogram_oracle(seed in any::<u64>(), n in 1usize..=8, dim in 1usize..=4, cosine in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, dim);
        let metric = if cosine { DistanceMetric::Cosine } else { DistanceMetric::Euclidean };
        for linkage in [Linkage::Single, Linkage::Average, Linkage::Complete] {
            let oracle = dendrogram_oracle(&points, metric, linkage);
            let matrix = DistanceMatrix::compute(to_array(&points).view(), metric);
            let (full, merges) = merge_until(matrix.clone(), linkage, f64::INFINITY);
            prop_assert_eq!(full.k(), 1);
            prop_assert_eq!(merges.len(), oracle.len());
            for (m, (a, b, v)) in merges.iter().zip(&oracle) {
                prop_assert_eq!((m.kept, m.absorbed), (a[0], b[0]));
                prop_assert!((m.distance - v).abs() <= 1e-9);
            }
            let mut taus: Vec<f64> = vec![-1.0];
            taus.extend(oracle.windows(2).map(|w| (w[0].2 + w[1].2) / 2.0));
            for tau in taus {
                let (part, _) = merge_until(matrix.clone(), linkage, tau);
                prop_assert_eq!(part.labels().to_vec(), partition_after(n, &oracle, tau));
            }
        }
    }

    #[test]
    fn kmeans_objective_never_increases(seed in any::<u64>(), n in 1usize..=60, k in 1usize..=8, dim in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, dim);
        let fit = kmeans_fit(to_array(&points).view(), k, seed, 100).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", fit.objective_trace);
        }
        prop_assert_eq!(fit.assignment.k(), k.min(n));
        prop_assert_eq!(&fit, &kmeans_fit(to_array(&points).view(), k, seed, 100).unwrap());
    }

    #[test]
    fn threshold_rule_is_affine_in_nu(mean in 0.0f64..2.0, std in 0.0f64..1.0, nu in -8.0f64..8.0) {
        prop_assert_eq!(derive_threshold(mean, std, nu), mean - nu * std);
        prop_assert_eq!(derive_threshold(mean, std, 0.0), mean);
    }

    #[test]
    fn assignment_is_scale_invariant(seed in any::<u64>(), k in 1usize..=6, lambda in 0.001f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = ConceptEmbeddingTable::new((0..k).collect(), to_array(&random_points(&mut rng, k, 3))).unwrap();
        let v: Vec<f64> = (0..3).map(|_| gaussian(&mut rng)).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
        prop_assert_eq!(assign_concept(&v, &table).unwrap(), assign_concept(&scaled, &table).unwrap());
    }

    #[test]
    fn wic_prediction_ignores_pair_order(seed in any::<u64>(), k in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = ConceptEmbeddingTable::new((0..k).collect(), to_array(&random_points(&mut rng, k, 3))).unwrap();
        let pairs: Vec<WicPair> = (0..10).map(|_| WicPair {
            first: (0..3).map(|_| gaussian(&mut rng)).collect(),
            second: (0..3).map(|_| gaussian(&mut rng)).collect(),
            gold: rng.random_bool(0.5),
        }).collect();
        let swapped: Vec<WicPair> = pairs.iter().map(|p| WicPair { first: p.second.clone(), second: p.first.clone(), gold: p.gold }).collect();
        prop_assert_eq!(
            concept_forge::concept::wic_evaluate(&pairs, &table).unwrap(),
            concept_forge::concept::wic_evaluate(&swapped, &table).unwrap()
        );
    }

    #[test]
    fn store_round_trips(seed in any::<u64>()) {
        let (_, store) = random_corpus(seed, 4, 6, 5);
        let mut buf = Vec::new();
        let written = write_store(&store, &mut buf).unwrap();
        prop_assert_eq!(written as usize, buf.len());
        prop_assert_eq!(&read_store(buf.as_slice()).unwrap(), &store);
        let mut text = Vec::new();
        write_store_jsonl(&store, &mut text).unwrap();
        prop_assert_eq!(&read_store_jsonl(text.as_slice()).unwrap(), &store);
    }

    #[test]
    fn truncated_stores_are_rejected(seed in any::<u64>(), cut in 1usize..200) {
        let (_, store) = random_corpus(seed, 3, 4, 3);
        let mut buf = Vec::new();
        write_store(&store, &mut buf).unwrap();
        let keep = buf.len().saturating_sub(cut);
        prop_assert!(read_store(&buf[..keep]).is_err());
    }

    #[test]
    fn concept_table_survives_refinement(seed in any::<u64>()) {
        let (corpus, store) = random_corpus(seed, 5, 8, 4);
        let config = PipelineConfig::new(LocalAlgorithm::KMeans { k: 2 }, GlobalAlgorithm::KMeans { proportion: 0.5 }).with_seed(seed);
        let out = run_bilevel(&corpus, &store, &config).unwrap();
        let table = build_concept_embeddings(&store, &out.concepts).unwrap();
        let ids = out.concepts.occurrence_ids().to_vec();
        let singles = ConceptPartition::from_labels(ids.clone(), (0..ids.len()).collect());
        let fine = build_concept_embeddings(&store, &singles).unwrap();
        for (k, members) in out.concepts.clusters().iter().enumerate() {
            let mut mean = vec![0.0; store.dim()];
            for occ in members {
                let row = singles.label_of(occ).unwrap();
                for (m, x) in mean.iter_mut().zip(fine.vector(row).unwrap()) {
                    *m += x / members.len() as f64;
                }
            }
            for (a, b) in mean.iter().zip(table.vector(k).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn pipeline_outputs_satisfy_constraints(seed in any::<u64>(), which in 0usize..6) {
        let (corpus, store) = random_corpus(seed, 6, 10, 4);
        let avg = Linkage::Average;
        let config = match which {
            0 => PipelineConfig::bilevel_agglo_reference(),
            1 => PipelineConfig::new(LocalAlgorithm::KMeans { k: 3 }, GlobalAlgorithm::KMeans { proportion: 1.2 }),
            2 => PipelineConfig::new(LocalAlgorithm::Agglomerative { linkage: Linkage::Single, nu: -1.0 }, GlobalAlgorithm::Agglomerative { linkage: Linkage::Complete, nu: 1.0 }),
            3 => PipelineConfig::new(LocalAlgorithm::Identity, GlobalAlgorithm::Agglomerative { linkage: avg, nu: 0.5 }),
            4 => PipelineConfig::new(LocalAlgorithm::KMeans { k: 2 }, GlobalAlgorithm::None),
            _ => PipelineConfig::new(LocalAlgorithm::Agglomerative { linkage: avg, nu: 0.0 }, GlobalAlgorithm::KMeans { proportion: 0.7 }).with_metric(DistanceMetric::Euclidean),
        }.with_seed(seed);
        let out = concept_forge::pipeline::induce(&corpus, &store, &config).unwrap();
        validate_constraints(&corpus, &out.senses, &out.concepts).unwrap();
        // one word cluster per global cluster; a lemma appears once per
        // distinct global cluster of its occurrences
        prop_assert_eq!(out.words.len(), out.concepts.p());
        let counts = out.words.membership_counts();
        for (lemma, occs) in corpus.iter_lemmas() {
            let distinct: BTreeSet<usize> = occs.iter().map(|o| out.concepts.label_of(&o.id).unwrap()).collect();
            prop_assert_eq!(counts[&lemma.id], distinct.len());
        }
    }

    #[test]
    fn identity_local_step_equals_global_only(seed in any::<u64>(), kmeans in any::<bool>()) {
        let (corpus, store) = random_corpus(seed, 5, 8, 4);
        let global = if kmeans {
            GlobalAlgorithm::KMeans { proportion: 1.5 }
        } else {
            GlobalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 0.5 }
        };
        let config = PipelineConfig::new(LocalAlgorithm::Identity, global).with_seed(seed);
        let a = run_bilevel(&corpus, &store, &config).unwrap();
        let b = run_global_only(&corpus, &store, &config).unwrap();
        prop_assert_eq!(a.concepts, b.concepts);
        prop_assert_eq!(a.words, b.words);
    }

    #[test]
    fn negative_global_threshold_is_pure_wsi(seed in any::<u64>()) {
        let (corpus, store) = random_corpus(seed, 5, 8, 4);
        let config = PipelineConfig::new(
            LocalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 0.0 },
            GlobalAlgorithm::Agglomerative { linkage: Linkage::Average, nu: 1e9 },
        );
        let out = run_bilevel(&corpus, &store, &config).unwrap();
        // with a single distinct centroid distance the spread is 0 and no
        // nu can push tau below 0
        let (centroids, _) = aggregate_centroids(&store, &out.senses).unwrap();
        if centroids.nrows() >= 2 {
            let s = DistanceMatrix::compute(centroids.view(), DistanceMetric::Cosine).stats().unwrap();
            prop_assume!(derive_threshold(s.mean, s.std, 1e9) < 0.0);
        }
        prop_assert_eq!(out.concepts.p(), out.senses.sense_count());
    }

    #[test]
    fn spearman_is_rank_based(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: BTreeMap<String, usize> = (0..n).map(|i| (lemma_name(i), rng.random_range(1..6))).collect();
        let pred: BTreeMap<String, usize> = gold.keys().map(|k| (k.clone(), rng.random_range(1..6))).collect();
        let squared: BTreeMap<String, usize> = pred.iter().map(|(k, v)| (k.clone(), v * v + 3)).collect();
        let a = spearman_rho(&pred, &gold).unwrap();
        prop_assert_eq!(a, spearman_rho(&squared, &gold).unwrap());
        if let Some(r) = a {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        let ident = spearman_rho(&gold, &gold).unwrap();
        if gold.values().collect::<BTreeSet<_>>().len() > 1 {
            prop_assert!((ident.unwrap() - 1.0).abs() <= 1e-12);
        } else {
            prop_assert_eq!(ident, None);
        }
    }
}

#[test]
fn threads_do_not_change_results() {
    let (corpus, store) = random_corpus(7, 8, 40, 8);
    let config = PipelineConfig::bilevel_agglo_reference().with_seed(3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_bilevel(&corpus, &store, &config).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn word_clustering_keeps_repeated_clusters() {
    let (corpus, _) = random_corpus(11, 1, 3, 2);
    let ids: Vec<String> = corpus.occurrences().iter().map(|o| o.id.clone()).collect();
    if ids.len() >= 2 {
        let labels = (0..ids.len()).map(|i| usize::from(i > 0)).collect();
        let words = derive_word_clustering(&ConceptPartition::from_labels(ids, labels), &corpus);
        assert_eq!(words.len(), 2);
        assert_eq!(words.clusters()[0], words.clusters()[1]);
    }
}

#[test]
fn hand_computed_threshold() {
    // points 0, 1, 3 on a line: distances 1, 3, 2
    let m = DistanceMatrix::compute(to_array(&[vec![0.0], vec![1.0], vec![3.0]]).view(), DistanceMetric::Euclidean);
    let s = m.stats().unwrap();
    assert_abs_diff_eq!(s.mean, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.std, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(derive_threshold(s.mean, s.std, 1.5), 2.0 - 1.5 * (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
}
