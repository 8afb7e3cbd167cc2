use ndarray::ArrayView2;
use serde::Serialize;

use super::{ClusterAssignment, DistanceMatrix, DistanceMetric, Linkage};

/// One step of the merge sequence. Clusters are named by their slot: the
/// smallest slot of the two survives and absorbs the other.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub kept: usize,
    pub absorbed: usize,
    pub distance: f64,
    pub size: usize,
}

/// Bottom-up clustering that keeps merging the closest pair of clusters
/// while their linkage distance is at most `tau`.
pub fn agglomerative(
    vectors: ArrayView2<'_, f64>,
    metric: DistanceMetric,
    linkage: Linkage,
    tau: f64,
) -> ClusterAssignment {
    let matrix = DistanceMatrix::compute(vectors, metric);
    agglomerative_from_matrix(&matrix, linkage, tau)
}

pub fn agglomerative_from_matrix(
    matrix: &DistanceMatrix,
    linkage: Linkage,
    tau: f64,
) -> ClusterAssignment {
    merge_until(matrix.clone(), linkage, tau).0
}

/// Runs the merge loop, returning the final assignment and the merges in
/// the order they happened.
///
/// Ties on the merge distance go to the lexicographically smallest
/// `(slot, slot)` pair. Linkage distances are updated with the
/// Lance-Williams recurrences; every row caches its nearest slot to the
/// right, so a merge only rescans rows whose cached neighbour was touched.
pub fn merge_until(
    matrix: DistanceMatrix,
    linkage: Linkage,
    tau: f64,
) -> (ClusterAssignment, Vec<Merge>) {
    let n = matrix.n();
    let mut d = matrix.into_condensed();
    let at = |i: usize, j: usize| {
        if i < j {
            DistanceMatrix::index(n, i, j)
        } else {
            DistanceMatrix::index(n, j, i)
        }
    };

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nn_d = vec![f64::INFINITY; n];

    let rescan = |i: usize, d: &[f64], active: &[bool], nn: &mut [usize], nn_d: &mut [f64]| {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in i + 1..n {
            if active[j] {
                let v = d[DistanceMatrix::index(n, i, j)];
                if best == usize::MAX || v < best_d {
                    best = j;
                    best_d = v;
                }
            }
        }
        nn[i] = best;
        nn_d[i] = best_d;
    };

    for i in 0..n {
        rescan(i, &d, &active, &mut nn, &mut nn_d);
    }

    let mut merges = Vec::new();
    loop {
        let mut pick = None;
        let mut pick_d = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && (pick.is_none() || nn_d[i] < pick_d) {
                pick = Some(i);
                pick_d = nn_d[i];
            }
        }
        let Some(i) = pick else { break };
        if pick_d.is_nan() || pick_d > tau {
            break;
        }
        let j = nn[i];
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let dik = d[at(i, k)];
            let djk = d[at(j, k)];
            d[at(i, k)] = match linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (si * dik + sj * djk) / (si + sj),
            };
        }
        active[j] = false;
        size[i] += size[j];
        let moved = std::mem::take(&mut members[j]);
        for &m in &moved {
            owner[m] = i;
        }
        members[i].extend(moved);
        merges.push(Merge {
            kept: i,
            absorbed: j,
            distance: pick_d,
            size: size[i],
        });

        rescan(i, &d, &active, &mut nn, &mut nn_d);
        for k in 0..i {
            if !active[k] {
                continue;
            }
            if nn[k] == i || nn[k] == j {
                rescan(k, &d, &active, &mut nn, &mut nn_d);
            } else {
                let v = d[at(k, i)];
                if v < nn_d[k] || (v == nn_d[k] && i < nn[k]) {
                    nn[k] = i;
                    nn_d[k] = v;
                }
            }
        }
        for k in i + 1..j {
            if active[k] && nn[k] == j {
                rescan(k, &d, &active, &mut nn, &mut nn_d);
            }
        }
    }

    (ClusterAssignment::from_labels(owner), merges)
}

/// The partition reached by replaying `merges` (as returned by
/// [`merge_until`]) over `n` singletons up to the first merge whose distance
/// exceeds `tau`. Replaying a full merge sequence gives the same result as
/// rerunning the merge loop with threshold `tau`.
pub fn cut_merges(n: usize, merges: &[Merge], tau: f64) -> ClusterAssignment {
    let mut owner: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for m in merges {
        if m.distance.is_nan() || m.distance > tau {
            break;
        }
        let moved = std::mem::take(&mut members[m.absorbed]);
        for &x in &moved {
            owner[x] = m.kept;
        }
        members[m.kept].extend(moved);
    }
    ClusterAssignment::from_labels(owner)
}
