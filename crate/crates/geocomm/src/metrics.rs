//! Partition scoring: adjusted mutual information, element-centric
//! similarity, modularity, and temporal label alignment.

use std::path::Path;

use nalgebra::DMatrix;
use pathfinding::matrix::Matrix as PfMatrix;
use pathfinding::prelude::kuhn_munkres;

use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;

/// Default restart strength for element-centric similarity.
pub const ECS_ALPHA: f64 = 0.9;
/// Membership probability above which a node is declared part of a
/// community when soft assignments must be binarized.
pub const ECS_THRESHOLD: f64 = 0.2;

/// A node-to-community assignment: hard labels or a `d x k` row-stochastic
/// (or binary cover) membership matrix.
#[derive(Debug, Clone)]
pub enum Membership<'a> {
    Hard(&'a [usize]),
    Soft(&'a DMatrix<f64>),
}

impl Membership<'_> {
    fn len(&self) -> usize {
        match self {
            Membership::Hard(l) => l.len(),
            Membership::Soft(m) => m.nrows(),
        }
    }
}

fn counts(labels: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; labels.iter().copied().max().map_or(0, |m| m + 1)];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

fn contingency(a: &[usize], b: &[usize]) -> DMatrix<usize> {
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let mut table = DMatrix::zeros(ka, kb);
    for (&la, &lb) in a.iter().zip(b) {
        table[(la, lb)] += 1;
    }
    table
}

fn mutual_information(table: &DMatrix<usize>, n: usize) -> f64 {
    let nf = n as f64;
    let row: Vec<usize> = (0..table.nrows()).map(|i| table.row(i).sum()).collect();
    let col: Vec<usize> = (0..table.ncols()).map(|j| table.column(j).sum()).collect();
    let mut mi = 0.0;
    for i in 0..table.nrows() {
        for j in 0..table.ncols() {
            let nij = table[(i, j)] as f64;
            if nij > 0.0 {
                mi += (nij / nf) * ((nf * nij) / (row[i] as f64 * col[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Expected mutual information of the contingency marginals under the
/// permutation (hypergeometric) null model.
fn expected_mutual_information(row: &[usize], col: &[usize], n: usize) -> f64 {
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in row {
        if a == 0 {
            continue;
        }
        for &b in col {
            if b == 0 {
                continue;
            }
            let lo = 1.max((a + b).saturating_sub(n));
            let hi = a.min(b);
            for nij in lo..=hi {
                let term = (nij as f64 / nf) * ((nf * nij as f64) / (a as f64 * b as f64)).ln();
                let ln_p = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                    - lf[n]
                    - lf[nij]
                    - lf[a - nij]
                    - lf[b - nij]
                    - lf[n + nij - a - b];
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for i in 2..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    lf
}

/// Adjusted mutual information with the permutation-model expected-MI
/// correction and max normalization. Symmetric and permutation invariant;
/// 1.0 for structurally identical labelings, near zero for independent ones.
pub fn ami(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() || labels_a.is_empty() {
        return Err(Error::Dimension(format!(
            "label vectors of lengths {} and {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let n = labels_a.len();
    let table = contingency(labels_a, labels_b);
    let row: Vec<usize> = (0..table.nrows()).map(|i| table.row(i).sum()).collect();
    let col: Vec<usize> = (0..table.ncols()).map(|j| table.column(j).sum()).collect();
    let h_a = entropy(&row, n);
    let h_b = entropy(&col, n);
    // Two trivial clusterings carry no information to adjust; they agree
    // exactly by convention.
    if h_a == 0.0 && h_b == 0.0 {
        return Ok(1.0);
    }
    let mi = mutual_information(&table, n);
    let emi = expected_mutual_information(&row, &col, n);
    let denominator = h_a.max(h_b) - emi;
    let denominator = if denominator < 0.0 {
        denominator.min(-f64::EPSILON)
    } else {
        denominator.max(f64::EPSILON)
    };
    Ok((mi - emi) / denominator)
}

fn hard_to_cover(labels: &[usize]) -> DMatrix<f64> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut m = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    m
}

/// Binarizes a soft membership matrix: a node joins every community whose
/// membership exceeds `p_thresh`, falling back to its argmax community when
/// none does.
pub fn threshold_cover(membership: &DMatrix<f64>, p_thresh: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(membership.nrows(), membership.ncols());
    for i in 0..membership.nrows() {
        let mut any = false;
        for j in 0..membership.ncols() {
            if membership[(i, j)] > p_thresh {
                out[(i, j)] = 1.0;
                any = true;
            }
        }
        if !any {
            let mut best = 0;
            for j in 1..membership.ncols() {
                if membership[(i, j)] > membership[(i, best)] {
                    best = j;
                }
            }
            out[(i, best)] = 1.0;
        }
    }
    out
}

/// Element-centric similarity with restart strength `alpha`.
///
/// Hard-vs-hard comparisons use the closed form of the personalized-PageRank
/// affinities (`p_ij = (1-α)δ_ij + α/|c|` within a cluster), under which the
/// per-element score depends only on cluster sizes and their overlap. Any
/// soft side is first binarized at [`ECS_THRESHOLD`] (soft scores feed a
/// thresholded cover, matching how overlapping detections are evaluated),
/// and covers go through the general affinity construction: a random walk
/// element → shared community → element with membership-proportional steps.
pub fn ecs(a: &Membership<'_>, b: &Membership<'_>, alpha: f64) -> Result<f64> {
    if a.len() != b.len() || a.len() == 0 {
        return Err(Error::Dimension(format!(
            "memberships over {} and {} nodes",
            a.len(),
            b.len()
        )));
    }
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    match (a, b) {
        (Membership::Hard(la), Membership::Hard(lb)) => Ok(ecs_hard(la, lb)),
        _ => {
            let ma = membership_cover(a);
            let mb = membership_cover(b);
            let pa = ppr_affinity(&ma, alpha)?;
            let pb = ppr_affinity(&mb, alpha)?;
            let n = pa.nrows();
            let mut total = 0.0;
            for i in 0..n {
                let l1: f64 = (0..n).map(|j| (pa[(i, j)] - pb[(i, j)]).abs()).sum();
                total += 1.0 - l1 / (2.0 * alpha);
            }
            Ok(total / n as f64)
        }
    }
}

fn membership_cover(m: &Membership<'_>) -> DMatrix<f64> {
    match m {
        Membership::Hard(l) => hard_to_cover(l),
        Membership::Soft(s) => threshold_cover(s, ECS_THRESHOLD),
    }
}

/// Closed-form hard-partition path: per element, the affinity L1 distance
/// reduces to cluster sizes and the overlap of its two clusters, and the
/// restart strength cancels.
fn ecs_hard(la: &[usize], lb: &[usize]) -> f64 {
    let table = contingency(la, lb);
    let sa = counts(la);
    let sb = counts(lb);
    let n = la.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = la[i];
        let b = lb[i];
        let overlap = table[(a, b)] as f64;
        let (size_a, size_b) = (sa[a] as f64, sb[b] as f64);
        let l1_over_alpha = overlap * (1.0 / size_a - 1.0 / size_b).abs()
            + (size_a - overlap) / size_a
            + (size_b - overlap) / size_b;
        total += 1.0 - l1_over_alpha / 2.0;
    }
    total / n as f64
}

/// Personalized-PageRank affinity rows over the membership-induced element
/// graph: `P = (1-α)(I - αW)^{-1}` with `W` the two-step walk
/// element → community (membership-proportional) → element
/// (community-mass-proportional). Nodes with no memberships self-loop.
fn ppr_affinity(cover: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    let n = cover.nrows();
    let k = cover.ncols();
    let row_sums: Vec<f64> = (0..n).map(|i| cover.row(i).sum()).collect();
    let col_sums: Vec<f64> = (0..k).map(|j| cover.column(j).sum()).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        if row_sums[i] <= 0.0 {
            w[(i, i)] = 1.0;
            continue;
        }
        for c in 0..k {
            let step = cover[(i, c)] / row_sums[i];
            if step <= 0.0 || col_sums[c] <= 0.0 {
                continue;
            }
            for j in 0..n {
                w[(i, j)] += step * cover[(j, c)] / col_sums[c];
            }
        }
    }
    let system = DMatrix::identity(n, n) - alpha * w;
    let inv = system
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular affinity system".into()))?;
    Ok(inv * (1.0 - alpha))
}

/// Newman–Girvan modularity `Q = (1/vol) Σ_{jl} (A - deg·degᵀ/vol)_{jl}
/// 1[same community]` of an undirected snapshot.
pub fn modularity(snapshot: &GraphSnapshot, labels: &[usize]) -> Result<f64> {
    if snapshot.directed() {
        return Err(Error::NotApplicable(
            "modularity is defined for undirected snapshots".into(),
        ));
    }
    if labels.len() != snapshot.d() {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.len(),
            snapshot.d()
        )));
    }
    let a = snapshot.adjacency();
    let deg: Vec<f64> = (0..a.nrows()).map(|i| a.row(i).sum()).collect();
    let vol: f64 = deg.iter().sum();
    if vol <= 0.0 {
        return Err(Error::InvalidGraph(
            "modularity needs a positive edge volume".into(),
        ));
    }
    let mut q = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if labels[i] == labels[j] {
                q += a[(i, j)] - deg[i] * deg[j] / vol;
            }
        }
    }
    Ok(q / vol)
}

/// Relabels `curr` by maximum-overlap matching against `prev` so community
/// ids stay stable across snapshots. Communities of `curr` that match no
/// `prev` community receive fresh ids above `prev`'s range. The partition
/// itself (as a set system) is unchanged.
pub fn align_labels(prev: &[usize], curr: &[usize]) -> Result<Vec<usize>> {
    if prev.len() != curr.len() {
        return Err(Error::Dimension(format!(
            "label vectors of lengths {} and {}",
            prev.len(),
            curr.len()
        )));
    }
    if curr.is_empty() {
        return Ok(Vec::new());
    }
    let kp = prev.iter().copied().max().map_or(0, |m| m + 1);
    let kc = curr.iter().copied().max().map_or(0, |m| m + 1);
    let side = kp.max(kc);
    // Rows: curr communities; columns: prev communities (padded square).
    let mut overlap = vec![vec![0i64; side]; side];
    for (&p, &c) in prev.iter().zip(curr) {
        overlap[c][p] += 1;
    }
    let weights =
        PfMatrix::from_rows(overlap).expect("rectangular overlap table");
    let (_, assignment) = kuhn_munkres(&weights);
    // A curr community matched to a real prev id adopts it; matches into the
    // zero-padding get fresh ids past prev's range.
    let mut mapping = vec![usize::MAX; side];
    let mut fresh = kp;
    for c in 0..side {
        let p = assignment[c];
        if p < kp {
            mapping[c] = p;
        } else {
            mapping[c] = fresh;
            fresh += 1;
        }
    }
    Ok(curr.iter().map(|&c| mapping[c]).collect())
}

/// Per-snapshot values of one metric, with quantile summaries for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub metric: String,
    pub values: Vec<f64>,
}

impl ScoreTrace {
    /// Validates the values against the metric's range: `ami` and `ecs` are
    /// at most 1, `modularity` lies in `[-1, 1]`.
    pub fn new(metric: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let metric = metric.into();
        let ok = match metric.as_str() {
            "ami" | "ecs" => values.iter().all(|v| *v <= 1.0 + 1e-12),
            "modularity" => values.iter().all(|v| (-1.0..=1.0).contains(v)),
            _ => values.iter().all(|v| v.is_finite()),
        };
        if !ok {
            return Err(Error::Config(format!(
                "values out of range for metric {metric:?}"
            )));
        }
        Ok(ScoreTrace { metric, values })
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Linearly interpolated quantile of the values.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN score"));
        if sorted.is_empty() {
            return f64::NAN;
        }
        let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Serializes traces as CSV with `(t_index, metric, value)` rows followed by
/// a `median`/`q25`/`q75` summary block per metric.
pub fn scores_to_csv(traces: &[ScoreTrace]) -> String {
    let mut out = String::from("t_index,metric,value\n");
    for trace in traces {
        for (t, v) in trace.values.iter().enumerate() {
            out.push_str(&format!("{t},{},{v}\n", trace.metric));
        }
    }
    for trace in traces {
        out.push_str(&format!("median,{},{}\n", trace.metric, trace.median()));
        out.push_str(&format!("q25,{},{}\n", trace.metric, trace.quantile(0.25)));
        out.push_str(&format!("q75,{},{}\n", trace.metric, trace.quantile(0.75)));
    }
    out
}

/// Writes [`scores_to_csv`] output to a file.
pub fn write_scores_csv(traces: &[ScoreTrace], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scores_to_csv(traces))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0..k)).collect()
    }

    #[test]
    fn ami_identical_is_one() {
        let l = vec![0, 0, 1, 1, 2, 2, 2];
        assert_abs_diff_eq!(ami(&l, &l).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ami_permutation_invariant() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![2, 2, 0, 0, 1, 1];
        assert_abs_diff_eq!(ami(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ami_symmetric() {
        for seed in 0..5 {
            let a = random_labels(40, 3, seed);
            let b = random_labels(40, 4, 100 + seed);
            assert_abs_diff_eq!(
                ami(&a, &b).unwrap(),
                ami(&b, &a).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn ami_handles_marginals_larger_than_half() {
        // Cluster pairs with a + b > n exercise the hypergeometric lower
        // summation bound a + b - n.
        let a = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let b = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let score = ami(&a, &b).unwrap();
        assert!(score > 0.0 && score < 1.0, "score {score}");
    }

    #[test]
    fn ami_independent_labelings_center_near_zero() {
        let mut sum = 0.0;
        for seed in 0..100 {
            let a = random_labels(1000, 5, 2 * seed);
            let b = random_labels(1000, 5, 2 * seed + 1);
            sum += ami(&a, &b).unwrap();
        }
        let mean = sum / 100.0;
        assert!(mean.abs() < 0.02, "mean AMI {mean}");
    }

    #[test]
    fn ami_trivial_labelings_agree() {
        let a = vec![0; 6];
        let b = vec![3; 6];
        assert_abs_diff_eq!(ami(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ami_rejects_length_mismatch() {
        assert!(ami(&[0, 1], &[0, 1, 2]).is_err());
        assert!(ami(&[], &[]).is_err());
    }

    /// The permutation-model expected MI is, by definition, the average MI
    /// over all relabel-preserving element permutations. Enumerating all 720
    /// permutations of 6 elements pins the hypergeometric formula.
    #[test]
    fn expected_mi_matches_permutation_enumeration() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![0, 1, 0, 2, 1, 2];
        let n = a.len();

        fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == 1 {
                out.push(items.clone());
                return;
            }
            for i in 0..k {
                permutations(items, k - 1, out);
                if k % 2 == 0 {
                    items.swap(i, k - 1);
                } else {
                    items.swap(0, k - 1);
                }
            }
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut all = Vec::new();
        permutations(&mut indices, n, &mut all);
        assert_eq!(all.len(), 720);
        let brute: f64 = all
            .iter()
            .map(|perm| {
                let shuffled: Vec<usize> = perm.iter().map(|&i| a[i]).collect();
                mutual_information(&contingency(&shuffled, &b), n)
            })
            .sum::<f64>()
            / 720.0;

        let table = contingency(&a, &b);
        let row: Vec<usize> = (0..table.nrows()).map(|i| table.row(i).sum()).collect();
        let col: Vec<usize> = (0..table.ncols()).map(|j| table.column(j).sum()).collect();
        let formula = expected_mutual_information(&row, &col, n);
        assert_abs_diff_eq!(brute, formula, epsilon = 1e-12);
    }

    #[test]
    fn ecs_identical_hard_is_one() {
        let l = vec![0, 1, 0, 1, 2];
        let ecs_val = ecs(&Membership::Hard(&l), &Membership::Hard(&l), ECS_ALPHA).unwrap();
        assert_abs_diff_eq!(ecs_val, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ecs_permutation_invariant() {
        let a = vec![0, 0, 1, 1];
        let b = vec![1, 1, 0, 0];
        let v = ecs(&Membership::Hard(&a), &Membership::Hard(&b), ECS_ALPHA).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ecs_singletons_vs_one_cluster_golden() {
        // Hand evaluation on 4 nodes: the singleton affinity row is the
        // indicator, the one-cluster row is (1-α)δ + α/4; the L1 distance is
        // 3α/2 for every element, so each scores 1 - 3/4 regardless of α.
        let singles = vec![0, 1, 2, 3];
        let one = vec![0, 0, 0, 0];
        for alpha in [0.5, 0.9] {
            let v = ecs(&Membership::Hard(&singles), &Membership::Hard(&one), alpha).unwrap();
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn ecs_hard_closed_form_matches_affinity_path() {
        for seed in 0..5 {
            let a = random_labels(12, 3, 500 + seed);
            let b = random_labels(12, 4, 600 + seed);
            let fast = ecs(&Membership::Hard(&a), &Membership::Hard(&b), ECS_ALPHA).unwrap();
            let ma = hard_to_cover(&a);
            let mb = hard_to_cover(&b);
            let slow = ecs(&Membership::Soft(&ma), &Membership::Soft(&mb), ECS_ALPHA).unwrap();
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-10);
        }
    }

    #[test]
    fn ecs_symmetric() {
        let a = random_labels(15, 3, 7);
        let b = random_labels(15, 2, 8);
        let ab = ecs(&Membership::Hard(&a), &Membership::Hard(&b), ECS_ALPHA).unwrap();
        let ba = ecs(&Membership::Hard(&b), &Membership::Hard(&a), ECS_ALPHA).unwrap();
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
    }

    #[test]
    fn ecs_soft_sides_threshold_to_covers() {
        // Memberships above 0.2 on both communities form overlapping covers;
        // a clean one-community-per-node soft matrix reduces to hard labels.
        let crisp = DMatrix::from_row_slice(4, 2, &[
            0.9, 0.1, //
            0.85, 0.15, //
            0.1, 0.9, //
            0.05, 0.95,
        ]);
        let hard = vec![0, 0, 1, 1];
        let v = ecs(
            &Membership::Soft(&crisp),
            &Membership::Hard(&hard),
            ECS_ALPHA,
        )
        .unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);

        let blended = DMatrix::from_row_slice(4, 2, &[
            0.5, 0.5, //
            0.5, 0.5, //
            0.5, 0.5, //
            0.5, 0.5,
        ]);
        let overlapped = ecs(
            &Membership::Soft(&blended),
            &Membership::Hard(&hard),
            ECS_ALPHA,
        )
        .unwrap();
        assert!(overlapped < 1.0 - 1e-6);
    }

    #[test]
    fn ecs_rejects_bad_shapes_and_alpha() {
        let a = vec![0, 1];
        let b = vec![0, 1, 1];
        assert!(ecs(&Membership::Hard(&a), &Membership::Hard(&b), ECS_ALPHA).is_err());
        assert!(ecs(&Membership::Hard(&a), &Membership::Hard(&a), 1.0).is_err());
        assert!(ecs(&Membership::Hard(&a), &Membership::Hard(&a), 0.0).is_err());
    }

    fn two_k4() -> GraphSnapshot {
        let mut edges = Vec::new();
        for block in 0..2usize {
            let base = 4 * block;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        GraphSnapshot::new(8, false, edges).unwrap()
    }

    #[test]
    fn modularity_single_community_is_zero() {
        let snap = two_k4();
        let labels = vec![0; 8];
        assert_abs_diff_eq!(modularity(&snap, &labels).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn modularity_two_cliques_is_half() {
        let snap = two_k4();
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        assert_abs_diff_eq!(modularity(&snap, &labels).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn modularity_random_labels_on_er_near_zero() {
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let d = 60;
            let mut edges = Vec::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    if rng.gen::<f64>() < 0.2 {
                        edges.push((i, j, 1.0));
                    }
                }
            }
            let snap = GraphSnapshot::new(d, false, edges).unwrap();
            let labels = random_labels(d, 3, 2000 + seed);
            worst = worst.max(modularity(&snap, &labels).unwrap().abs());
        }
        assert!(worst < 0.05, "worst |Q| = {worst}");
    }

    #[test]
    fn modularity_invariances() {
        let snap = two_k4();
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let permuted = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let base = modularity(&snap, &labels).unwrap();
        assert_abs_diff_eq!(base, modularity(&snap, &permuted).unwrap(), epsilon = 1e-12);
        let scaled_edges: Vec<(usize, usize, f64)> = snap
            .edges()
            .iter()
            .map(|&(i, j, w)| (i, j, 3.5 * w))
            .collect();
        let scaled = GraphSnapshot::new(8, false, scaled_edges).unwrap();
        assert_abs_diff_eq!(base, modularity(&scaled, &labels).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn modularity_rejects_empty_graph() {
        let snap = GraphSnapshot::new(4, false, vec![]).unwrap();
        assert!(modularity(&snap, &[0, 0, 1, 1]).is_err());
    }

    #[test]
    fn align_recovers_permuted_labels() {
        let prev = vec![0, 0, 1, 1, 2, 2];
        let curr = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(align_labels(&prev, &curr).unwrap(), prev);
    }

    #[test]
    fn align_maximizes_overlap_against_brute_force() {
        fn best_overlap(prev: &[usize], curr: &[usize], k: usize) -> usize {
            // All bijections of curr's ids onto prev's, scored by agreement.
            let mut ids: Vec<usize> = (0..k).collect();
            let mut best = 0;
            fn rec(
                ids: &mut Vec<usize>,
                m: usize,
                prev: &[usize],
                curr: &[usize],
                best: &mut usize,
            ) {
                if m == 1 {
                    let score = prev
                        .iter()
                        .zip(curr)
                        .filter(|&(&p, &c)| p == ids[c])
                        .count();
                    *best = (*best).max(score);
                    return;
                }
                for i in 0..m {
                    rec(ids, m - 1, prev, curr, best);
                    if m % 2 == 0 {
                        ids.swap(i, m - 1);
                    } else {
                        ids.swap(0, m - 1);
                    }
                }
            }
            rec(&mut ids, k, prev, curr, &mut best);
            best
        }
        for seed in 0..10 {
            let k = 2 + (seed as usize % 4);
            let prev = random_labels(20, k, 3000 + seed);
            let curr = random_labels(20, k, 4000 + seed);
            let aligned = align_labels(&prev, &curr).unwrap();
            let achieved = prev
                .iter()
                .zip(&aligned)
                .filter(|&(&p, &c)| p == c)
                .count();
            assert_eq!(achieved, best_overlap(&prev, &curr, k), "seed {seed}");
        }
    }

    #[test]
    fn align_gives_fresh_ids_to_extra_communities() {
        let prev = vec![0, 0, 0, 0];
        let curr = vec![0, 0, 1, 2];
        let aligned = align_labels(&prev, &curr).unwrap();
        assert_eq!(aligned[0], 0);
        assert_eq!(aligned[1], 0);
        assert!(aligned[2] >= 1 && aligned[3] >= 1);
        assert_ne!(aligned[2], aligned[3]);
    }

    #[test]
    fn align_preserves_partition_structure() {
        for seed in 0..5 {
            let prev = random_labels(15, 3, 5000 + seed);
            let curr = random_labels(15, 4, 6000 + seed);
            let aligned = align_labels(&prev, &curr).unwrap();
            for i in 0..curr.len() {
                for j in 0..curr.len() {
                    assert_eq!(
                        curr[i] == curr[j],
                        aligned[i] == aligned[j],
                        "pair ({i}, {j})"
                    );
                }
            }
            assert_abs_diff_eq!(
                ami(&prev, &curr).unwrap(),
                ami(&prev, &aligned).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn score_trace_validates_ranges() {
        assert!(ScoreTrace::new("ami", vec![0.5, 1.0]).is_ok());
        assert!(ScoreTrace::new("ami", vec![1.5]).is_err());
        assert!(ScoreTrace::new("modularity", vec![-0.3, 0.9]).is_ok());
        assert!(ScoreTrace::new("modularity", vec![1.2]).is_err());
    }

    #[test]
    fn score_trace_quantiles() {
        let trace = ScoreTrace::new("ami", vec![0.4, 0.2, 0.8, 0.6, 1.0]).unwrap();
        assert_abs_diff_eq!(trace.median(), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.quantile(0.25), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.quantile(0.75), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn scores_csv_layout() {
        let trace = ScoreTrace::new("ami", vec![1.0, 0.5]).unwrap();
        let csv = scores_to_csv(&[trace]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t_index,metric,value");
        assert_eq!(lines[1], "0,ami,1");
        assert_eq!(lines[2], "1,ami,0.5");
        assert_eq!(lines[3], "median,ami,0.75");
        assert!(lines[4].starts_with("q25,ami,"));
        assert!(lines[5].starts_with("q75,ami,"));
    }
}
