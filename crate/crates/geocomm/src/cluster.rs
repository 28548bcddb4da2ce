//! Euclidean clustering heuristics applied to embedding rows.
//!
//! All clusterers are deterministic given `(embedding, seed)`: seeding is
//! greedy furthest-point under the seed's first draw, and every tie breaks
//! toward the smaller index.

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;

/// Node embeddings, one row per node.
pub type EmbeddingRows = DMatrix<f64>;

const MAX_ITERS: usize = 300;
const CENTER_TOL: f64 = 1e-6;

/// Output of a clusterer: hard labels (argmax of memberships for the soft
/// clusterers), the final centers, and the inertia trace recorded after each
/// assignment step.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    /// Row-stochastic `d x k_c` memberships; `None` for hard clusterers.
    pub memberships: Option<DMatrix<f64>>,
    /// `k_c x k` cluster centers.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Metric {
    /// Squared Euclidean distances, mean centers (k-means).
    SquaredL2,
    /// L1 distances, coordinatewise-median centers (k-medians).
    L1,
}

impl Metric {
    fn dist(&self, a: &RowDVector<f64>, b: &RowDVector<f64>) -> f64 {
        match self {
            Metric::SquaredL2 => (a - b).norm_squared(),
            Metric::L1 => (a - b).iter().map(|x| x.abs()).sum(),
        }
    }
}

/// Lloyd's algorithm with distance-weighted seeding. `warm_start` labels,
/// when given, replace the seeding: initial centers are the label-group
/// centers (missing groups fall back to seeded picks).
pub fn kmeans(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    warm_start: Option<&[usize]>,
) -> Result<ClusterResult> {
    lloyd(emb, k_c, seed, warm_start, Metric::SquaredL2)
}

/// As [`kmeans`] but with L1 assignment and coordinatewise-median centers.
pub fn kmedians(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    warm_start: Option<&[usize]>,
) -> Result<ClusterResult> {
    lloyd(emb, k_c, seed, warm_start, Metric::L1)
}

/// Best of `restarts` seeded [`kmeans`] runs by inertia. A warm start is
/// honored on the first run only; the rest reseed from scratch.
pub fn kmeans_restarts(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    restarts: usize,
    warm_start: Option<&[usize]>,
) -> Result<ClusterResult> {
    lloyd_restarts(emb, k_c, seed, restarts, warm_start, Metric::SquaredL2)
}

/// As [`kmeans_restarts`] for [`kmedians`].
pub fn kmedians_restarts(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    restarts: usize,
    warm_start: Option<&[usize]>,
) -> Result<ClusterResult> {
    lloyd_restarts(emb, k_c, seed, restarts, warm_start, Metric::L1)
}

fn lloyd_restarts(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    restarts: usize,
    warm_start: Option<&[usize]>,
    metric: Metric,
) -> Result<ClusterResult> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be positive".into()));
    }
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts {
        let warm = if r == 0 { warm_start } else { None };
        let run = lloyd(emb, k_c, seed.wrapping_add(r as u64), warm, metric)?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn check_embedding(emb: &EmbeddingRows, k_c: usize) -> Result<()> {
    if emb.nrows() == 0 || emb.ncols() == 0 {
        return Err(Error::Dimension("empty embedding".into()));
    }
    if k_c == 0 || k_c > emb.nrows() {
        return Err(Error::Dimension(format!(
            "cluster count {k_c} out of range for {} points",
            emb.nrows()
        )));
    }
    Ok(())
}

fn lloyd(
    emb: &EmbeddingRows,
    k_c: usize,
    seed: u64,
    warm_start: Option<&[usize]>,
    metric: Metric,
) -> Result<ClusterResult> {
    check_embedding(emb, k_c)?;
    let d = emb.nrows();
    let mut centers = match warm_start {
        Some(labels) if labels.len() == d => warm_centers(emb, labels, k_c, seed, metric)?,
        Some(labels) => {
            return Err(Error::Dimension(format!(
                "warm start has {} labels for {d} points",
                labels.len()
            )));
        }
        None => seed_centers(emb, k_c, seed, metric),
    };
    let mut labels = vec![0usize; d];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERS {
        let (new_labels, inertia) = assign(emb, &centers, metric);
        labels = new_labels;
        trace.push(inertia);
        repair_empty_clusters(emb, &centers, &mut labels, k_c, metric);
        let new_centers = group_centers(emb, &labels, k_c, metric);
        let moved = (0..k_c)
            .map(|j| (new_centers.row(j) - centers.row(j)).norm())
            .fold(0.0, f64::max);
        centers = new_centers;
        if moved < CENTER_TOL {
            break;
        }
    }
    let (final_labels, inertia) = assign(emb, &centers, metric);
    labels = final_labels;
    repair_empty_clusters(emb, &centers, &mut labels, k_c, metric);
    trace.push(inertia);
    Ok(ClusterResult {
        labels,
        memberships: None,
        centers,
        inertia,
        inertia_trace: trace,
    })
}

/// Distance-weighted seeding: a seeded uniform first pick, then each next
/// center sampled with probability proportional to the distance from its
/// nearest chosen center (squared for k-means, plain for k-medians).
/// Randomized, so restarts under different seeds explore distinct optima;
/// a greedy furthest-point rule would lock every restart onto outliers.
fn seed_centers(emb: &EmbeddingRows, k_c: usize, seed: u64, metric: Metric) -> DMatrix<f64> {
    let d = emb.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..d)];
    let first = emb.row(chosen[0]).into_owned();
    let mut nearest: Vec<f64> = (0..d)
        .map(|i| metric.dist(&emb.row(i).into_owned(), &first))
        .collect();
    while chosen.len() < k_c {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen::<f64>() * total;
            let mut pick = d - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if draw < w {
                    pick = i;
                    break;
                }
                draw -= w;
            }
            pick
        } else {
            // All points coincide with a center; any pick works.
            rng.gen_range(0..d)
        };
        chosen.push(next);
        let c = emb.row(next).into_owned();
        for i in 0..d {
            let dist = metric.dist(&emb.row(i).into_owned(), &c);
            if dist < nearest[i] {
                nearest[i] = dist;
            }
        }
    }
    DMatrix::from_fn(k_c, emb.ncols(), |j, l| emb[(chosen[j], l)])
}

/// Centers from warm-start labels; label groups that are empty (or out of
/// range) are filled by continuing the furthest-point greedy pass.
fn warm_centers(
    emb: &EmbeddingRows,
    labels: &[usize],
    k_c: usize,
    seed: u64,
    metric: Metric,
) -> Result<DMatrix<f64>> {
    let mut centers = group_centers(emb, labels, k_c, metric);
    let counts = label_counts(labels, k_c);
    let missing: Vec<usize> = (0..k_c).filter(|&j| counts[j] == 0).collect();
    if !missing.is_empty() {
        let fallback = seed_centers(emb, k_c, seed, metric);
        for (slot, j) in missing.into_iter().enumerate() {
            centers.set_row(j, &fallback.row(slot));
        }
    }
    Ok(centers)
}

fn label_counts(labels: &[usize], k_c: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k_c];
    for &l in labels {
        if l < k_c {
            counts[l] += 1;
        }
    }
    counts
}

fn assign(emb: &EmbeddingRows, centers: &DMatrix<f64>, metric: Metric) -> (Vec<usize>, f64) {
    let center_rows: Vec<RowDVector<f64>> =
        (0..centers.nrows()).map(|j| centers.row(j).into_owned()).collect();
    let per_point = exec::par_map_indices(emb.nrows(), |i| {
        let x = emb.row(i).into_owned();
        let mut best = 0usize;
        let mut best_dist = metric.dist(&x, &center_rows[0]);
        for (j, c) in center_rows.iter().enumerate().skip(1) {
            let dist = metric.dist(&x, c);
            if dist < best_dist {
                best = j;
                best_dist = dist;
            }
        }
        (best, best_dist)
    });
    let labels = per_point.iter().map(|&(j, _)| j).collect();
    let inertia = per_point.iter().map(|&(_, dist)| dist).sum();
    (labels, inertia)
}

/// Moves, for each empty cluster, the point farthest from its assigned
/// center (among clusters that can spare one) into the empty cluster.
fn repair_empty_clusters(
    emb: &EmbeddingRows,
    centers: &DMatrix<f64>,
    labels: &mut [usize],
    k_c: usize,
    metric: Metric,
) {
    let mut counts = label_counts(labels, k_c);
    for j in 0..k_c {
        if counts[j] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] <= 1 {
                continue;
            }
            let dist = metric.dist(
                &emb.row(i).into_owned(),
                &centers.row(labels[i]).into_owned(),
            );
            if pick.map_or(true, |(_, best)| dist > best) {
                pick = Some((i, dist));
            }
        }
        if let Some((i, _)) = pick {
            counts[labels[i]] -= 1;
            labels[i] = j;
            counts[j] += 1;
        }
    }
}

fn group_centers(
    emb: &EmbeddingRows,
    labels: &[usize],
    k_c: usize,
    metric: Metric,
) -> DMatrix<f64> {
    let k = emb.ncols();
    let mut centers = DMatrix::zeros(k_c, k);
    match metric {
        Metric::SquaredL2 => {
            let counts = label_counts(labels, k_c);
            for (i, &l) in labels.iter().enumerate() {
                for c in 0..k {
                    centers[(l, c)] += emb[(i, c)];
                }
            }
            for j in 0..k_c {
                if counts[j] > 0 {
                    for c in 0..k {
                        centers[(j, c)] /= counts[j] as f64;
                    }
                }
            }
        }
        Metric::L1 => {
            for j in 0..k_c {
                let members: Vec<usize> =
                    (0..labels.len()).filter(|&i| labels[i] == j).collect();
                if members.is_empty() {
                    continue;
                }
                for c in 0..k {
                    let mut vals: Vec<f64> = members.iter().map(|&i| emb[(i, c)]).collect();
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mid = vals.len() / 2;
                    centers[(j, c)] = if vals.len() % 2 == 1 {
                        vals[mid]
                    } else {
                        0.5 * (vals[mid - 1] + vals[mid])
                    };
                }
            }
        }
    }
    centers
}

/// Two clusters from a one-column embedding by sign; zeros join the
/// nonnegative cluster (label 0). An all-one-sign input leaves the other
/// cluster empty, mirrored by a zero center row.
pub fn sign_split(emb: &EmbeddingRows) -> Result<ClusterResult> {
    if emb.ncols() != 1 {
        return Err(Error::Dimension(format!(
            "sign split needs a one-column embedding, got {}",
            emb.ncols()
        )));
    }
    if emb.nrows() == 0 {
        return Err(Error::Dimension("empty embedding".into()));
    }
    let labels: Vec<usize> = (0..emb.nrows())
        .map(|i| usize::from(emb[(i, 0)] < 0.0))
        .collect();
    let centers = group_centers(emb, &labels, 2, Metric::SquaredL2);
    let inertia = (0..emb.nrows())
        .map(|i| (emb[(i, 0)] - centers[(labels[i], 0)]).powi(2))
        .sum();
    Ok(ClusterResult {
        labels,
        memberships: None,
        centers,
        inertia,
        inertia_trace: vec![inertia],
    })
}

/// Fuzzy c-means with fuzzifier `m > 1` (conventionally 2): alternates the
/// closed-form membership update with weighted center updates until centers
/// move less than the tolerance.
pub fn fuzzy_cmeans(
    emb: &EmbeddingRows,
    k_c: usize,
    m: f64,
    seed: u64,
) -> Result<ClusterResult> {
    if m <= 1.0 {
        return Err(Error::Config(format!("fuzzifier must exceed 1, got {m}")));
    }
    check_embedding(emb, k_c)?;
    let d = emb.nrows();
    let k = emb.ncols();
    let mut centers = seed_centers(emb, k_c, seed, Metric::SquaredL2);
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERS {
        let u = fcm_memberships(emb, &centers, m);
        let inertia = (0..d)
            .map(|i| {
                (0..k_c)
                    .map(|j| {
                        u[(i, j)].powf(m) * (emb.row(i) - centers.row(j)).norm_squared()
                    })
                    .sum::<f64>()
            })
            .sum();
        trace.push(inertia);
        let mut new_centers = DMatrix::zeros(k_c, k);
        for j in 0..k_c {
            let mut weight = 0.0;
            for i in 0..d {
                let w = u[(i, j)].powf(m);
                weight += w;
                for c in 0..k {
                    new_centers[(j, c)] += w * emb[(i, c)];
                }
            }
            if weight > 0.0 {
                for c in 0..k {
                    new_centers[(j, c)] /= weight;
                }
            }
        }
        let moved = (0..k_c)
            .map(|j| (new_centers.row(j) - centers.row(j)).norm())
            .fold(0.0, f64::max);
        centers = new_centers;
        if moved < CENTER_TOL {
            break;
        }
    }
    let u = fcm_memberships(emb, &centers, m);
    let labels = argmax_rows(&u);
    let inertia = *trace.last().unwrap();
    Ok(ClusterResult {
        labels,
        memberships: Some(u),
        centers,
        inertia,
        inertia_trace: trace,
    })
}

/// The fuzzy c-means membership update. A point coinciding with one or more
/// centers splits its membership uniformly over the zero-distance centers.
fn fcm_memberships(emb: &EmbeddingRows, centers: &DMatrix<f64>, m: f64) -> DMatrix<f64> {
    let k_c = centers.nrows();
    let exponent = 2.0 / (m - 1.0);
    let rows = exec::par_map_indices(emb.nrows(), |i| {
        let dists: Vec<f64> = (0..k_c)
            .map(|j| (emb.row(i) - centers.row(j)).norm())
            .collect();
        let zeros: Vec<usize> = (0..k_c).filter(|&j| dists[j] == 0.0).collect();
        let mut row = vec![0.0; k_c];
        if !zeros.is_empty() {
            for &j in &zeros {
                row[j] = 1.0 / zeros.len() as f64;
            }
        } else {
            for j in 0..k_c {
                let denom: f64 = (0..k_c).map(|l| (dists[j] / dists[l]).powf(exponent)).sum();
                row[j] = 1.0 / denom;
            }
        }
        row
    });
    DMatrix::from_fn(emb.nrows(), k_c, |i, j| rows[i][j])
}

fn argmax_rows(u: &DMatrix<f64>) -> Vec<usize> {
    (0..u.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..u.ncols() {
                if u[(i, j)] > u[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Least-squares coefficients of each embedding row in the span of the
/// centers, clamped to be nonnegative and renormalized to sum to one. Rows
/// with no positive coefficient fall back to the uniform membership.
pub fn soft_membership_from_centers(
    emb: &EmbeddingRows,
    centers: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let coeffs = least_squares_coeffs(emb, centers)?;
    let k_c = centers.nrows();
    let mut u = coeffs.map(|w| w.max(0.0));
    for i in 0..u.nrows() {
        let sum: f64 = u.row(i).sum();
        if sum > 1e-12 {
            for j in 0..k_c {
                u[(i, j)] /= sum;
            }
        } else {
            for j in 0..k_c {
                u[(i, j)] = 1.0 / k_c as f64;
            }
        }
    }
    Ok(u)
}

/// Unconstrained least-squares solve `min_w ‖x - centersᵀ w‖` per row,
/// errors when the centers are numerically rank-deficient.
fn least_squares_coeffs(emb: &EmbeddingRows, centers: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if centers.nrows() == 0 || emb.ncols() != centers.ncols() {
        return Err(Error::Dimension(format!(
            "centers are {}x{} but embedding is {}x{}",
            centers.nrows(),
            centers.ncols(),
            emb.nrows(),
            emb.ncols()
        )));
    }
    let svd = centers.transpose().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax.max(1.0) {
        return Err(Error::Numerical(
            "cluster centers are rank-deficient".into(),
        ));
    }
    let solved = svd
        .solve(&emb.transpose(), 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(solved.transpose())
}
