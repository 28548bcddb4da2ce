//! End-to-end detection: geodesic tracking at fixed community count, the
//! per-snapshot static baseline, a variable community count sweep driven by a
//! smoothed modularity table, modularity-based model selection, and the
//! low-rank trajectory diagnostic behind the circle plots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::{
    fuzzy_cmeans, kmeans_restarts, kmedians_restarts, sign_split, soft_membership_from_centers,
    ClusterResult,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::geodesic::{fit_geodesic, FitOptions, FitReport};
use crate::graph::{GraphSnapshot, PartitionSequence, SnapshotSequence};
use crate::linalg;
use crate::mcm::{build_mcm_sequence, Mcm, Method, MethodSpec};
use crate::metrics;

/// Everything a detection run needs besides the data. `k_c` is the number of
/// communities tracked in fixed mode and `k_e` the embedding rank (leave it
/// zero to default to `k_c`, or to `k_max` in variable mode). `k_min..=k_max`
/// is the range scanned in variable mode, where the embedding rank is pinned
/// to `k_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: MethodSpec,
    #[serde(default)]
    pub k_c: usize,
    #[serde(default)]
    pub k_e: usize,
    #[serde(default)]
    pub k_min: usize,
    #[serde(default)]
    pub k_max: usize,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub seed: u64,
    /// Width of the Gaussian smoother applied to each benefit-table row;
    /// zero disables filtering.
    #[serde(default = "default_sigma")]
    pub gaussian_sigma: f64,
    /// Seeded clustering restarts per snapshot; the best inertia wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_restarts() -> usize {
    8
}

impl PipelineConfig {
    /// Fixed-mode config tracking `k_c` communities at embedding rank `k_c`.
    pub fn new(method: MethodSpec, k_c: usize) -> Self {
        Self {
            method,
            k_c,
            k_e: k_c,
            k_min: 0,
            k_max: 0,
            fit: FitOptions::default(),
            seed: 0,
            gaussian_sigma: default_sigma(),
            restarts: default_restarts(),
        }
    }

    /// Variable-mode config scanning `k_min..=k_max` communities.
    pub fn variable(method: MethodSpec, k_min: usize, k_max: usize) -> Self {
        Self {
            method,
            k_c: k_max,
            k_e: k_max,
            k_min,
            k_max,
            fit: FitOptions::default(),
            seed: 0,
            gaussian_sigma: default_sigma(),
            restarts: default_restarts(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate_common(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config(
                "clustering needs at least one restart".into(),
            ));
        }
        Ok(())
    }

    /// Embedding rank for fixed mode: `k_e`, defaulting to `k_c` when unset,
    /// and never below `k_c`.
    fn fixed_rank(&self) -> Result<usize> {
        self.validate_common()?;
        if self.k_c == 0 {
            return Err(Error::Config("k_c must be at least 1".into()));
        }
        let k_e = if self.k_e == 0 { self.k_c } else { self.k_e };
        if k_e < self.k_c {
            return Err(Error::Config(format!(
                "embedding rank {k_e} cannot be below k_c = {}",
                self.k_c
            )));
        }
        Ok(k_e)
    }

    /// Range and embedding rank for variable mode; the rank is `k_max`.
    fn variable_range(&self) -> Result<(usize, usize)> {
        self.validate_common()?;
        if self.k_min == 0 || self.k_max == 0 {
            return Err(Error::Config(
                "variable mode needs k_min and k_max set".into(),
            ));
        }
        if self.k_min > self.k_max {
            return Err(Error::Config(format!(
                "k_min = {} exceeds k_max = {}",
                self.k_min, self.k_max
            )));
        }
        if self.k_e != 0 && self.k_e != self.k_max {
            return Err(Error::Config(format!(
                "variable mode embeds at rank k_max = {}; leave k_e at zero or set it equal",
                self.k_max
            )));
        }
        Ok((self.k_min, self.k_max))
    }
}

/// Modularity of every candidate community count at every snapshot, raw and
/// after per-row Gaussian smoothing. Row `r` corresponds to `k = k_min + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenefitTable {
    pub k_min: usize,
    pub h: DMatrix<f64>,
    pub filtered: DMatrix<f64>,
}

const BENEFIT_SCHEMA: &str = "benefit-table/1";

#[derive(Serialize, Deserialize)]
struct BenefitFile {
    schema: String,
    k_min: usize,
    /// Row-major: `h[r][t]` is the benefit of `k_min + r` at snapshot `t`.
    h: Vec<Vec<f64>>,
    filtered: Vec<Vec<f64>>,
}

impl BenefitTable {
    /// Per-snapshot argmax over the filtered rows; ties go to the smaller k.
    pub fn chosen_k(&self) -> Vec<usize> {
        (0..self.filtered.ncols())
            .map(|t| {
                let mut best = 0;
                let mut best_value = f64::NEG_INFINITY;
                for r in 0..self.filtered.nrows() {
                    let value = self.filtered[(r, t)];
                    if value > best_value {
                        best_value = value;
                        best = r;
                    }
                }
                self.k_min + best
            })
            .collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect()
        };
        let file = BenefitFile {
            schema: BENEFIT_SCHEMA.into(),
            k_min: self.k_min,
            h: rows(&self.h),
            filtered: rows(&self.filtered),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file: BenefitFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.schema != BENEFIT_SCHEMA {
            return Err(Error::Parse(format!(
                "expected schema {BENEFIT_SCHEMA}, found {}",
                file.schema
            )));
        }
        let to_matrix = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::Parse("ragged benefit table".into()));
            }
            Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
        };
        let h = to_matrix(&file.h)?;
        let filtered = to_matrix(&file.filtered)?;
        if h.shape() != filtered.shape() {
            return Err(Error::Parse("benefit table shape mismatch".into()));
        }
        Ok(Self {
            k_min: file.k_min,
            h,
            filtered,
        })
    }
}

/// Tracks `config.k_c` communities through the whole sequence: builds MCMs,
/// fits one geodesic at rank `k_e`, then clusters each snapshot's embedding
/// with the method's heuristic, warm-starting from the previous snapshot.
/// Times are rescaled to `[0, 1]` before fitting so rotation rates are
/// comparable across sampling grids.
pub fn detect_fixed_k(
    seq: &SnapshotSequence,
    config: &PipelineConfig,
) -> Result<(PartitionSequence, FitReport)> {
    let k_e = config.fixed_rank()?;
    let (embeddings, report) = geodesic_embeddings(seq, &config.method, k_e, &config.fit)?;
    let clustered = cluster_sequence(
        &embeddings,
        &config.method,
        config.k_c,
        config.seed,
        config.restarts,
        true,
    )?;
    Ok((clustered.into_partition()?, report))
}

/// Per-snapshot baseline: truncated SVD of each MCM at rank `k_e`, then the
/// same clustering heuristic with no temporal coupling (labels are still
/// aligned across snapshots for reporting).
pub fn detect_static(seq: &SnapshotSequence, config: &PipelineConfig) -> Result<PartitionSequence> {
    let k_e = config.fixed_rank()?;
    let mcms = build_mcm_sequence(seq, &config.method)?;
    let embeddings = exec::par_map(&mcms, |m| linalg::top_k_left_singular(&m.matrix, k_e))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let clustered = cluster_sequence(
        &embeddings,
        &config.method,
        config.k_c,
        config.seed,
        config.restarts,
        false,
    )?;
    clustered.into_partition()
}

/// Variable community count: one geodesic fit at rank `k_max`, then for each
/// k in `k_min..=k_max` a warm-started clustering pass whose per-snapshot
/// modularity fills the benefit table. Each row is Gaussian-smoothed and the
/// per-snapshot argmax picks that snapshot's partition.
pub fn detect_variable_k(
    seq: &SnapshotSequence,
    config: &PipelineConfig,
) -> Result<(PartitionSequence, BenefitTable)> {
    let (k_min, k_max) = config.variable_range()?;
    let (embeddings, _) = geodesic_embeddings(seq, &config.method, k_max, &config.fit)?;
    let t = embeddings.len();
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let sweeps = exec::par_map(&ks, |&k| -> Result<(ClusteredSequence, Vec<f64>)> {
        let clustered = cluster_sequence(
            &embeddings,
            &config.method,
            k,
            config.seed,
            config.restarts,
            true,
        )?;
        let q = (0..t)
            .map(|i| benefit_modularity(seq.snapshot(i), &clustered.labels[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok((clustered, q))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut h = DMatrix::zeros(ks.len(), t);
    for (r, (_, q)) in sweeps.iter().enumerate() {
        for (i, &value) in q.iter().enumerate() {
            h[(r, i)] = value;
        }
    }
    let filtered = gaussian_filter_rows(&h, config.gaussian_sigma);
    let table = BenefitTable { k_min, h, filtered };
    let chosen = table.chosen_k();

    let soft = config.method.method.is_soft();
    let partition = if soft {
        let memberships = (0..t)
            .map(|i| {
                let sweep = &sweeps[chosen[i] - k_min].0;
                let u = sweep.memberships.as_ref().expect("soft method memberships");
                membership_rows(&u[i])
            })
            .collect();
        PartitionSequence::Soft {
            k_per_step: chosen,
            memberships,
        }
    } else {
        let raw: Vec<Vec<usize>> = (0..t)
            .map(|i| sweeps[chosen[i] - k_min].0.labels[i].clone())
            .collect();
        let aligned = align_sequence(&raw)?;
        hard_partition(aligned, &chosen)
    };
    Ok((partition, table))
}

/// Runs the fixed pipeline at every k in `lo..=hi` (embedding at rank k),
/// scores each run by per-snapshot modularity, and returns the mode of the
/// per-snapshot winners. All ties break toward the smaller k.
pub fn select_k_by_modularity(
    seq: &SnapshotSequence,
    config: &PipelineConfig,
    k_range: (usize, usize),
) -> Result<usize> {
    let (lo, hi) = k_range;
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!(
            "community count range {lo}..={hi} is empty or starts at zero"
        )));
    }
    let t = seq.len();
    let ks: Vec<usize> = (lo..=hi).collect();
    let traces = exec::par_map(&ks, |&k| -> Result<Vec<f64>> {
        let mut cfg = config.clone();
        cfg.k_c = k;
        cfg.k_e = k;
        let (partition, _) = detect_fixed_k(seq, &cfg)?;
        let labels = hard_labels(&partition);
        (0..t)
            .map(|i| benefit_modularity(seq.snapshot(i), &labels[i]))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut votes = vec![0usize; ks.len()];
    for i in 0..t {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (r, trace) in traces.iter().enumerate() {
            if trace[i] > best_value {
                best_value = trace[i];
                best = r;
            }
        }
        votes[best] += 1;
    }
    let mut winner = 0;
    let mut most = 0;
    for (r, &count) in votes.iter().enumerate() {
        if count > most {
            most = count;
            winner = r;
        }
    }
    Ok(ks[winner])
}

/// Stacks each MCM's leading left singular vector and its negation into
/// `X = [u_1 .. u_T, -u_1 .. -u_T]` and returns X's full singular spectrum
/// together with the 2D principal-component projection of every column (the
/// column set is sign-symmetric, so X is already mean-centered and the
/// projection needs no centering step). Sequences whose leading subspaces
/// ride a single rotating plane leave `sigma[2] / sigma[0]` at roundoff
/// level; unit-norm eigenvectors keep every projection inside the unit disc.
pub fn geodesic_structure_check(mcms: &[Mcm]) -> Result<(DVector<f64>, Vec<(f64, f64)>)> {
    if mcms.len() < 2 {
        return Err(Error::Dimension(format!(
            "the trajectory check needs at least 2 snapshots, got {}",
            mcms.len()
        )));
    }
    let d = mcms[0].matrix.nrows();
    for m in mcms {
        if m.matrix.nrows() != d || m.matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "expected square {d}x{d} matrices, found {}x{}",
                m.matrix.nrows(),
                m.matrix.ncols()
            )));
        }
    }
    let t = mcms.len();
    let vectors = exec::par_map(mcms, |m| linalg::top_k_left_singular(&m.matrix, 1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut x = DMatrix::zeros(d, 2 * t);
    for (i, u) in vectors.iter().enumerate() {
        for row in 0..d {
            x[(row, i)] = u[(row, 0)];
            x[(row, i + t)] = -u[(row, 0)];
        }
    }
    let mut values: Vec<f64> = x.clone().svd(false, false).singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let sigma = DVector::from_vec(values);

    // A rank-one stack (all eigenvectors identical) has no second principal
    // component; every column then projects to zero on that axis.
    let basis = match linalg::top_k_left_singular(&x, 2.min(d)) {
        Ok(basis) => basis,
        Err(Error::Numerical(_)) => linalg::top_k_left_singular(&x, 1)?,
        Err(e) => return Err(e),
    };
    let proj = (0..2 * t)
        .map(|i| {
            let col = x.column(i);
            let p1 = basis.column(0).dot(&col);
            let p2 = if basis.ncols() > 1 {
                basis.column(1).dot(&col)
            } else {
                0.0
            };
            (p1, p2)
        })
        .collect();
    Ok((sigma, proj))
}

/// Newman modularity evaluated on an undirected, non-negative view of the
/// snapshot: views are averaged, weights enter by absolute value, and a
/// directed adjacency is symmetrized. Snapshots without edges score zero.
pub fn benefit_modularity(snapshot: &GraphSnapshot, labels: &[usize]) -> Result<f64> {
    let d = snapshot.d();
    if labels.len() != d {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.len(),
            d
        )));
    }
    let views = snapshot.num_views();
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for v in 0..views {
        acc += snapshot.adjacency_view(v).map(f64::abs);
    }
    acc.unscale_mut(views as f64);
    let mut edges = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let w = 0.5 * (acc[(i, j)] + acc[(j, i)]);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    if edges.is_empty() {
        return Ok(0.0);
    }
    let plain = GraphSnapshot::new(d, false, edges)?;
    metrics::modularity(&plain, labels)
}

/// Hard labels of a partition sequence; soft memberships harden by argmax.
pub fn hard_labels(partition: &PartitionSequence) -> Vec<Vec<usize>> {
    match partition {
        PartitionSequence::Hard { labels, .. } => labels.clone(),
        PartitionSequence::Soft { memberships, .. } => memberships
            .iter()
            .map(|step| {
                step.iter()
                    .map(|row| {
                        let mut best = 0;
                        let mut best_value = f64::NEG_INFINITY;
                        for (j, &w) in row.iter().enumerate() {
                            if w > best_value {
                                best_value = w;
                                best = j;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect(),
    }
}

/// MCMs, one shared geodesic fit, and the evaluated per-snapshot embeddings.
fn geodesic_embeddings(
    seq: &SnapshotSequence,
    spec: &MethodSpec,
    k_e: usize,
    fit: &FitOptions,
) -> Result<(Vec<DMatrix<f64>>, FitReport)> {
    let mcms = build_mcm_sequence(seq, spec)?;
    let matrices: Vec<DMatrix<f64>> = mcms.into_iter().map(|m| m.matrix).collect();
    let times = seq.normalized_times();
    let (model, report) = fit_geodesic(&matrices, &times, k_e, fit)?;
    let embeddings = times.iter().map(|&t| model.evaluate(t)).collect();
    Ok((embeddings, report))
}

struct ClusteredSequence {
    k_c: usize,
    labels: Vec<Vec<usize>>,
    memberships: Option<Vec<DMatrix<f64>>>,
}

impl ClusteredSequence {
    /// Aligns labels across snapshots and packages the partition; soft
    /// methods keep their membership rows (columns stay in cluster order).
    fn into_partition(self) -> Result<PartitionSequence> {
        if let Some(memberships) = self.memberships {
            return Ok(PartitionSequence::Soft {
                k_per_step: vec![self.k_c; memberships.len()],
                memberships: memberships.iter().map(membership_rows).collect(),
            });
        }
        let aligned = align_sequence(&self.labels)?;
        let k_per_step = vec![self.k_c; aligned.len()];
        Ok(hard_partition(aligned, &k_per_step))
    }
}

/// Clusters every embedding with the method's heuristic. With `warm` set,
/// each snapshot starts from the previous snapshot's labels; the baseline
/// runs every snapshot cold. The same seed drives every snapshot so matched
/// data gives matched clusterings.
fn cluster_sequence(
    embeddings: &[DMatrix<f64>],
    spec: &MethodSpec,
    k_c: usize,
    seed: u64,
    restarts: usize,
    warm: bool,
) -> Result<ClusteredSequence> {
    let soft = spec.method.is_soft();
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(embeddings.len());
    let mut memberships: Vec<DMatrix<f64>> = Vec::new();
    for emb in embeddings {
        let warm_labels = if warm {
            labels.last().map(Vec::as_slice)
        } else {
            None
        };
        let (step_labels, step_membership) =
            cluster_embedding(emb, spec, k_c, seed, restarts, warm_labels)?;
        labels.push(step_labels);
        if let Some(u) = step_membership {
            memberships.push(u);
        }
    }
    Ok(ClusteredSequence {
        k_c,
        labels,
        memberships: soft.then_some(memberships),
    })
}

/// Per-method clustering heuristic for one snapshot's embedding rows.
fn cluster_embedding(
    emb: &DMatrix<f64>,
    spec: &MethodSpec,
    k_c: usize,
    seed: u64,
    restarts: usize,
    warm: Option<&[usize]>,
) -> Result<(Vec<usize>, Option<DMatrix<f64>>)> {
    match spec.method {
        Method::Osc => {
            let normed = l2_normalize_rows(emb);
            let result = kmedians_restarts(&normed, k_c, seed, restarts, warm)?;
            let u = soft_membership_from_centers(&normed, &result.centers)?;
            Ok((result.labels, Some(u)))
        }
        Method::Csc => {
            let result = best_fuzzy(emb, k_c, seed, restarts)?;
            let u = result.memberships.expect("fuzzy c-means memberships");
            Ok((result.labels, Some(u)))
        }
        _ if k_c == 2 && emb.ncols() == 1 => {
            let result = sign_split(emb)?;
            Ok((result.labels, None))
        }
        // The clustering conventions behind these methods place embedding
        // rows on the unit sphere before k-means, cancelling the degree
        // spread that the leading basis direction carries.
        Method::Nsc | Method::SccSend | Method::SccReceive => {
            let normed = l2_normalize_rows(emb);
            let result = kmeans_restarts(&normed, k_c, seed, restarts, warm)?;
            Ok((result.labels, None))
        }
        _ => {
            let result = kmeans_restarts(emb, k_c, seed, restarts, warm)?;
            Ok((result.labels, None))
        }
    }
}

/// Best of `restarts` fuzzy c-means runs by inertia (it has no warm start).
fn best_fuzzy(emb: &DMatrix<f64>, k_c: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts {
        let run = fuzzy_cmeans(emb, k_c, 2.0, seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::Config("clustering needs at least one restart".into()))
}

fn l2_normalize_rows(emb: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = emb.clone();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm > 0.0 {
            for j in 0..out.ncols() {
                out[(i, j)] /= norm;
            }
        }
    }
    out
}

fn membership_rows(u: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..u.nrows())
        .map(|i| u.row(i).iter().copied().collect())
        .collect()
}

/// Hungarian alignment of each snapshot's labels against the previous
/// (already aligned) snapshot, so ids stay stable for reporting.
fn align_sequence(raw: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(raw.len());
    for labels in raw {
        let aligned = match out.last() {
            Some(prev) => metrics::align_labels(prev, labels)?,
            None => labels.clone(),
        };
        out.push(aligned);
    }
    Ok(out)
}

/// Hard partition whose step sizes never understate the label range (an
/// alignment can hand out a fresh id past the nominal k when a cluster dies).
fn hard_partition(aligned: Vec<Vec<usize>>, k_per_step: &[usize]) -> PartitionSequence {
    let k_per_step = aligned
        .iter()
        .zip(k_per_step)
        .map(|(labels, &k)| labels.iter().copied().max().map_or(k, |m| k.max(m + 1)))
        .collect();
    PartitionSequence::Hard {
        k_per_step,
        labels: aligned,
        mask: None,
    }
}

/// Convolves each row with a normalized Gaussian truncated at four standard
/// deviations, reflecting at the boundaries (`d c b a | a b c d | d c b a`).
/// A non-positive width returns the input unchanged.
fn gaussian_filter_rows(h: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    if sigma <= 0.0 || h.ncols() <= 1 {
        return h.clone();
    }
    let t = h.ncols() as isize;
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|offset| (-((offset * offset) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let mut out = h.clone();
    for r in 0..h.nrows() {
        for i in 0..t {
            let mut acc = 0.0;
            for (j, &w) in kernel.iter().enumerate() {
                let idx = reflect_index(i + j as isize - radius, t);
                acc += w * h[(r, idx)];
            }
            out[(r, i as usize)] = acc / total;
        }
    }
    out
}

fn reflect_index(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}
