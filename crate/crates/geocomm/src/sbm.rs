//! Seeded dynamic stochastic block model generators.
//!
//! Each generator consumes an [`SbmConfig`] and returns a snapshot sequence at
//! equally spaced times plus the planted community structure. Label dynamics
//! run on a dedicated RNG substream while snapshot `i` draws its edges from
//! substream `i + 1`, so edge generation is reproducible whether snapshots are
//! sampled in parallel or sequentially.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{
    equally_spaced_times, Edge, GraphSnapshot, PartitionSequence, SnapshotSequence,
};

/// Model family to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Simple,
    Ssbm,
    Mmsbm,
    Dsbm,
    Scbm,
    Hsbm,
    Mvsbm,
}

/// Rooted tree of edge probabilities for the hierarchical model. Node `m`
/// carries the probability applied to node pairs whose least common ancestor
/// is `m`; leaves double as the communities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTree {
    /// `parent[m]` of each tree node; exactly one entry is `None` (the root).
    pub parent: Vec<Option<usize>>,
    /// Edge probability attached to each tree node.
    pub prob: Vec<f64>,
}

impl ProbTree {
    /// Root plus `leaf_probs.len()` leaves directly under it.
    pub fn star(root_prob: f64, leaf_probs: &[f64]) -> Self {
        let mut parent = vec![None];
        let mut prob = vec![root_prob];
        for &p in leaf_probs {
            parent.push(Some(0));
            prob.push(p);
        }
        ProbTree { parent, prob }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parent.len();
        if n == 0 || self.prob.len() != n {
            return Err(Error::Config(
                "tree needs matching parent and prob arrays".into(),
            ));
        }
        let roots = self.parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::Config(format!("tree has {roots} roots, wants 1")));
        }
        for (m, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                if *p >= n {
                    return Err(Error::Config(format!("tree node {m} has parent {p} >= {n}")));
                }
            }
            // A walk to the root must terminate within n steps.
            let mut cur = m;
            for steps in 0.. {
                match self.parent[cur] {
                    None => break,
                    Some(up) => cur = up,
                }
                if steps >= n {
                    return Err(Error::Config(format!("tree has a cycle through node {m}")));
                }
            }
            check_prob("tree prob", self.prob[m])?;
        }
        Ok(())
    }

    /// Leaf nodes (no children), in index order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut has_child = vec![false; self.parent.len()];
        for p in self.parent.iter().flatten() {
            has_child[*p] = true;
        }
        (0..self.parent.len()).filter(|&m| !has_child[m]).collect()
    }

    fn depth(&self, mut m: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent[m] {
            m = p;
            d += 1;
        }
        d
    }

    /// Least common ancestor of two tree nodes.
    pub fn lca(&self, mut a: usize, mut b: usize) -> usize {
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        while da > db {
            a = self.parent[a].unwrap();
            da -= 1;
        }
        while db > da {
            b = self.parent[b].unwrap();
            db -= 1;
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }
}

fn default_views() -> usize {
    1
}

/// Parameters shared by the model families; fields irrelevant to the chosen
/// variant are ignored. `p_switch_send`/`p_switch_receive` fall back to
/// `p_switch` when unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub variant: Variant,
    pub d: usize,
    pub t: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub p_in: f64,
    #[serde(default)]
    pub p_out: f64,
    #[serde(default)]
    pub p_switch: f64,
    #[serde(default)]
    pub p_switch_send: Option<f64>,
    #[serde(default)]
    pub p_switch_receive: Option<f64>,
    #[serde(default)]
    pub eta_in: f64,
    #[serde(default)]
    pub eta_out: f64,
    /// Orientation matrix for the directed model; `f[l][j] + f[j][l] = 1`.
    #[serde(default)]
    pub f: Option<Vec<Vec<f64>>>,
    /// Block probability matrix: `k x k` for mixed membership, sending by
    /// receiving for co-clustering.
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    /// Initial mixed memberships, one row-stochastic row per node.
    #[serde(default)]
    pub phi: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub tree: Option<ProbTree>,
    /// View count for the multiview model.
    #[serde(default = "default_views")]
    pub s: usize,
    /// Sender/receiver node counts for bipartite co-clustering; unset means
    /// one square node set playing both roles.
    #[serde(default)]
    pub bipartite: Option<(usize, usize)>,
    #[serde(default)]
    pub seed: u64,
}

impl SbmConfig {
    /// Baseline config for `variant` with every probability zero.
    pub fn new(variant: Variant, d: usize, t: usize, k: usize) -> Self {
        SbmConfig {
            variant,
            d,
            t,
            k,
            p_in: 0.0,
            p_out: 0.0,
            p_switch: 0.0,
            p_switch_send: None,
            p_switch_receive: None,
            eta_in: 0.0,
            eta_out: 0.0,
            f: None,
            b: None,
            phi: None,
            tree: None,
            s: 1,
            bipartite: None,
            seed: 0,
        }
    }
}

/// Output of [`generate`]: the sequence, the planted structure, and for
/// co-clustering models the receive-side structure as well (in which case
/// `truth` covers the sending side).
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub sequence: SnapshotSequence,
    pub truth: PartitionSequence,
    pub truth_receive: Option<PartitionSequence>,
}

/// Dispatches on `config.variant`.
pub fn generate(config: &SbmConfig) -> Result<Generated> {
    let (sequence, truth, truth_receive) = match config.variant {
        Variant::Simple => {
            let (s, p) = gen_simple(config)?;
            (s, p, None)
        }
        Variant::Ssbm => {
            let (s, p) = gen_ssbm(config)?;
            (s, p, None)
        }
        Variant::Mmsbm => {
            let (s, p) = gen_mmsbm(config)?;
            (s, p, None)
        }
        Variant::Dsbm => {
            let (s, p) = gen_dsbm(config)?;
            (s, p, None)
        }
        Variant::Scbm => {
            let (s, send, recv) = gen_scbm(config)?;
            (s, send, Some(recv))
        }
        Variant::Hsbm => {
            let (s, p) = gen_hsbm(config)?;
            (s, p, None)
        }
        Variant::Mvsbm => {
            let (s, p) = gen_mvsbm(config)?;
            (s, p, None)
        }
    };
    Ok(Generated {
        sequence,
        truth,
        truth_receive,
    })
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

fn expect_variant(config: &SbmConfig, want: Variant) -> Result<()> {
    if config.variant != want {
        return Err(Error::Config(format!(
            "config variant {:?} passed to the {want:?} generator",
            config.variant
        )));
    }
    Ok(())
}

fn validate_base(config: &SbmConfig, needs_k: bool) -> Result<()> {
    if config.d == 0 || config.t == 0 {
        return Err(Error::Config("d and t must be positive".into()));
    }
    if needs_k {
        if config.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if config.k > config.d {
            return Err(Error::Config(format!(
                "k = {} exceeds d = {}",
                config.k, config.d
            )));
        }
    }
    check_prob("p_in", config.p_in)?;
    check_prob("p_out", config.p_out)?;
    check_prob("p_switch", config.p_switch)?;
    if let Some(p) = config.p_switch_send {
        check_prob("p_switch_send", p)?;
    }
    if let Some(p) = config.p_switch_receive {
        check_prob("p_switch_receive", p)?;
    }
    Ok(())
}

/// Equal split into `k` contiguous blocks; the first `d mod k` communities
/// absorb the remainder, one node each.
fn equal_split(d: usize, k: usize) -> Vec<usize> {
    let base = d / k;
    let rem = d % k;
    let mut labels = Vec::with_capacity(d);
    for c in 0..k {
        let size = base + usize::from(c < rem);
        labels.extend(std::iter::repeat(c).take(size));
    }
    labels
}

fn switch_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn edge_rng(seed: u64, snapshot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(snapshot as u64 + 1);
    rng
}

/// Label paths under once-only switching: per step every node that has not
/// switched yet does so with probability `p_switch`, to whatever `target`
/// picks; a `None` target leaves the node in place (and free to try again).
fn switch_once_only<F>(
    initial: Vec<usize>,
    t: usize,
    p_switch: f64,
    rng: &mut ChaCha8Rng,
    mut target: F,
) -> Vec<Vec<usize>>
where
    F: FnMut(&mut ChaCha8Rng, usize) -> Option<usize>,
{
    let mut switched = vec![false; initial.len()];
    let mut steps = Vec::with_capacity(t);
    steps.push(initial);
    for _ in 1..t {
        let mut cur = steps.last().expect("nonempty").clone();
        for (i, done) in switched.iter_mut().enumerate() {
            if !*done && rng.gen::<f64>() < p_switch {
                if let Some(next) = target(rng, cur[i]) {
                    cur[i] = next;
                    *done = true;
                }
            }
        }
        steps.push(cur);
    }
    steps
}

/// Uniform pick among the `k - 1` communities other than the current one.
fn uniform_other(k: usize) -> impl FnMut(&mut ChaCha8Rng, usize) -> Option<usize> {
    move |rng, cur| {
        if k < 2 {
            return None;
        }
        let mut c = rng.gen_range(0..k - 1);
        if c >= cur {
            c += 1;
        }
        Some(c)
    }
}

fn hard_truth(k: usize, labels: Vec<Vec<usize>>) -> PartitionSequence {
    PartitionSequence::Hard {
        k_per_step: vec![k; labels.len()],
        labels,
        mask: None,
    }
}

/// Runs `sample` once per snapshot, each on its own RNG substream.
fn sample_snapshots<F>(config: &SbmConfig, sample: F) -> Result<Vec<GraphSnapshot>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<GraphSnapshot> + Sync,
{
    exec::par_map_indices(config.t, |i| {
        let mut rng = edge_rng(config.seed, i);
        sample(i, &mut rng)
    })
    .into_iter()
    .collect()
}

fn sequence_from(config: &SbmConfig, snapshots: Vec<GraphSnapshot>) -> Result<SnapshotSequence> {
    SnapshotSequence::new(equally_spaced_times(config.t), snapshots)
}

fn sample_block_edges(
    labels: &[usize],
    p_in: f64,
    p_out: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Edge> {
    let d = labels.len();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    edges
}

/// Undirected planted-partition model: intra-community edges at `p_in`,
/// inter at `p_out`, nodes switching community at most once.
pub fn gen_simple(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Simple)?;
    validate_base(config, true)?;
    let mut rng = switch_rng(config.seed);
    let labels = switch_once_only(
        equal_split(config.d, config.k),
        config.t,
        config.p_switch,
        &mut rng,
        uniform_other(config.k),
    );
    let snapshots = sample_snapshots(config, |i, rng| {
        let edges = sample_block_edges(&labels[i], config.p_in, config.p_out, rng);
        GraphSnapshot::new(config.d, false, edges)
    })?;
    Ok((sequence_from(config, snapshots)?, hard_truth(config.k, labels)))
}

/// Signed variant: `+1` intra edges at `p_in` and `-1` inter edges at
/// `p_out`, with each placed edge's sign flipped at rate `eta_in`/`eta_out`.
pub fn gen_ssbm(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Ssbm)?;
    validate_base(config, true)?;
    if config.eta_in >= 0.5 || config.eta_out >= 0.5 || config.eta_in < 0.0 || config.eta_out < 0.0
    {
        return Err(Error::Config(format!(
            "sign-flip rates ({}, {}) must lie in [0, 1/2)",
            config.eta_in, config.eta_out
        )));
    }
    let mut rng = switch_rng(config.seed);
    let labels = switch_once_only(
        equal_split(config.d, config.k),
        config.t,
        config.p_switch,
        &mut rng,
        uniform_other(config.k),
    );
    let snapshots = sample_snapshots(config, |i, rng| {
        let ls = &labels[i];
        let mut edges = Vec::new();
        for a in 0..config.d {
            for b in (a + 1)..config.d {
                if ls[a] == ls[b] {
                    if rng.gen::<f64>() < config.p_in {
                        let w = if rng.gen::<f64>() < config.eta_in { -1.0 } else { 1.0 };
                        edges.push((a, b, w));
                    }
                } else if rng.gen::<f64>() < config.p_out {
                    let w = if rng.gen::<f64>() < config.eta_out { 1.0 } else { -1.0 };
                    edges.push((a, b, w));
                }
            }
        }
        GraphSnapshot::new(config.d, false, edges)
    })?;
    Ok((sequence_from(config, snapshots)?, hard_truth(config.k, labels)))
}

fn validate_stochastic_rows(phi: &[Vec<f64>], k: usize) -> Result<()> {
    for (i, row) in phi.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Config(format!(
                "membership row {i} has {} entries, wants {k}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&w| !(0.0..=1.0).contains(&w)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "membership row {i} is not a probability vector"
            )));
        }
    }
    Ok(())
}

fn validate_prob_matrix(name: &str, m: &[Vec<f64>]) -> Result<(usize, usize)> {
    if m.is_empty() || m[0].is_empty() {
        return Err(Error::Config(format!("{name} must be nonempty")));
    }
    let cols = m[0].len();
    for row in m {
        if row.len() != cols {
            return Err(Error::Config(format!("{name} rows have unequal lengths")));
        }
        for &p in row {
            check_prob(name, p)?;
        }
    }
    Ok((m.len(), cols))
}

/// Mixed-membership variant: `P(edge ij) = phi_i' B phi_j`. Switching is not
/// once-only; a switching node resamples its membership row uniformly from
/// the distinct rows present at the first snapshot.
pub fn gen_mmsbm(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Mmsbm)?;
    validate_base(config, true)?;
    let phi0: Vec<Vec<f64>> = match &config.phi {
        Some(rows) => {
            if rows.len() != config.d {
                return Err(Error::Config(format!(
                    "phi has {} rows, wants d = {}",
                    rows.len(),
                    config.d
                )));
            }
            rows.clone()
        }
        None => equal_split(config.d, config.k)
            .into_iter()
            .map(|c| {
                let mut row = vec![0.0; config.k];
                row[c] = 1.0;
                row
            })
            .collect(),
    };
    validate_stochastic_rows(&phi0, config.k)?;
    let b: Vec<Vec<f64>> = match &config.b {
        Some(b) => {
            let (rows, cols) = validate_prob_matrix("B", b)?;
            if rows != config.k || cols != config.k {
                return Err(Error::Config(format!(
                    "B is {rows} x {cols}, wants {0} x {0}",
                    config.k
                )));
            }
            b.clone()
        }
        None => (0..config.k)
            .map(|g| {
                (0..config.k)
                    .map(|h| if g == h { config.p_in } else { config.p_out })
                    .collect()
            })
            .collect(),
    };

    // Distinct membership rows at the first snapshot, in appearance order.
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for row in &phi0 {
        if !unique.contains(row) {
            unique.push(row.clone());
        }
    }

    let mut rng = switch_rng(config.seed);
    let mut steps = Vec::with_capacity(config.t);
    steps.push(phi0);
    for _ in 1..config.t {
        let mut cur = steps.last().expect("nonempty").clone();
        for row in cur.iter_mut() {
            if rng.gen::<f64>() < config.p_switch {
                *row = unique[rng.gen_range(0..unique.len())].clone();
            }
        }
        steps.push(cur);
    }

    let snapshots = sample_snapshots(config, |i, rng| {
        let phi = &steps[i];
        // bphi[j] = B phi_j, so each pair costs one dot product.
        let bphi: Vec<Vec<f64>> = phi
            .iter()
            .map(|pj| {
                (0..config.k)
                    .map(|g| (0..config.k).map(|h| b[g][h] * pj[h]).sum())
                    .collect()
            })
            .collect();
        let mut edges = Vec::new();
        for a in 0..config.d {
            for c in (a + 1)..config.d {
                let p: f64 = phi[a].iter().zip(&bphi[c]).map(|(x, y)| x * y).sum();
                if rng.gen::<f64>() < p {
                    edges.push((a, c, 1.0));
                }
            }
        }
        GraphSnapshot::new(config.d, false, edges)
    })?;
    let truth = PartitionSequence::Soft {
        k_per_step: vec![config.k; config.t],
        memberships: steps,
    };
    truth.validate()?;
    Ok((sequence_from(config, snapshots)?, truth))
}

/// Directed variant: undirected placement at `p_in`/`p_out`, then each placed
/// edge points `i -> j` with probability `F[z_i][z_j]`.
pub fn gen_dsbm(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Dsbm)?;
    validate_base(config, true)?;
    let f = config
        .f
        .as_ref()
        .ok_or_else(|| Error::Config("directed model needs an orientation matrix F".into()))?;
    let (rows, cols) = validate_prob_matrix("F", f)?;
    if rows != config.k || cols != config.k {
        return Err(Error::Config(format!(
            "F is {rows} x {cols}, wants {0} x {0}",
            config.k
        )));
    }
    for l in 0..config.k {
        for j in 0..config.k {
            if (f[l][j] + f[j][l] - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "F[{l}][{j}] + F[{j}][{l}] = {}, wants 1",
                    f[l][j] + f[j][l]
                )));
            }
        }
    }
    let mut rng = switch_rng(config.seed);
    let labels = switch_once_only(
        equal_split(config.d, config.k),
        config.t,
        config.p_switch,
        &mut rng,
        uniform_other(config.k),
    );
    let snapshots = sample_snapshots(config, |i, rng| {
        let ls = &labels[i];
        let mut edges = Vec::new();
        for a in 0..config.d {
            for b in (a + 1)..config.d {
                let p = if ls[a] == ls[b] { config.p_in } else { config.p_out };
                if rng.gen::<f64>() < p {
                    if rng.gen::<f64>() < f[ls[a]][ls[b]] {
                        edges.push((a, b, 1.0));
                    } else {
                        edges.push((b, a, 1.0));
                    }
                }
            }
        }
        GraphSnapshot::new(config.d, true, edges)
    })?;
    Ok((sequence_from(config, snapshots)?, hard_truth(config.k, labels)))
}

/// Per step, each node swaps its community assignment with probability
/// `p_switch`: it picks a uniformly random other community, then a uniformly
/// random current member of it, and the two trade places. Sizes never change.
fn swap_step(labels: &mut [usize], k: usize, p_switch: f64, rng: &mut ChaCha8Rng) {
    for i in 0..labels.len() {
        if rng.gen::<f64>() < p_switch && k > 1 {
            let mut c = rng.gen_range(0..k - 1);
            if c >= labels[i] {
                c += 1;
            }
            let members: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == c).collect();
            let j = members[rng.gen_range(0..members.len())];
            labels.swap(i, j);
        }
    }
}

/// Co-clustering variant: every node holds a sending and a receiving
/// assignment, an edge `i -> j` appears with probability `B[y_i][z_j]`, and
/// both assignments evolve by size-preserving swaps. With a `bipartite`
/// split, senders and receivers are disjoint node sets instead.
pub fn gen_scbm(
    config: &SbmConfig,
) -> Result<(SnapshotSequence, PartitionSequence, PartitionSequence)> {
    expect_variant(config, Variant::Scbm)?;
    validate_base(config, false)?;
    let b = config
        .b
        .as_ref()
        .ok_or_else(|| Error::Config("co-clustering model needs a block matrix B".into()))?;
    let (k_y, k_z) = validate_prob_matrix("B", b)?;
    let (n_send, n_recv) = match config.bipartite {
        Some((n1, n2)) => {
            if n1 + n2 != config.d || n1 == 0 || n2 == 0 {
                return Err(Error::Config(format!(
                    "bipartite split {n1}+{n2} does not partition d = {}",
                    config.d
                )));
            }
            (n1, n2)
        }
        None => (config.d, config.d),
    };
    if k_y > n_send || k_z > n_recv {
        return Err(Error::Config(format!(
            "B wants {k_y} sending and {k_z} receiving communities for {n_send}/{n_recv} nodes"
        )));
    }
    let p_send = config.p_switch_send.unwrap_or(config.p_switch);
    let p_recv = config.p_switch_receive.unwrap_or(config.p_switch);

    let mut rng = switch_rng(config.seed);
    let mut y = equal_split(n_send, k_y);
    let mut z = equal_split(n_recv, k_z);
    let mut ys = Vec::with_capacity(config.t);
    let mut zs = Vec::with_capacity(config.t);
    ys.push(y.clone());
    zs.push(z.clone());
    for _ in 1..config.t {
        swap_step(&mut y, k_y, p_send, &mut rng);
        swap_step(&mut z, k_z, p_recv, &mut rng);
        ys.push(y.clone());
        zs.push(z.clone());
    }

    let snapshots = sample_snapshots(config, |i, rng| {
        let (y, z) = (&ys[i], &zs[i]);
        let mut edges = Vec::new();
        match config.bipartite {
            Some((n1, _)) => {
                for a in 0..n_send {
                    for c in 0..n_recv {
                        if rng.gen::<f64>() < b[y[a]][z[c]] {
                            edges.push((a, n1 + c, 1.0));
                        }
                    }
                }
                GraphSnapshot::new_bipartite(n_send, n_recv, true, edges)
            }
            None => {
                for a in 0..config.d {
                    for c in 0..config.d {
                        if a != c && rng.gen::<f64>() < b[y[a]][z[c]] {
                            edges.push((a, c, 1.0));
                        }
                    }
                }
                GraphSnapshot::new(config.d, true, edges)
            }
        }
    })?;
    Ok((
        sequence_from(config, snapshots)?,
        hard_truth(k_y, ys),
        hard_truth(k_z, zs),
    ))
}

/// Hierarchical variant: nodes split equally among the tree's leaves and a
/// pair is joined with the probability stored at the least common ancestor of
/// their leaves. A switching node moves to a uniformly random sibling leaf.
pub fn gen_hsbm(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Hsbm)?;
    validate_base(config, false)?;
    let tree = config
        .tree
        .as_ref()
        .ok_or_else(|| Error::Config("hierarchical model needs a probability tree".into()))?;
    tree.validate()?;
    let leaves = tree.leaves();
    let l = leaves.len();
    if l > config.d {
        return Err(Error::Config(format!(
            "tree has {l} leaves for d = {} nodes",
            config.d
        )));
    }
    if config.k != 0 && config.k != l {
        return Err(Error::Config(format!(
            "k = {} disagrees with the tree's {l} leaves",
            config.k
        )));
    }

    // Pairwise probabilities and sibling lists, indexed by leaf position.
    let mut pair_prob = vec![vec![0.0; l]; l];
    for (ca, &la) in leaves.iter().enumerate() {
        for (cb, &lb) in leaves.iter().enumerate() {
            pair_prob[ca][cb] = tree.prob[tree.lca(la, lb)];
        }
    }
    let siblings: Vec<Vec<usize>> = leaves
        .iter()
        .map(|&la| {
            (0..l)
                .filter(|&cb| leaves[cb] != la && tree.parent[leaves[cb]] == tree.parent[la])
                .collect()
        })
        .collect();

    let mut rng = switch_rng(config.seed);
    let labels = switch_once_only(
        equal_split(config.d, l),
        config.t,
        config.p_switch,
        &mut rng,
        |rng, cur| {
            let sibs = &siblings[cur];
            if sibs.is_empty() {
                None
            } else {
                Some(sibs[rng.gen_range(0..sibs.len())])
            }
        },
    );
    let snapshots = sample_snapshots(config, |i, rng| {
        let ls = &labels[i];
        let mut edges = Vec::new();
        for a in 0..config.d {
            for b in (a + 1)..config.d {
                if rng.gen::<f64>() < pair_prob[ls[a]][ls[b]] {
                    edges.push((a, b, 1.0));
                }
            }
        }
        GraphSnapshot::new(config.d, false, edges)
    })?;
    Ok((sequence_from(config, snapshots)?, hard_truth(l, labels)))
}

/// Multiview variant: `s` independent planted-partition draws per snapshot,
/// all sharing the same labels.
pub fn gen_mvsbm(config: &SbmConfig) -> Result<(SnapshotSequence, PartitionSequence)> {
    expect_variant(config, Variant::Mvsbm)?;
    validate_base(config, true)?;
    if config.s == 0 {
        return Err(Error::Config("view count s must be positive".into()));
    }
    let mut rng = switch_rng(config.seed);
    let labels = switch_once_only(
        equal_split(config.d, config.k),
        config.t,
        config.p_switch,
        &mut rng,
        uniform_other(config.k),
    );
    let snapshots = sample_snapshots(config, |i, rng| {
        let views: Vec<Vec<Edge>> = (0..config.s)
            .map(|_| sample_block_edges(&labels[i], config.p_in, config.p_out, rng))
            .collect();
        GraphSnapshot::new_multiview(config.d, false, views)
    })?;
    Ok((sequence_from(config, snapshots)?, hard_truth(config.k, labels)))
}

/// One gradual community merge: over snapshots `start..end` the members of
/// `src` move one after another into `dst`, each spending a stretch of the
/// window in transit (unlabeled, edge probabilities interpolating).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub src: usize,
    pub dst: usize,
    pub start: usize,
    pub end: usize,
}

/// Planted-partition benchmark whose community count shrinks through gradual
/// pairwise merges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub d: usize,
    pub t: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub merges: Vec<MergeSpec>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Member(usize),
    /// In transit from `from` to `to`; `f` in `(0, 1)` is the progress.
    Moving { from: usize, to: usize, f: f64 },
}

fn merge_pair_prob(a: Phase, b: Phase, p_in: f64, p_out: f64) -> f64 {
    let mix = |f: f64| p_out + f * (p_in - p_out);
    match (a, b) {
        (Phase::Member(x), Phase::Member(y)) => {
            if x == y {
                p_in
            } else {
                p_out
            }
        }
        (Phase::Member(x), Phase::Moving { from, to, f })
        | (Phase::Moving { from, to, f }, Phase::Member(x)) => {
            if x == to {
                mix(f)
            } else if x == from {
                mix(1.0 - f)
            } else {
                p_out
            }
        }
        (Phase::Moving { from: fa, to: ta, .. }, Phase::Moving { from: fb, to: tb, .. }) => {
            // Cohorts of the same merge stay together the whole way.
            if fa == fb && ta == tb {
                p_in
            } else {
                p_out
            }
        }
    }
}

/// Generates the merge benchmark. The ground truth is a hard partition with a
/// mask: nodes in transit carry no defined community and are masked out.
pub fn gen_merge_benchmark(
    config: &MergeConfig,
) -> Result<(SnapshotSequence, PartitionSequence)> {
    if config.d == 0 || config.t == 0 || config.communities == 0 {
        return Err(Error::Config("d, t and communities must be positive".into()));
    }
    if config.communities > config.d {
        return Err(Error::Config(format!(
            "communities = {} exceeds d = {}",
            config.communities, config.d
        )));
    }
    check_prob("p_in", config.p_in)?;
    check_prob("p_out", config.p_out)?;
    let srcs: Vec<usize> = config.merges.iter().map(|m| m.src).collect();
    for (idx, m) in config.merges.iter().enumerate() {
        if m.src >= config.communities || m.dst >= config.communities {
            return Err(Error::Config(format!(
                "merge {idx} references community {} outside 0..{}",
                m.src.max(m.dst),
                config.communities
            )));
        }
        if m.src == m.dst || srcs.iter().filter(|&&s| s == m.src).count() > 1 {
            return Err(Error::Config(format!("merge {idx} reuses a source community")));
        }
        if srcs.contains(&m.dst) {
            return Err(Error::Config(format!(
                "merge {idx} targets community {} which is itself absorbed",
                m.dst
            )));
        }
        if m.start >= m.end || m.end >= config.t {
            return Err(Error::Config(format!(
                "merge {idx} window [{}, {}) does not fit 0..{}",
                m.start, m.end, config.t
            )));
        }
    }

    let initial = equal_split(config.d, config.communities);
    // Per-node transition window [lo, lo + width) in snapshot index units.
    let mut window: Vec<Option<(f64, f64, usize)>> = vec![None; config.d];
    for m in &config.merges {
        let members: Vec<usize> = (0..config.d).filter(|&i| initial[i] == m.src).collect();
        let span = (m.end - m.start) as f64;
        let width = span / members.len() as f64;
        for (j, &node) in members.iter().enumerate() {
            window[node] = Some((m.start as f64 + j as f64 * width, width, m.dst));
        }
    }

    let phase_at = |node: usize, t: usize| -> Phase {
        match window[node] {
            None => Phase::Member(initial[node]),
            Some((lo, width, dst)) => {
                let tf = t as f64;
                if tf < lo {
                    Phase::Member(initial[node])
                } else if tf >= lo + width {
                    Phase::Member(dst)
                } else {
                    Phase::Moving {
                        from: initial[node],
                        to: dst,
                        f: (tf - lo) / width,
                    }
                }
            }
        }
    };

    let mut labels = Vec::with_capacity(config.t);
    let mut mask = Vec::with_capacity(config.t);
    for t in 0..config.t {
        let mut ls = Vec::with_capacity(config.d);
        let mut ms = Vec::with_capacity(config.d);
        for node in 0..config.d {
            match phase_at(node, t) {
                Phase::Member(c) => {
                    ls.push(c);
                    ms.push(true);
                }
                Phase::Moving { to, .. } => {
                    ls.push(to);
                    ms.push(false);
                }
            }
        }
        labels.push(ls);
        mask.push(ms);
    }

    let snapshots: Result<Vec<GraphSnapshot>> = exec::par_map_indices(config.t, |t| {
        let mut rng = edge_rng(config.seed, t);
        let phases: Vec<Phase> = (0..config.d).map(|n| phase_at(n, t)).collect();
        let mut edges = Vec::new();
        for a in 0..config.d {
            for b in (a + 1)..config.d {
                let p = merge_pair_prob(phases[a], phases[b], config.p_in, config.p_out);
                if rng.gen::<f64>() < p {
                    edges.push((a, b, 1.0));
                }
            }
        }
        GraphSnapshot::new(config.d, false, edges)
    })
    .into_iter()
    .collect();
    let truth = PartitionSequence::Hard {
        k_per_step: vec![config.communities; config.t],
        labels,
        mask: Some(mask),
    };
    truth.validate()?;
    Ok((
        SnapshotSequence::new(equally_spaced_times(config.t), snapshots?)?,
        truth,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::kmeans_restarts;
    use crate::linalg;
    use crate::mcm::{build_mcm, Method, MethodSpec};
    use crate::metrics::ami;

    fn labels_of(truth: &PartitionSequence) -> &Vec<Vec<usize>> {
        match truth {
            PartitionSequence::Hard { labels, .. } => labels,
            PartitionSequence::Soft { .. } => panic!("expected hard labels"),
        }
    }

    fn intra_inter_counts(snap: &GraphSnapshot, labels: &[usize]) -> (usize, usize) {
        let mut intra = 0;
        let mut inter = 0;
        for &(a, b, _) in snap.edges() {
            if labels[a] == labels[b] {
                intra += 1;
            } else {
                inter += 1;
            }
        }
        (intra, inter)
    }

    #[test]
    fn simple_cliques_when_deterministic() {
        let mut config = SbmConfig::new(Variant::Simple, 12, 4, 3);
        config.p_in = 1.0;
        let (seq, truth) = gen_simple(&config).unwrap();
        let labels = labels_of(&truth);
        for t in 0..4 {
            assert_eq!(labels[t], equal_split(12, 3));
            let a = seq.snapshot(t).adjacency();
            for i in 0..12 {
                for j in 0..12 {
                    let want = if i != j && labels[t][i] == labels[t][j] { 1.0 } else { 0.0 };
                    assert_eq!(a[(i, j)], want, "entry ({i}, {j}) at step {t}");
                }
            }
        }
    }

    #[test]
    fn simple_remainder_goes_to_first_communities() {
        assert_eq!(equal_split(10, 3), vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(equal_split(5, 5), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn simple_edge_counts_match_binomial_oracle() {
        let mut config = SbmConfig::new(Variant::Simple, 120, 20, 2);
        config.p_in = 0.3;
        config.p_out = 0.2;
        config.seed = 7;
        let (seq, truth) = gen_simple(&config).unwrap();
        let labels = labels_of(&truth);
        // 2 * C(60, 2) = 3540 intra pairs and 60 * 60 = 3600 inter pairs.
        let (intra_pairs, inter_pairs) = (3540.0_f64, 3600.0_f64);
        let intra_sigma = (intra_pairs * 0.3 * 0.7).sqrt();
        let inter_sigma = (inter_pairs * 0.2 * 0.8).sqrt();
        let mut intra_sum = 0.0_f64;
        let mut inter_sum = 0.0_f64;
        for t in 0..20 {
            let (intra, inter) = intra_inter_counts(seq.snapshot(t), &labels[t]);
            intra_sum += intra as f64;
            inter_sum += inter as f64;
            assert!((intra as f64 - intra_pairs * 0.3).abs() < 4.0 * intra_sigma);
            assert!((inter as f64 - inter_pairs * 0.2).abs() < 4.0 * inter_sigma);
        }
        let t = 20.0;
        assert!((intra_sum / t - intra_pairs * 0.3).abs() < 3.0 * intra_sigma / t.sqrt());
        assert!((inter_sum / t - inter_pairs * 0.2).abs() < 3.0 * inter_sigma / t.sqrt());
    }

    #[test]
    fn simple_switches_everyone_immediately_at_rate_one() {
        let mut config = SbmConfig::new(Variant::Simple, 10, 4, 2);
        config.p_switch = 1.0;
        let (_, truth) = gen_simple(&config).unwrap();
        let labels = labels_of(&truth);
        for i in 0..10 {
            assert_ne!(labels[1][i], labels[0][i]);
        }
        assert_eq!(labels[2], labels[1]);
        assert_eq!(labels[3], labels[1]);
    }

    #[test]
    fn once_only_switching_holds_across_variants() {
        let check = |labels: &Vec<Vec<usize>>| {
            for i in 0..labels[0].len() {
                let changes = (1..labels.len())
                    .filter(|&t| labels[t][i] != labels[t - 1][i])
                    .count();
                assert!(changes <= 1, "node {i} changed {changes} times");
            }
        };
        let mut base = SbmConfig::new(Variant::Simple, 40, 10, 4);
        base.p_in = 0.3;
        base.p_out = 0.1;
        base.p_switch = 0.3;
        base.seed = 3;
        check(labels_of(&gen_simple(&base).unwrap().1));

        let mut ssbm = base.clone();
        ssbm.variant = Variant::Ssbm;
        check(labels_of(&gen_ssbm(&ssbm).unwrap().1));

        let mut dsbm = base.clone();
        dsbm.variant = Variant::Dsbm;
        dsbm.f = Some(vec![vec![0.5; 4]; 4]);
        check(labels_of(&gen_dsbm(&dsbm).unwrap().1));

        let mut mv = base.clone();
        mv.variant = Variant::Mvsbm;
        mv.s = 2;
        check(labels_of(&gen_mvsbm(&mv).unwrap().1));

        let mut hs = SbmConfig::new(Variant::Hsbm, 40, 10, 0);
        hs.p_switch = 0.3;
        hs.seed = 3;
        hs.tree = Some(ProbTree::star(0.1, &[0.5, 0.5, 0.5, 0.5]));
        check(labels_of(&gen_hsbm(&hs).unwrap().1));
    }

    #[test]
    fn rejects_bad_configs() {
        let config = SbmConfig::new(Variant::Simple, 4, 3, 5);
        assert!(matches!(gen_simple(&config), Err(Error::Config(_))));

        let mut config = SbmConfig::new(Variant::Simple, 4, 3, 2);
        config.p_in = 1.5;
        assert!(matches!(gen_simple(&config), Err(Error::Config(_))));

        let mut config = SbmConfig::new(Variant::Ssbm, 4, 3, 2);
        config.eta_in = 0.5;
        assert!(matches!(gen_ssbm(&config), Err(Error::Config(_))));

        let config = SbmConfig::new(Variant::Ssbm, 4, 3, 2);
        assert!(matches!(gen_simple(&config), Err(Error::Config(_))));
    }

    #[test]
    fn ssbm_signs_are_pure_without_flips() {
        let mut config = SbmConfig::new(Variant::Ssbm, 30, 3, 3);
        config.p_in = 0.5;
        config.p_out = 0.5;
        config.seed = 1;
        let (seq, truth) = gen_ssbm(&config).unwrap();
        let labels = labels_of(&truth);
        for t in 0..3 {
            for &(a, b, w) in seq.snapshot(t).edges() {
                let same = labels[t][a] == labels[t][b];
                assert_eq!(w, if same { 1.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn ssbm_density_is_uniform_when_rates_match() {
        // Equal placement rates with heavy sign noise: community structure
        // must be invisible in where edges fall (only in their signs).
        let mut config = SbmConfig::new(Variant::Ssbm, 120, 10, 2);
        config.p_in = 0.3;
        config.p_out = 0.3;
        config.eta_in = 0.4;
        config.eta_out = 0.4;
        config.seed = 11;
        let (seq, truth) = gen_ssbm(&config).unwrap();
        let labels = labels_of(&truth);
        let mut intra = 0.0_f64;
        let mut inter = 0.0_f64;
        for t in 0..10 {
            let (a, b) = intra_inter_counts(seq.snapshot(t), &labels[t]);
            intra += a as f64;
            inter += b as f64;
        }
        let intra_mean = intra / (10.0 * 3540.0);
        let inter_mean = inter / (10.0 * 3600.0);
        let sigma = (0.3 * 0.7 / (10.0 * 3540.0_f64)).sqrt();
        assert!((intra_mean - inter_mean).abs() < 3.0 * sigma * 2.0_f64.sqrt());
    }

    #[test]
    fn ssbm_signs_alone_are_recoverable_statically() {
        // With matched rates and no flips the partition only lives in the
        // signs; the signed ratio embedding of one snapshot finds it.
        let mut config = SbmConfig::new(Variant::Ssbm, 60, 1, 2);
        config.p_in = 0.3;
        config.p_out = 0.3;
        config.seed = 5;
        let (seq, truth) = gen_ssbm(&config).unwrap();
        let labels = labels_of(&truth);
        let mcm = build_mcm(seq.snapshot(0), &MethodSpec::new(Method::Srsc)).unwrap();
        let emb = linalg::top_k_left_singular(&mcm.matrix, 2).unwrap();
        let found = kmeans_restarts(&emb, 2, 0, 8, None).unwrap().labels;
        assert!(ami(&found, &labels[0]).unwrap() > 0.99);
    }

    #[test]
    fn mmsbm_with_indicator_rows_matches_block_law() {
        let mut config = SbmConfig::new(Variant::Mmsbm, 120, 10, 2);
        config.p_in = 0.3;
        config.p_out = 0.2;
        config.seed = 13;
        let (seq, truth) = gen_mmsbm(&config).unwrap();
        let hard: Vec<usize> = match &truth {
            PartitionSequence::Soft { memberships, .. } => memberships[0]
                .iter()
                .map(|row| row.iter().position(|&w| w == 1.0).unwrap())
                .collect(),
            _ => panic!("expected soft truth"),
        };
        let mut intra = 0.0_f64;
        let mut inter = 0.0_f64;
        for t in 0..10 {
            let (a, b) = intra_inter_counts(seq.snapshot(t), &hard);
            intra += a as f64;
            inter += b as f64;
        }
        let intra_sigma = (10.0 * 3540.0 * 0.3 * 0.7_f64).sqrt();
        let inter_sigma = (10.0 * 3600.0 * 0.2 * 0.8_f64).sqrt();
        assert!((intra - 10.0 * 3540.0 * 0.3).abs() < 3.0 * intra_sigma);
        assert!((inter - 10.0 * 3600.0 * 0.2).abs() < 3.0 * inter_sigma);
    }

    #[test]
    fn mmsbm_empty_when_block_matrix_is_zero() {
        let mut config = SbmConfig::new(Variant::Mmsbm, 30, 5, 2);
        config.b = Some(vec![vec![0.0; 2]; 2]);
        config.p_switch = 0.5;
        let (seq, _) = gen_mmsbm(&config).unwrap();
        for t in 0..5 {
            assert!(seq.snapshot(t).edges().is_empty());
        }
    }

    #[test]
    fn mmsbm_mean_degrees_match_expectation_formula() {
        // 50 pure / 20 mixed / 50 pure rows; every node's expected degree is
        // sum_j phi_i' B phi_j over the other nodes.
        let d = 120;
        let mut phi: Vec<Vec<f64>> = Vec::new();
        for _ in 0..50 {
            phi.push(vec![1.0, 0.0]);
        }
        for _ in 0..20 {
            phi.push(vec![0.5, 0.5]);
        }
        for _ in 0..50 {
            phi.push(vec![0.0, 1.0]);
        }
        let mut config = SbmConfig::new(Variant::Mmsbm, d, 20, 2);
        config.p_in = 0.3;
        config.p_out = 0.2;
        config.phi = Some(phi.clone());
        config.seed = 17;
        let (seq, _) = gen_mmsbm(&config).unwrap();

        let b = [[0.3, 0.2], [0.2, 0.3]];
        let pair = |i: usize, j: usize| -> f64 {
            (0..2)
                .flat_map(|g| (0..2).map(move |h| (g, h)))
                .map(|(g, h)| phi[i][g] * b[g][h] * phi[j][h])
                .sum()
        };
        for group in [0..50, 50..70, 70..120] {
            let expect: f64 = group
                .clone()
                .map(|i| (0..d).filter(|&j| j != i).map(|j| pair(i, j)).sum::<f64>())
                .sum::<f64>()
                / group.len() as f64;
            let mut total = 0.0;
            for t in 0..20 {
                let a = seq.snapshot(t).adjacency();
                for i in group.clone() {
                    total += a.row(i).sum();
                }
            }
            let mean = total / (20.0 * group.len() as f64);
            // Variance of the group mean degree, roughly binomial.
            let sigma = (expect / (20.0 * group.len() as f64)).sqrt();
            assert!(
                (mean - expect).abs() < 4.0 * sigma,
                "group {group:?}: mean {mean}, expected {expect}"
            );
        }
    }

    #[test]
    fn mmsbm_switching_stays_within_initial_rows() {
        let mut phi: Vec<Vec<f64>> = Vec::new();
        for i in 0..30 {
            phi.push(match i % 3 {
                0 => vec![1.0, 0.0],
                1 => vec![0.0, 1.0],
                _ => vec![0.5, 0.5],
            });
        }
        let mut config = SbmConfig::new(Variant::Mmsbm, 30, 6, 2);
        config.phi = Some(phi.clone());
        config.p_switch = 1.0;
        config.seed = 2;
        let (_, truth) = gen_mmsbm(&config).unwrap();
        let memberships = match &truth {
            PartitionSequence::Soft { memberships, .. } => memberships,
            _ => panic!("expected soft truth"),
        };
        let unique = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        for step in memberships {
            for row in step {
                assert!(unique.contains(row));
            }
        }
        // Not once-only: with rate one, some row changes again after step 1.
        assert!((0..30).any(|i| memberships[1][i] != memberships[2][i]));
    }

    #[test]
    fn dsbm_even_orientation_is_symmetric_on_average() {
        let mut config = SbmConfig::new(Variant::Dsbm, 80, 10, 2);
        config.p_in = 0.3;
        config.p_out = 0.2;
        config.f = Some(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        config.seed = 23;
        let (seq, truth) = gen_dsbm(&config).unwrap();
        let labels = labels_of(&truth);
        let mut forward = 0.0_f64;
        let mut placed = 0.0_f64;
        for t in 0..10 {
            assert!(seq.snapshot(t).directed());
            for &(a, b, _) in seq.snapshot(t).edges() {
                assert_ne!(labels[t][a], usize::MAX);
                placed += 1.0;
                if a < b {
                    forward += 1.0;
                }
            }
        }
        let sigma = 0.5 / placed.sqrt();
        assert!((forward / placed - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn dsbm_orientation_frequencies_match_f() {
        let f = vec![
            vec![0.5, 2.0 / 3.0, 1.0 / 3.0],
            vec![1.0 / 3.0, 0.5, 2.0 / 3.0],
            vec![2.0 / 3.0, 1.0 / 3.0, 0.5],
        ];
        let mut config = SbmConfig::new(Variant::Dsbm, 90, 10, 3);
        config.p_in = 0.2;
        config.p_out = 0.2;
        config.f = Some(f.clone());
        config.seed = 29;
        let (seq, truth) = gen_dsbm(&config).unwrap();
        let labels = labels_of(&truth);
        let mut wins = vec![vec![0.0; 3]; 3];
        let mut totals = vec![vec![0.0; 3]; 3];
        for t in 0..10 {
            for &(a, b, _) in seq.snapshot(t).edges() {
                let (la, lb) = (labels[t][a], labels[t][b]);
                wins[la][lb] += 1.0;
                totals[la][lb] += 1.0;
                totals[lb][la] += 1.0;
            }
        }
        for l in 0..3 {
            for j in 0..3 {
                if l == j {
                    continue;
                }
                let n = totals[l][j];
                let sigma = (f[l][j] * (1.0 - f[l][j]) / n).sqrt();
                assert!(
                    (wins[l][j] / n - f[l][j]).abs() < 4.0 * sigma,
                    "pair ({l}, {j}): {} of {n}",
                    wins[l][j]
                );
            }
        }
    }

    #[test]
    fn dsbm_rejects_inconsistent_orientation_matrix() {
        let mut config = SbmConfig::new(Variant::Dsbm, 10, 2, 2);
        config.f = Some(vec![vec![0.5, 0.4], vec![0.4, 0.5]]);
        assert!(matches!(gen_dsbm(&config), Err(Error::Config(_))));
    }

    #[test]
    fn scbm_single_block_is_plain_random_directed() {
        let mut config = SbmConfig::new(Variant::Scbm, 40, 5, 0);
        config.b = Some(vec![vec![0.37]]);
        config.seed = 31;
        let (seq, send, recv) = gen_scbm(&config).unwrap();
        assert!(labels_of(&send).iter().all(|ls| ls.iter().all(|&l| l == 0)));
        assert!(labels_of(&recv).iter().all(|ls| ls.iter().all(|&l| l == 0)));
        let mut count = 0.0_f64;
        for t in 0..5 {
            count += seq.snapshot(t).edges().len() as f64;
        }
        let pairs = 5.0 * 40.0 * 39.0_f64;
        let sigma = (pairs * 0.37 * 0.63).sqrt();
        assert!((count - pairs * 0.37).abs() < 4.0 * sigma);
    }

    #[test]
    fn scbm_swaps_preserve_community_sizes() {
        let mut config = SbmConfig::new(Variant::Scbm, 30, 20, 0);
        config.b = Some(vec![vec![0.2, 0.1], vec![0.1, 0.2], vec![0.3, 0.1]]);
        config.p_switch_send = Some(0.5);
        config.p_switch_receive = Some(0.3);
        config.seed = 37;
        let (_, send, recv) = gen_scbm(&config).unwrap();
        for (truth, k) in [(&send, 3), (&recv, 2)] {
            let labels = labels_of(truth);
            let sizes0: Vec<usize> =
                (0..k).map(|c| labels[0].iter().filter(|&&l| l == c).count()).collect();
            for ls in labels {
                let sizes: Vec<usize> =
                    (0..k).map(|c| ls.iter().filter(|&&l| l == c).count()).collect();
                assert_eq!(sizes, sizes0);
            }
        }
        // The send labels do drift under swapping.
        let labels = labels_of(&send);
        assert_ne!(labels[0], labels[19]);
    }

    #[test]
    fn scbm_bipartite_edges_cross_the_split() {
        let mut config = SbmConfig::new(Variant::Scbm, 30, 3, 0);
        config.bipartite = Some((18, 12));
        config.b = Some(vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        config.seed = 41;
        let (seq, send, recv) = gen_scbm(&config).unwrap();
        assert_eq!(labels_of(&send)[0].len(), 18);
        assert_eq!(labels_of(&recv)[0].len(), 12);
        for t in 0..3 {
            let snap = seq.snapshot(t);
            assert_eq!(snap.bipartite_split(), Some((18, 12)));
            for &(a, b, _) in snap.edges() {
                assert!(a < 18 && b >= 18);
            }
        }
    }

    #[test]
    fn scbm_both_partitions_recoverable_from_one_snapshot() {
        // The 0.5/0.3 block structure at a size where one snapshot carries
        // the signal above the random-matrix noise edge.
        let mut config = SbmConfig::new(Variant::Scbm, 300, 1, 0);
        let b = vec![
            vec![0.5, 0.3, 0.3],
            vec![0.3, 0.5, 0.3],
            vec![0.3, 0.3, 0.5],
        ];
        config.b = Some(b);
        config.seed = 43;
        let (seq, send, recv) = gen_scbm(&config).unwrap();
        for (method, truth) in [(Method::SccSend, &send), (Method::SccReceive, &recv)] {
            let mcm = build_mcm(seq.snapshot(0), &MethodSpec::new(method)).unwrap();
            let emb = linalg::top_k_left_singular(&mcm.matrix, 3).unwrap();
            let found = kmeans_restarts(&emb, 3, 0, 8, None).unwrap().labels;
            let score = ami(&found, &labels_of(truth)[0]).unwrap();
            assert!(score >= 0.8, "{method:?} recovered AMI = {score}");
        }
    }

    #[test]
    fn hsbm_star_tree_reduces_to_plain_blocks() {
        let mut config = SbmConfig::new(Variant::Hsbm, 90, 8, 0);
        config.tree = Some(ProbTree::star(0.1, &[0.5, 0.5, 0.5]));
        config.seed = 47;
        let (seq, truth) = gen_hsbm(&config).unwrap();
        let labels = labels_of(&truth);
        assert_eq!(truth.k_per_step(), vec![3; 8]);
        let mut intra = 0.0_f64;
        let mut inter = 0.0_f64;
        for t in 0..8 {
            let (a, b) = intra_inter_counts(seq.snapshot(t), &labels[t]);
            intra += a as f64;
            inter += b as f64;
        }
        let intra_pairs = 8.0 * 3.0 * (30.0 * 29.0 / 2.0);
        let inter_pairs = 8.0 * 3.0 * 900.0;
        assert!((intra - intra_pairs * 0.5).abs() < 4.0 * (intra_pairs * 0.25).sqrt());
        assert!((inter - inter_pairs * 0.1).abs() < 4.0 * (inter_pairs * 0.09).sqrt());
    }

    #[test]
    fn hsbm_nested_tree_orders_densities() {
        // Root 0, internal 1 and 2, leaves 3..7. Within-parent pairs are
        // denser than cross-parent pairs.
        let tree = ProbTree {
            parent: vec![None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)],
            prob: vec![0.05, 0.25, 0.25, 0.7, 0.7, 0.7, 0.7],
        };
        let mut config = SbmConfig::new(Variant::Hsbm, 80, 10, 0);
        config.tree = Some(tree);
        config.seed = 53;
        let (seq, truth) = gen_hsbm(&config).unwrap();
        let labels = labels_of(&truth);
        // Leaf indices 0..4 in leaf order (tree nodes 3..7); 0,1 share a
        // parent and 2,3 share a parent.
        let mut same_parent = (0.0, 0.0);
        let mut cross_parent = (0.0, 0.0);
        for t in 0..10 {
            let a = seq.snapshot(t).adjacency();
            for i in 0..80 {
                for j in (i + 1)..80 {
                    let (li, lj) = (labels[t][i], labels[t][j]);
                    if li == lj {
                        continue;
                    }
                    let bucket = if li / 2 == lj / 2 { &mut same_parent } else { &mut cross_parent };
                    bucket.0 += a[(i, j)];
                    bucket.1 += 1.0;
                }
            }
        }
        let same_rate = same_parent.0 / same_parent.1;
        let cross_rate = cross_parent.0 / cross_parent.1;
        assert!((same_rate - 0.25).abs() < 0.05, "same-parent rate {same_rate}");
        assert!((cross_rate - 0.05).abs() < 0.02, "cross-parent rate {cross_rate}");
    }

    #[test]
    fn hsbm_switching_moves_to_the_sibling_leaf() {
        let tree = ProbTree {
            parent: vec![None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)],
            prob: vec![0.1, 0.2, 0.2, 0.6, 0.6, 0.6, 0.6],
        };
        let mut config = SbmConfig::new(Variant::Hsbm, 20, 4, 0);
        config.tree = Some(tree);
        config.p_switch = 1.0;
        let (_, truth) = gen_hsbm(&config).unwrap();
        let labels = labels_of(&truth);
        let sibling = [1, 0, 3, 2];
        for i in 0..20 {
            assert_eq!(labels[1][i], sibling[labels[0][i]]);
        }
        assert_eq!(labels[2], labels[1]);
    }

    #[test]
    fn hsbm_rejects_malformed_trees() {
        let mut config = SbmConfig::new(Variant::Hsbm, 10, 2, 0);
        config.tree = Some(ProbTree {
            parent: vec![None, None, Some(0)],
            prob: vec![0.1, 0.2, 0.3],
        });
        assert!(matches!(gen_hsbm(&config), Err(Error::Config(_))));

        config.tree = Some(ProbTree {
            parent: vec![Some(1), Some(0)],
            prob: vec![0.1, 0.2],
        });
        assert!(matches!(gen_hsbm(&config), Err(Error::Config(_))));

        config.tree = Some(ProbTree::star(1.5, &[0.5]));
        assert!(matches!(gen_hsbm(&config), Err(Error::Config(_))));

        config.tree = Some(ProbTree::star(0.1, &[0.5, 0.5]));
        config.k = 3;
        assert!(matches!(gen_hsbm(&config), Err(Error::Config(_))));
    }

    #[test]
    fn mvsbm_single_view_equals_simple_draws() {
        let mut config = SbmConfig::new(Variant::Mvsbm, 50, 6, 2);
        config.p_in = 0.4;
        config.p_out = 0.1;
        config.p_switch = 0.2;
        config.seed = 59;
        let (mv_seq, mv_truth) = gen_mvsbm(&config).unwrap();
        let mut simple = config.clone();
        simple.variant = Variant::Simple;
        let (s_seq, s_truth) = gen_simple(&simple).unwrap();
        assert_eq!(mv_truth, s_truth);
        for t in 0..6 {
            assert_eq!(mv_seq.snapshot(t).edges(), s_seq.snapshot(t).edges());
        }
    }

    #[test]
    fn mvsbm_views_are_independent_given_labels() {
        let mut config = SbmConfig::new(Variant::Mvsbm, 60, 20, 2);
        config.p_in = 0.3;
        config.p_out = 0.3;
        config.s = 2;
        config.seed = 61;
        let (seq, _) = gen_mvsbm(&config).unwrap();
        let mut both = 0.0_f64;
        let mut pairs = 0.0_f64;
        for t in 0..20 {
            let a0 = seq.snapshot(t).adjacency_view(0);
            let a1 = seq.snapshot(t).adjacency_view(1);
            for i in 0..60 {
                for j in (i + 1)..60 {
                    pairs += 1.0;
                    both += a0[(i, j)] * a1[(i, j)];
                }
            }
        }
        let rate = both / pairs;
        let sigma = (0.09 * (1.0 - 0.09) / pairs).sqrt();
        assert!((rate - 0.09).abs() < 4.0 * sigma, "co-occurrence rate {rate}");
    }

    #[test]
    fn generate_is_deterministic_per_seed() {
        let mut configs: Vec<SbmConfig> = Vec::new();
        let mut simple = SbmConfig::new(Variant::Simple, 25, 4, 2);
        simple.p_in = 0.4;
        simple.p_out = 0.1;
        simple.p_switch = 0.2;
        configs.push(simple.clone());
        let mut ssbm = simple.clone();
        ssbm.variant = Variant::Ssbm;
        ssbm.eta_in = 0.2;
        ssbm.eta_out = 0.2;
        configs.push(ssbm);
        let mut mm = simple.clone();
        mm.variant = Variant::Mmsbm;
        configs.push(mm);
        let mut ds = simple.clone();
        ds.variant = Variant::Dsbm;
        ds.f = Some(vec![vec![0.5, 0.7], vec![0.3, 0.5]]);
        configs.push(ds);
        let mut sc = simple.clone();
        sc.variant = Variant::Scbm;
        sc.b = Some(vec![vec![0.4, 0.1], vec![0.1, 0.4]]);
        configs.push(sc);
        let mut hs = simple.clone();
        hs.variant = Variant::Hsbm;
        hs.k = 0;
        hs.tree = Some(ProbTree::star(0.1, &[0.5, 0.5]));
        configs.push(hs);
        let mut mv = simple.clone();
        mv.variant = Variant::Mvsbm;
        mv.s = 2;
        configs.push(mv);

        for config in &configs {
            let mut config = config.clone();
            config.seed = 71;
            let a = generate(&config).unwrap();
            let b = generate(&config).unwrap();
            assert_eq!(
                a.sequence.to_json_string().unwrap(),
                b.sequence.to_json_string().unwrap(),
                "{:?} not reproducible",
                config.variant
            );
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.truth_receive, b.truth_receive);
            config.seed = 72;
            let c = generate(&config).unwrap();
            assert_ne!(
                a.sequence.to_json_string().unwrap(),
                c.sequence.to_json_string().unwrap(),
                "{:?} ignores the seed",
                config.variant
            );
        }
    }

    #[test]
    fn merge_benchmark_shrinks_community_count() {
        let config = MergeConfig {
            d: 120,
            t: 211,
            communities: 8,
            p_in: 0.8,
            p_out: 0.02,
            merges: vec![
                MergeSpec { src: 1, dst: 0, start: 40, end: 110 },
                MergeSpec { src: 3, dst: 2, start: 100, end: 170 },
            ],
            seed: 73,
        };
        let (seq, truth) = gen_merge_benchmark(&config).unwrap();
        assert_eq!(seq.len(), 211);
        let (labels, mask) = match &truth {
            PartitionSequence::Hard { labels, mask, .. } => (labels, mask.as_ref().unwrap()),
            _ => panic!("expected hard truth"),
        };
        let distinct = |t: usize| {
            let mut seen: Vec<usize> = labels[t]
                .iter()
                .zip(&mask[t])
                .filter(|&(_, &m)| m)
                .map(|(&l, _)| l)
                .collect();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        for t in 0..40 {
            assert!(mask[t].iter().all(|&m| m), "no transit before the merges");
            assert_eq!(distinct(t), 8);
        }
        for t in 171..211 {
            assert!(mask[t].iter().all(|&m| m));
            assert_eq!(distinct(t), 6);
        }
        // Sources are fully absorbed.
        assert!(labels[210].iter().all(|&l| l != 1 && l != 3));
        assert_eq!(labels[210].iter().filter(|&&l| l == 0).count(), 30);
        assert_eq!(labels[210].iter().filter(|&&l| l == 2).count(), 30);
        // Mid-merge snapshots mask only the node(s) currently in transit.
        for t in 41..110 {
            let unlabeled = mask[t].iter().filter(|&&m| !m).count();
            assert!(unlabeled <= 2, "step {t} masks {unlabeled} nodes");
        }
        // A node never bounces: src until its window, then dst forever.
        for i in 0..120 {
            let path: Vec<usize> = (0..211).map(|t| labels[t][i]).collect();
            let changes = (1..211).filter(|&t| path[t] != path[t - 1]).count();
            assert!(changes <= 1);
        }
    }

    #[test]
    fn merge_benchmark_is_deterministic_and_validated() {
        let config = MergeConfig {
            d: 24,
            t: 30,
            communities: 4,
            p_in: 0.7,
            p_out: 0.05,
            merges: vec![MergeSpec { src: 2, dst: 1, start: 5, end: 20 }],
            seed: 79,
        };
        let (a, ta) = gen_merge_benchmark(&config).unwrap();
        let (b, tb) = gen_merge_benchmark(&config).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
        assert_eq!(ta, tb);

        let mut bad = config.clone();
        bad.merges[0].end = 30;
        assert!(matches!(gen_merge_benchmark(&bad), Err(Error::Config(_))));
        let mut bad = config.clone();
        bad.merges[0].dst = 2;
        assert!(matches!(gen_merge_benchmark(&bad), Err(Error::Config(_))));
        let mut bad = config.clone();
        bad.merges.push(MergeSpec { src: 1, dst: 3, start: 2, end: 10 });
        assert!(matches!(gen_merge_benchmark(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn tree_lca_and_leaves_are_consistent() {
        let tree = ProbTree {
            parent: vec![None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)],
            prob: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        };
        tree.validate().unwrap();
        assert_eq!(tree.leaves(), vec![3, 4, 5, 6]);
        assert_eq!(tree.lca(3, 4), 1);
        assert_eq!(tree.lca(5, 6), 2);
        assert_eq!(tree.lca(3, 6), 0);
        assert_eq!(tree.lca(4, 4), 4);
        assert_eq!(tree.lca(0, 4), 0);
    }
}
