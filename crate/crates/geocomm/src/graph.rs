//! Temporal graph snapshots, snapshot sequences and partition sequences,
//! with their JSON on-disk format.
//!
//! Nodes are positional: a snapshot on `d` nodes uses ids `0..d` and an
//! optional `name_table` carries external names. Weights are `f64`; signed
//! networks are ordinary weighted networks with negative weights. Edges are
//! stored once per unordered pair for undirected snapshots.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One edge as `(src, dst, weight)`. Serialized as a `[src, dst, weight]`
/// triple.
pub type Edge = (usize, usize, f64);

/// A single network snapshot. Multiview snapshots carry one edge list per
/// view; all views share the node set and directedness.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSnapshot {
    d: usize,
    directed: bool,
    views: Vec<Vec<Edge>>,
    bipartite_split: Option<(usize, usize)>,
}

impl GraphSnapshot {
    /// Single-view snapshot.
    pub fn new(d: usize, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        Self::with_views(d, directed, vec![edges], None)
    }

    /// Multiview snapshot with `views.len() >= 1` edge sets.
    pub fn new_multiview(d: usize, directed: bool, views: Vec<Vec<Edge>>) -> Result<Self> {
        Self::with_views(d, directed, views, None)
    }

    /// Single-view bipartite snapshot; nodes `0..n1` form one side and
    /// `n1..n1+n2` the other, and every edge must cross the split.
    pub fn new_bipartite(n1: usize, n2: usize, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        Self::with_views(n1 + n2, directed, vec![edges], Some((n1, n2)))
    }

    fn with_views(
        d: usize,
        directed: bool,
        views: Vec<Vec<Edge>>,
        bipartite_split: Option<(usize, usize)>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidGraph("snapshot needs at least one view".into()));
        }
        if let Some((n1, n2)) = bipartite_split {
            if n1 + n2 != d || n1 == 0 || n2 == 0 {
                return Err(Error::InvalidGraph(format!(
                    "bipartite split {n1}+{n2} does not partition {d} nodes"
                )));
            }
        }
        let snap = Self {
            d,
            directed,
            views,
            bipartite_split,
        };
        snap.validate()?;
        Ok(snap)
    }

    fn validate(&self) -> Result<()> {
        for (v, edges) in self.views.iter().enumerate() {
            let mut seen = HashSet::with_capacity(edges.len());
            for &(src, dst, w) in edges {
                if src >= self.d || dst >= self.d {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({src}, {dst}) out of range for {} nodes (view {v})",
                        self.d
                    )));
                }
                if src == dst {
                    return Err(Error::InvalidGraph(format!(
                        "self-loop on node {src} (view {v})"
                    )));
                }
                if !w.is_finite() || w == 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({src}, {dst}) has invalid weight {w} (view {v})"
                    )));
                }
                let key = if self.directed {
                    (src, dst)
                } else {
                    (src.min(dst), src.max(dst))
                };
                if !seen.insert(key) {
                    return Err(Error::InvalidGraph(format!(
                        "duplicate edge between {src} and {dst} (view {v})"
                    )));
                }
                if let Some((n1, _)) = self.bipartite_split {
                    if (src < n1) == (dst < n1) {
                        return Err(Error::InvalidGraph(format!(
                            "edge ({src}, {dst}) does not cross the bipartite split"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn bipartite_split(&self) -> Option<(usize, usize)> {
        self.bipartite_split
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    /// Edge list of the primary (first) view.
    pub fn edges(&self) -> &[Edge] {
        &self.views[0]
    }

    pub fn view(&self, v: usize) -> &[Edge] {
        &self.views[v]
    }

    /// True when any view carries a negative weight.
    pub fn is_signed(&self) -> bool {
        self.views
            .iter()
            .any(|es| es.iter().any(|&(_, _, w)| w < 0.0))
    }

    /// Dense adjacency of one view. Undirected snapshots produce a symmetric
    /// matrix with each stored edge mirrored.
    pub fn adjacency_view(&self, v: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.d, self.d);
        for &(src, dst, w) in &self.views[v] {
            a[(src, dst)] = w;
            if !self.directed {
                a[(dst, src)] = w;
            }
        }
        a
    }

    /// Dense adjacency of the primary view.
    pub fn adjacency(&self) -> DMatrix<f64> {
        self.adjacency_view(0)
    }

    /// Connects the primary view's components (over all views' edges, using
    /// absolute weights) by adding weight-1 bridge edges from the
    /// lowest-index node of every smaller component to the lowest-index node
    /// of the largest component. Returns the added edges. Directed snapshots
    /// are bridged by a single directed edge per component.
    pub fn ensure_connected(&mut self) -> Vec<Edge> {
        let comps = self.components();
        if comps.len() <= 1 {
            return Vec::new();
        }
        // Largest component, ties broken toward the one holding the smallest
        // node index (components are discovered in index order).
        let target_comp = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap();
        let anchor = comps[target_comp][0];
        let mut added = Vec::new();
        for (c, comp) in comps.iter().enumerate() {
            if c == target_comp {
                continue;
            }
            added.push((comp[0], anchor, 1.0));
        }
        for &e in &added {
            for view in &mut self.views {
                view.push(e);
            }
        }
        added
    }

    /// Connected components (weak connectivity, all views pooled), each
    /// sorted ascending, listed by smallest member.
    fn components(&self) -> Vec<Vec<usize>> {
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); self.d];
        for view in &self.views {
            for &(src, dst, _) in view {
                nbrs[src].push(dst);
                nbrs[dst].push(src);
            }
        }
        let mut comp = vec![usize::MAX; self.d];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for start in 0..self.d {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            comp[start] = id;
            while let Some(u) = stack.pop() {
                members.push(u);
                for &v in &nbrs[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }
}

/// Row sums of a dense adjacency (out-degrees for directed graphs).
pub fn out_degrees(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.nrows(), |i, _| a.row(i).sum())
}

/// Column sums of a dense adjacency (in-degrees for directed graphs).
pub fn in_degrees(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.ncols(), |j, _| a.column(j).sum())
}

/// Row sums of absolute weights.
pub fn abs_degrees(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.nrows(), |i, _| a.row(i).iter().map(|w| w.abs()).sum())
}

/// Splits a signed adjacency into `(positive part, negative part)`, both
/// with nonnegative entries.
pub fn signed_split(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let pos = a.map(|w| w.max(0.0));
    let neg = a.map(|w| (-w).max(0.0));
    (pos, neg)
}

/// A time-ordered sequence of snapshots over a fixed node set.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSequence {
    times: Vec<f64>,
    snapshots: Vec<GraphSnapshot>,
    name_table: Option<Vec<String>>,
}

impl SnapshotSequence {
    pub fn new(times: Vec<f64>, snapshots: Vec<GraphSnapshot>) -> Result<Self> {
        Self::with_names(times, snapshots, None)
    }

    pub fn with_names(
        times: Vec<f64>,
        snapshots: Vec<GraphSnapshot>,
        name_table: Option<Vec<String>>,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidGraph("sequence needs at least one snapshot".into()));
        }
        if times.len() != snapshots.len() {
            return Err(Error::InvalidGraph(format!(
                "{} times for {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGraph(
                "snapshot times must be finite and strictly increasing".into(),
            ));
        }
        let first = &snapshots[0];
        for (i, s) in snapshots.iter().enumerate() {
            if s.d() != first.d()
                || s.directed() != first.directed()
                || s.num_views() != first.num_views()
                || s.bipartite_split() != first.bipartite_split()
            {
                return Err(Error::InvalidGraph(format!(
                    "snapshot {i} disagrees with snapshot 0 on shape or directedness"
                )));
            }
        }
        if let Some(names) = &name_table {
            if names.len() != first.d() {
                return Err(Error::InvalidGraph(format!(
                    "name table has {} entries for {} nodes",
                    names.len(),
                    first.d()
                )));
            }
        }
        Ok(Self {
            times,
            snapshots,
            name_table,
        })
    }

    /// Sequence with snapshots placed at equally spaced times on [0, 1].
    pub fn equally_spaced(snapshots: Vec<GraphSnapshot>) -> Result<Self> {
        let times = equally_spaced_times(snapshots.len());
        Self::new(times, snapshots)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn d(&self) -> usize {
        self.snapshots[0].d()
    }

    pub fn directed(&self) -> bool {
        self.snapshots[0].directed()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, i: usize) -> &GraphSnapshot {
        &self.snapshots[i]
    }

    pub fn name_table(&self) -> Option<&[String]> {
        self.name_table.as_deref()
    }

    /// Times affinely rescaled to span [0, 1] (a single snapshot maps to
    /// `[0.0]`). Model fitting operates on this scale.
    pub fn normalized_times(&self) -> Vec<f64> {
        if self.times.len() == 1 {
            return vec![0.0];
        }
        let t0 = self.times[0];
        let span = self.times[self.times.len() - 1] - t0;
        self.times.iter().map(|t| (t - t0) / span).collect()
    }

    /// Bridges every snapshot's components in place; returns the edges added
    /// per snapshot.
    pub fn ensure_connected(&mut self) -> Vec<Vec<Edge>> {
        self.snapshots
            .iter_mut()
            .map(|s| s.ensure_connected())
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SequenceFile = serde_json::from_str(text)?;
        file.into_sequence()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = SequenceFile::from_sequence(self);
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// `T` equally spaced times on [0, 1]; a single snapshot sits at 0.
pub fn equally_spaced_times(t: usize) -> Vec<f64> {
    if t == 1 {
        return vec![0.0];
    }
    (0..t).map(|i| i as f64 / (t as f64 - 1.0)).collect()
}

const SEQUENCE_SCHEMA: &str = "snapshot-sequence/1";

#[derive(Serialize, Deserialize)]
struct SnapshotDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<Edge>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    views: Option<Vec<Vec<Edge>>>,
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    schema: String,
    d: usize,
    directed: bool,
    times: Vec<f64>,
    snapshots: Vec<SnapshotDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bipartite_split: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name_table: Option<Vec<String>>,
}

impl SequenceFile {
    fn from_sequence(seq: &SnapshotSequence) -> Self {
        let snapshots = seq
            .snapshots()
            .iter()
            .map(|s| {
                if s.num_views() == 1 {
                    SnapshotDto {
                        edges: Some(s.edges().to_vec()),
                        views: None,
                    }
                } else {
                    SnapshotDto {
                        edges: None,
                        views: Some((0..s.num_views()).map(|v| s.view(v).to_vec()).collect()),
                    }
                }
            })
            .collect();
        SequenceFile {
            schema: SEQUENCE_SCHEMA.to_string(),
            d: seq.d(),
            directed: seq.directed(),
            times: seq.times().to_vec(),
            snapshots,
            bipartite_split: seq.snapshots()[0].bipartite_split(),
            name_table: seq.name_table().map(|n| n.to_vec()),
        }
    }

    fn into_sequence(self) -> Result<SnapshotSequence> {
        if self.schema != SEQUENCE_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {:?}, expected {SEQUENCE_SCHEMA:?}",
                self.schema
            )));
        }
        let mut snapshots = Vec::with_capacity(self.snapshots.len());
        for (i, dto) in self.snapshots.into_iter().enumerate() {
            let views = match (dto.edges, dto.views) {
                (Some(edges), None) => vec![edges],
                (None, Some(views)) => views,
                _ => {
                    return Err(Error::Parse(format!(
                        "snapshot {i} must have exactly one of `edges` or `views`"
                    )))
                }
            };
            snapshots.push(GraphSnapshot::with_views(
                self.d,
                self.directed,
                views,
                self.bipartite_split,
            )?);
        }
        SnapshotSequence::with_names(self.times, snapshots, self.name_table)
    }
}

/// Per-snapshot community structure: hard labels or soft memberships.
///
/// For hard partitions an optional `mask` marks which nodes carry a defined
/// label (`true` entries participate in scoring); benchmarks use it for
/// nodes in transition between communities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSequence {
    Hard {
        k_per_step: Vec<usize>,
        labels: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<Vec<Vec<bool>>>,
    },
    Soft {
        k_per_step: Vec<usize>,
        /// `memberships[t][node]` is a row of `k_per_step[t]` weights
        /// summing to one.
        memberships: Vec<Vec<Vec<f64>>>,
    },
}

const PARTITION_SCHEMA: &str = "partition-sequence/1";

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    schema: String,
    #[serde(flatten)]
    partition: PartitionSequence,
}

impl PartitionSequence {
    pub fn hard(labels: Vec<Vec<usize>>) -> Self {
        let k_per_step = labels
            .iter()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
            .collect();
        PartitionSequence::Hard {
            k_per_step,
            labels,
            mask: None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PartitionSequence::Hard { labels, .. } => labels.len(),
            PartitionSequence::Soft { memberships, .. } => memberships.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k_per_step(&self) -> &[usize] {
        match self {
            PartitionSequence::Hard { k_per_step, .. } => k_per_step,
            PartitionSequence::Soft { k_per_step, .. } => k_per_step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PartitionSequence::Hard {
                k_per_step,
                labels,
                mask,
            } => {
                if k_per_step.len() != labels.len() {
                    return Err(Error::InvalidGraph(
                        "k_per_step and labels lengths differ".into(),
                    ));
                }
                for (t, ls) in labels.iter().enumerate() {
                    if let Some(&bad) = ls.iter().find(|&&l| l >= k_per_step[t]) {
                        return Err(Error::InvalidGraph(format!(
                            "label {bad} out of range at step {t} (k = {})",
                            k_per_step[t]
                        )));
                    }
                }
                if let Some(mask) = mask {
                    if mask.len() != labels.len()
                        || mask.iter().zip(labels).any(|(m, l)| m.len() != l.len())
                    {
                        return Err(Error::InvalidGraph("mask shape mismatch".into()));
                    }
                }
            }
            PartitionSequence::Soft {
                k_per_step,
                memberships,
            } => {
                if k_per_step.len() != memberships.len() {
                    return Err(Error::InvalidGraph(
                        "k_per_step and memberships lengths differ".into(),
                    ));
                }
                for (t, rows) in memberships.iter().enumerate() {
                    for (node, row) in rows.iter().enumerate() {
                        if row.len() != k_per_step[t] {
                            return Err(Error::InvalidGraph(format!(
                                "membership row for node {node} at step {t} has wrong width"
                            )));
                        }
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|&w| !(0.0..=1.0 + 1e-9).contains(&w))
                            || (sum - 1.0).abs() > 1e-6
                        {
                            return Err(Error::InvalidGraph(format!(
                                "membership row for node {node} at step {t} is not a distribution"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PartitionFile = serde_json::from_str(&text)?;
        if file.schema != PARTITION_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {:?}, expected {PARTITION_SCHEMA:?}",
                file.schema
            )));
        }
        file.partition.validate()?;
        Ok(file.partition)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = PartitionFile {
            schema: PARTITION_SCHEMA.to_string(),
            partition: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}
