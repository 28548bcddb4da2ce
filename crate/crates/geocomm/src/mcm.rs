//! Modeled clustering matrix (MCM) builders.
//!
//! Each spectral method in the catalog is reduced to a single matrix whose
//! top-k left singular subspace spans the method's node embeddings. Both the
//! static baselines and the geodesic tracker consume snapshots through these
//! builders, so every method-specific convention (degree normalization,
//! shifts, symmetrization) lives here and nowhere else.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{self, GraphSnapshot, SnapshotSequence};
use crate::linalg;

/// Spectral method whose embedding the MCM models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Raw adjacency treated as the clustering matrix (leading eigenvectors).
    Generic,
    /// Unnormalized spectral clustering via the shifted Laplacian `nI - L`.
    Usc,
    /// Normalized spectral clustering via `Q^sym = D^{-1/2}(D + A)D^{-1/2}`.
    Nsc,
    /// Spectral modularity maximization (leading eigenvectors of `B`).
    Smm,
    /// Bethe Hessian clustering (trailing eigenvectors of `H(r)`).
    Bhc,
    /// Fuzzy variant of NSC: same matrix, c-means on the embedding.
    Csc,
    /// Signed ratio Laplacian `|D| - A` (trailing eigenvectors).
    Srsc,
    /// Geometric mean of the two signed-part Laplacians.
    Gmsc,
    /// Signed power mean Laplacian `M_p(L^sym+, Q^sym-)`.
    Spmsc,
    /// Bibliographic symmetrization `A Aᵀ + Aᵀ A` for directed graphs.
    Bsc,
    /// Degree-discounted symmetrization for directed graphs.
    Ddsc,
    /// Symmetrized random-walk Laplacian for directed graphs.
    Rwsc,
    /// Overlapping-community adjacency embedding `X = V_k Λ_k^{1/2}`.
    Osc,
    /// Power mean of per-view normalized Laplacians.
    Pmlsc,
    /// Co-clustering MCM embedding senders (rows of the directed adjacency).
    SccSend,
    /// Co-clustering MCM embedding receivers (columns).
    SccReceive,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Generic => "generic",
            Method::Usc => "usc",
            Method::Nsc => "nsc",
            Method::Smm => "smm",
            Method::Bhc => "bhc",
            Method::Csc => "csc",
            Method::Srsc => "srsc",
            Method::Gmsc => "gmsc",
            Method::Spmsc => "spmsc",
            Method::Bsc => "bsc",
            Method::Ddsc => "ddsc",
            Method::Rwsc => "rwsc",
            Method::Osc => "osc",
            Method::Pmlsc => "pmlsc",
            Method::SccSend => "scc_send",
            Method::SccReceive => "scc_receive",
        }
    }

    /// Methods whose downstream clustering produces soft memberships.
    pub fn is_soft(&self) -> bool {
        matches!(self, Method::Osc | Method::Csc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Method selection plus the knobs shared across builders.
///
/// All knobs are optional; `MethodSpec::new(method)` gives the documented
/// defaults. `epsilon` controls the spectral shift used by the power-mean
/// family: `None` clamps near-zero eigenvalues minimally, `Some(e)` with
/// `e > 0` shifts explicitly, and `Some(0.0)` demands strictly definite
/// inputs (erroring otherwise). For `Gmsc` the shift is `epsilon * tr(L+)/d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    /// Power-mean exponent. Defaults: -2 for `Spmsc`, 10 for `Pmlsc`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Override for the USC shift `n` (default `2 * max degree`).
    #[serde(default)]
    pub usc_shift: Option<f64>,
    /// Override for the Bethe Hessian parameter `r` (default `sqrt(mean degree)`).
    #[serde(default)]
    pub bhc_r: Option<f64>,
    /// Degree regularization `D <- D + tau I` for NSC/CSC/DDSC/RWSC/PMLSC.
    #[serde(default)]
    pub regularize: bool,
    /// Regularization amount; `None` means the mean degree of the relevant side.
    #[serde(default)]
    pub tau: Option<f64>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            p: None,
            epsilon: None,
            usc_shift: None,
            bhc_r: None,
            regularize: false,
            tau: None,
        }
    }

    pub fn with_p(method: Method, p: f64) -> Self {
        let mut spec = MethodSpec::new(method);
        spec.p = Some(p);
        spec
    }

    /// Resolved power-mean exponent.
    pub fn power(&self) -> f64 {
        match self.method {
            Method::Spmsc => self.p.unwrap_or(-2.0),
            Method::Pmlsc => self.p.unwrap_or(10.0),
            Method::Gmsc => 0.0,
            _ => self.p.unwrap_or(1.0),
        }
    }
}

/// A modeled clustering matrix. Square for the symmetric methods;
/// rectangular for the co-clustering pair (rows index the embedded side).
#[derive(Debug, Clone, PartialEq)]
pub struct Mcm {
    pub matrix: DMatrix<f64>,
    pub method: Method,
}

impl Mcm {
    pub fn shape(&self) -> (usize, usize) {
        (self.matrix.nrows(), self.matrix.ncols())
    }
}

/// `I ± R/‖R‖_F` for a nonzero symmetric `R`: its eigenvectors in descending
/// eigenvalue order are the leading (`leading = true`) or trailing
/// (`leading = false`) eigenvectors of `R`, and the result is PSD because the
/// scaled summand has spectral norm at most one.
pub fn mcm_generic(r: &DMatrix<f64>, leading: bool) -> Result<Mcm> {
    Ok(Mcm {
        matrix: generic_matrix(r, leading)?,
        method: Method::Generic,
    })
}

fn generic_matrix(r: &DMatrix<f64>, leading: bool) -> Result<DMatrix<f64>> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::Dimension(format!(
            "generic MCM needs a square matrix, got {}x{}",
            d,
            r.ncols()
        )));
    }
    let scale = linalg::sq_frobenius(r).sqrt();
    if scale == 0.0 {
        return Err(Error::InvalidGraph(
            "generic MCM needs a nonzero matrix".into(),
        ));
    }
    let asym: f64 = (0..d)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (r[(i, j)] - r[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::Dimension(
            "generic MCM needs a symmetric matrix".into(),
        ));
    }
    let sign = if leading { 1.0 } else { -1.0 };
    let mut m = r * (sign / scale);
    for i in 0..d {
        m[(i, i)] += 1.0;
    }
    Ok(linalg::symmetrize(&m))
}

/// Builds the MCM of one snapshot for the chosen method.
pub fn build_mcm(snapshot: &GraphSnapshot, spec: &MethodSpec) -> Result<Mcm> {
    check_applicable(snapshot, spec.method)?;
    let matrix = match spec.method {
        Method::Generic | Method::Osc => generic_matrix(&snapshot.adjacency(), true)?,
        Method::Usc => usc_matrix(&snapshot.adjacency(), spec),
        Method::Nsc | Method::Csc => nsc_matrix(&snapshot.adjacency(), spec)?,
        Method::Smm => smm_matrix(&snapshot.adjacency())?,
        Method::Bhc => bhc_matrix(&snapshot.adjacency(), spec)?,
        Method::Srsc => srsc_matrix(&snapshot.adjacency())?,
        Method::Gmsc => gmsc_matrix(&snapshot.adjacency(), spec),
        Method::Spmsc => spmsc_matrix(&snapshot.adjacency(), spec)?,
        Method::Bsc => {
            let a = snapshot.adjacency();
            generic_matrix(&(&a * a.transpose() + a.transpose() * &a), true)?
        }
        Method::Ddsc => ddsc_matrix(&snapshot.adjacency(), spec)?,
        Method::Rwsc => rwsc_matrix(&snapshot.adjacency(), spec)?,
        Method::Pmlsc => pmlsc_matrix(snapshot, spec)?,
        Method::SccSend => scc_matrix(snapshot, spec)?,
        Method::SccReceive => scc_matrix(snapshot, spec)?.transpose(),
    };
    Ok(Mcm {
        matrix,
        method: spec.method,
    })
}

/// Builds the MCM of every snapshot in the sequence (in parallel when the
/// `parallel` feature is on).
pub fn build_mcm_sequence(sequence: &SnapshotSequence, spec: &MethodSpec) -> Result<Vec<Mcm>> {
    exec::par_map(sequence.snapshots(), |s| build_mcm(s, spec))
        .into_iter()
        .collect()
}

fn check_applicable(snapshot: &GraphSnapshot, method: Method) -> Result<()> {
    use Method::*;
    if snapshot.num_views() > 1 && method != Pmlsc {
        return Err(Error::NotApplicable(format!(
            "{method} expects a single view, got {}",
            snapshot.num_views()
        )));
    }
    if snapshot.is_signed() && !matches!(method, Srsc | Gmsc | Spmsc | Generic) {
        return Err(Error::NotApplicable(format!(
            "{method} does not handle signed weights"
        )));
    }
    if snapshot.directed() && !matches!(method, Bsc | Ddsc | Rwsc | SccSend | SccReceive) {
        return Err(Error::NotApplicable(format!(
            "{method} expects an undirected snapshot"
        )));
    }
    if matches!(method, SccSend | SccReceive)
        && !snapshot.directed()
        && snapshot.bipartite_split().is_none()
    {
        return Err(Error::NotApplicable(
            "co-clustering needs a directed or bipartite snapshot".into(),
        ));
    }
    Ok(())
}

/// `nI - L` with `L = D - A`; `n` defaults to twice the maximum degree,
/// which keeps the matrix PSD for any graph.
fn usc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> DMatrix<f64> {
    let deg = graph::out_degrees(a);
    let n = spec.usc_shift.unwrap_or(2.0 * deg.max());
    let d = a.nrows();
    let mut m = a.clone();
    for i in 0..d {
        m[(i, i)] += n - deg[i];
    }
    m
}

/// `Q^sym = I + D^{-1/2} A D^{-1/2}`, spectrum within `[0, 2]`.
fn nsc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let mut m = normalized_adjacency(a, spec)?;
    for i in 0..d {
        m[(i, i)] += 1.0;
    }
    Ok(m)
}

/// `D^{-1/2} A D^{-1/2}` with optional `D + tau I` regularization. Errors on
/// zero-degree nodes when unregularized.
fn normalized_adjacency(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let deg = graph::out_degrees(a);
    let tau = if spec.regularize {
        spec.tau.unwrap_or(deg.mean())
    } else {
        0.0
    };
    let mut scale = DVector::zeros(a.nrows());
    for i in 0..a.nrows() {
        let di = deg[i] + tau;
        if di <= 0.0 {
            return Err(Error::InvalidGraph(format!(
                "node {i} has zero degree; bridge components or enable degree regularization"
            )));
        }
        scale[i] = 1.0 / di.sqrt();
    }
    Ok(scaled_sym(a, &scale))
}

/// Modularity matrix `B = A - d dᵀ / vol`, leading eigenvectors.
fn smm_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let deg = graph::out_degrees(a);
    let vol = deg.sum();
    if vol <= 0.0 {
        return Err(Error::InvalidGraph(
            "modularity needs at least one edge".into(),
        ));
    }
    let b = a - &deg * deg.transpose() / vol;
    generic_matrix(&b, true)
}

/// Bethe Hessian `H(r) = (r² - 1)I - rA + D` with `r = sqrt(mean degree)`,
/// trailing eigenvectors. An edgeless graph degenerates to `H = -I`, which
/// still produces a valid (if uninformative) MCM.
fn bhc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let deg = graph::out_degrees(a);
    let r = spec.bhc_r.unwrap_or(deg.mean().sqrt());
    let d = a.nrows();
    let mut h = a * (-r);
    for i in 0..d {
        h[(i, i)] += r * r - 1.0 + deg[i];
    }
    generic_matrix(&h, false)
}

/// Signed ratio Laplacian `|D| - A`, trailing eigenvectors.
fn srsc_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let deg = graph::abs_degrees(a);
    let d = a.nrows();
    let mut l = -a.clone();
    for i in 0..d {
        l[(i, i)] += deg[i];
    }
    generic_matrix(&l, false)
}

/// The two signed-part matrices: `L^sym+ = I - norm(A+)` and
/// `Q^sym- = I + norm(A-)`. Nodes isolated within a part keep a zero
/// normalized row (so an empty part contributes the identity).
fn signed_pair(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (pos, neg) = graph::signed_split(a);
    let d = a.nrows();
    let mut lplus = -pinv_normalized(&pos);
    let mut qminus = pinv_normalized(&neg);
    for i in 0..d {
        lplus[(i, i)] += 1.0;
        qminus[(i, i)] += 1.0;
    }
    (lplus, qminus)
}

fn pinv_normalized(a: &DMatrix<f64>) -> DMatrix<f64> {
    let deg = graph::out_degrees(a);
    let scale = deg.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
    scaled_sym(a, &scale)
}

/// `I - clip(M_p(L^sym+, Q^sym-)) / 2`. The clip into `[0, 2]` absorbs the
/// epsilon shift that the power mean may add beyond the Laplacian band, so
/// the complement stays PSD.
fn spmsc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let (lplus, qminus) = signed_pair(a);
    let mp = power_mean(&[lplus, qminus], spec.power(), spec.epsilon)?;
    Ok(complement_half(&linalg::clip_spectrum(&mp, 0.0, 2.0)))
}

/// Geometric-mean Laplacian: `I - clip(gm(L^sym+ + eps I, Q^sym-)) / 2` with
/// `eps = 1e-6 * tr(L^sym+)/d` by default (the first factor must be definite
/// for the inner inverse square root).
fn gmsc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> DMatrix<f64> {
    let d = a.nrows();
    let (mut lplus, qminus) = signed_pair(a);
    let eps = spec.epsilon.unwrap_or(1e-6) * lplus.trace() / d as f64;
    for i in 0..d {
        lplus[(i, i)] += eps;
    }
    let g = linalg::sym_geometric_mean(&lplus, &qminus);
    complement_half(&linalg::clip_spectrum(&g, 0.0, 2.0))
}

/// Degree-discounted symmetrization
/// `Do^{-1/2} A Di^{-1/2} Aᵀ Do^{-1/2} + Di^{-1/2} Aᵀ Do^{-1/2} A Di^{-1/2}`,
/// leading eigenvectors.
fn ddsc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let (so, si) = directed_scales(a, spec, true)?;
    let y = scale_cols(a, &si);
    let t1 = scaled_sym(&(&y * a.transpose()), &so);
    let z = scale_cols(&a.transpose(), &so);
    let t2 = scaled_sym(&(&z * a), &si);
    generic_matrix(&linalg::symmetrize(&(t1 + t2)), true)
}

/// Symmetrized random-walk Laplacian
/// `Θ = (Π^{1/2} P Π^{-1/2} + Π^{-1/2} Pᵀ Π^{1/2}) / 2` with `P` the
/// out-degree transition matrix and `Π = D_out^{-1}`, leading eigenvectors.
///
/// `Π` is a degree reweighting rather than the random walk's stationary
/// distribution; on out-regular graphs the two coincide up to scale, and the
/// scale cancels in the normalization.
fn rwsc_matrix(a: &DMatrix<f64>, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let (so, _) = directed_scales(a, spec, false)?;
    let d = a.nrows();
    // so[i] = (deg_out[i] + tau)^{-1/2}, so P = diag(so²) A and
    // (Π^{1/2} P Π^{-1/2})_{ij} = so[i] P_{ij} / so[j] = so[i]³ A_{ij} / so[j].
    let x = DMatrix::from_fn(d, d, |i, j| so[i].powi(3) * a[(i, j)] / so[j]);
    generic_matrix(&linalg::symmetrize(&x), true)
}

/// Inverse square-root degree scalings for the directed builders; errors on
/// zero out-degrees (and in-degrees when `need_in`) unless regularized.
fn directed_scales(
    a: &DMatrix<f64>,
    spec: &MethodSpec,
    need_in: bool,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dout = graph::out_degrees(a);
    let din = graph::in_degrees(a);
    let tau = if spec.regularize {
        spec.tau.unwrap_or(dout.mean())
    } else {
        0.0
    };
    let mut so = DVector::zeros(a.nrows());
    let mut si = DVector::zeros(a.nrows());
    for i in 0..a.nrows() {
        let o = dout[i] + tau;
        if o <= 0.0 {
            return Err(Error::InvalidGraph(format!(
                "node {i} has zero out-degree; enable degree regularization"
            )));
        }
        so[i] = 1.0 / o.sqrt();
        let inn = din[i] + tau;
        if need_in {
            if inn <= 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "node {i} has zero in-degree; enable degree regularization"
                )));
            }
            si[i] = 1.0 / inn.sqrt();
        }
    }
    Ok((so, si))
}

/// Power mean of per-view normalized Laplacians, clipped into `[0, 2]` and
/// complemented: `I - clip(M_p(L_1, ..., L_S)) / 2`.
fn pmlsc_matrix(snapshot: &GraphSnapshot, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let d = snapshot.d();
    let laplacians = (0..snapshot.num_views())
        .map(|v| {
            let mut l = -normalized_adjacency(&snapshot.adjacency_view(v), spec)?;
            for i in 0..d {
                l[(i, i)] += 1.0;
            }
            Ok(l)
        })
        .collect::<Result<Vec<_>>>()?;
    let mp = power_mean(&laplacians, spec.power(), spec.epsilon)?;
    Ok(complement_half(&linalg::clip_spectrum(&mp, 0.0, 2.0)))
}

/// Regularized co-clustering Laplacian
/// `L = (D_r + tau_r I)^{-1/2} A (D_c + tau_c I)^{-1/2}` over the directed
/// adjacency (or the off-diagonal block of a bipartite snapshot). Rows of `L`
/// index senders, so `L` itself embeds senders through its left singular
/// vectors and `Lᵀ` embeds receivers.
fn scc_matrix(snapshot: &GraphSnapshot, spec: &MethodSpec) -> Result<DMatrix<f64>> {
    let full = snapshot.adjacency();
    let block = match snapshot.bipartite_split() {
        Some((n1, n2)) => full.view((0, n1), (n1, n2)).into_owned(),
        None => full,
    };
    let dr = graph::out_degrees(&block);
    let dc = graph::in_degrees(&block);
    if dr.sum() <= 0.0 {
        return Err(Error::InvalidGraph(
            "co-clustering needs at least one edge".into(),
        ));
    }
    let tau_r = spec.tau.unwrap_or(dr.mean());
    let tau_c = spec.tau.unwrap_or(dc.mean());
    let sr = dr.map(|x| 1.0 / (x + tau_r).sqrt());
    let sc = dc.map(|x| 1.0 / (x + tau_c).sqrt());
    Ok(DMatrix::from_fn(block.nrows(), block.ncols(), |i, j| {
        block[(i, j)] * sr[i] * sc[j]
    }))
}

/// Overlapping-community embedding `X = V_k Λ_k^{1/2}` from the adjacency
/// eigendecomposition, rows L2-normalized (zero rows left untouched).
pub fn osc_embedding(snapshot: &GraphSnapshot, k: usize) -> Result<DMatrix<f64>> {
    check_applicable(snapshot, Method::Osc)?;
    osc_embedding_from(&snapshot.adjacency(), k)
}

/// [`osc_embedding`] on an explicit symmetric matrix.
pub fn osc_embedding_from(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if k == 0 || k > d {
        return Err(Error::Dimension(format!(
            "embedding rank {k} out of range for {d} nodes"
        )));
    }
    let (vals, vecs) = linalg::sym_eigen_desc(a);
    if vals[k - 1] < -1e-12 * vals[0].abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "adjacency has fewer than {k} nonnegative eigenvalues"
        )));
    }
    let mut x = DMatrix::from_fn(d, k, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt());
    for i in 0..d {
        let norm = x.row(i).norm();
        if norm > 0.0 {
            for j in 0..k {
                x[(i, j)] /= norm;
            }
        }
    }
    Ok(x)
}

/// Matrix power mean `M_p(X_1, ..., X_S) = ((1/S) Σ X_i^p)^{1/p}` of
/// symmetric PSD matrices.
///
/// `p = 1` is the exact arithmetic mean and `p = 0` the two-matrix geometric
/// mean. For `p < 0` the `epsilon` policy of [`MethodSpec`] applies: `None`
/// clamps tiny eigenvalues, `Some(e > 0)` shifts every argument by `e I`,
/// and `Some(0.0)` errors on numerically singular arguments.
pub fn power_mean(mats: &[DMatrix<f64>], p: f64, epsilon: Option<f64>) -> Result<DMatrix<f64>> {
    if mats.is_empty() {
        return Err(Error::Dimension("power mean of zero matrices".into()));
    }
    let d = mats[0].nrows();
    if mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
        return Err(Error::Dimension(
            "power mean arguments must share one square shape".into(),
        ));
    }
    if p < 0.0 && epsilon == Some(0.0) {
        for m in mats {
            if linalg::min_eigenvalue(m) <= linalg::EIG_CLAMP {
                return Err(Error::Numerical(
                    "power mean with a negative exponent needs strictly positive definite \
                     arguments; pass epsilon > 0"
                        .into(),
                ));
            }
        }
    }
    // The mean of identical arguments is exact; skipping the eigensolves
    // avoids the roundoff that large |p| would otherwise amplify.
    if mats.len() == 1 || mats.iter().skip(1).all(|m| m == &mats[0]) {
        return Ok(mats[0].clone());
    }
    if p == 0.0 {
        if mats.len() != 2 {
            return Err(Error::NotApplicable(
                "geometric mean is implemented for exactly two matrices".into(),
            ));
        }
        return Ok(linalg::sym_geometric_mean(&mats[0], &mats[1]));
    }
    let shift = epsilon.unwrap_or(0.0).max(0.0);
    let mut sum = DMatrix::zeros(d, d);
    for m in mats {
        let arg = if shift > 0.0 {
            let mut s = m.clone();
            for i in 0..d {
                s[(i, i)] += shift;
            }
            s
        } else {
            m.clone()
        };
        sum += linalg::sym_power_psd(&arg, p);
    }
    let mean = sum / mats.len() as f64;
    if p == 1.0 {
        return Ok(mean);
    }
    Ok(linalg::symmetrize(&linalg::sym_power_psd(&mean, 1.0 / p)))
}

/// `I - M/2`.
fn complement_half(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out = m * (-0.5);
    for i in 0..d {
        out[(i, i)] += 1.0;
    }
    out
}

/// Entrywise `s[i] * a[i][j] * s[j]`.
fn scaled_sym(a: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s[i] * s[j])
}

/// Entrywise `a[i][j] * s[j]`.
fn scale_cols(a: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s[j])
}
