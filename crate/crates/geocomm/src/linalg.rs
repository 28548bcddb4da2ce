//! Dense linear algebra helpers shared by the matrix builders and the
//! geodesic fitting routines.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Decompositions
//! are deterministic: iterative routines start from a fixed internal seed and
//! eigenvalue orderings are canonicalized, so repeated runs produce identical
//! bytes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when inverting or taking
/// negative matrix powers.
pub const EIG_CLAMP: f64 = 1e-12;

/// Matrix size at which `top_k_left_singular` switches from a full SVD to
/// seeded subspace iteration.
const DIRECT_SVD_LIMIT: usize = 256;

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// Returns `(values, vectors)` with `vectors` column `j` paired with
/// `values[j]`. The input must be symmetric; only its lower triangle is
/// trusted.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen_desc requires a square matrix");
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("NaN eigenvalue")
    });
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies a scalar function to the spectrum of a symmetric matrix:
/// `V f(Λ) Vᵀ`.
pub fn apply_spectral<F: Fn(f64) -> f64>(m: &DMatrix<f64>, f: F) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    &scaled * vecs.transpose()
}

/// Real power of a symmetric positive semidefinite matrix.
///
/// Eigenvalues below [`EIG_CLAMP`] are clamped up to it before negative
/// powers so that nearly singular inputs stay finite.
pub fn sym_power_psd(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    apply_spectral(m, |l| {
        let l = if p < 0.0 { l.max(EIG_CLAMP) } else { l.max(0.0) };
        l.powf(p)
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen_desc(m);
    vals[vals.len() - 1]
}

/// Clamps the spectrum of a symmetric matrix into `[lo, hi]`.
pub fn clip_spectrum(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    symmetrize(&apply_spectral(m, |l| l.clamp(lo, hi)))
}

/// Geometric mean of two symmetric positive definite matrices:
/// `A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}`.
pub fn sym_geometric_mean(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let a_half = sym_power_psd(a, 0.5);
    let a_neg_half = sym_power_psd(a, -0.5);
    let inner = &a_neg_half * b * &a_neg_half;
    let inner = symmetrize(&inner);
    let inner_half = sym_power_psd(&inner, 0.5);
    let out = &a_half * inner_half * a_half;
    symmetrize(&out)
}

/// `(M + Mᵀ) / 2`, removing roundoff asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Squared Frobenius norm.
pub fn sq_frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Orthonormal basis for the top-k left singular subspace of `m`.
///
/// Small matrices use a full SVD; larger ones use seeded subspace iteration
/// on `M Mᵀ` with Rayleigh–Ritz extraction, which only touches `m` through
/// matrix products. Errors when `k` exceeds the numerical rank of `m`.
pub fn top_k_left_singular(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if k == 0 || k > d.min(m.ncols()) {
        return Err(Error::Dimension(format!(
            "requested {k} singular directions from a {}x{} matrix",
            d,
            m.ncols()
        )));
    }
    if d.max(m.ncols()) <= DIRECT_SVD_LIMIT {
        let svd = m.clone().svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let s = &svd.singular_values;
        if s[k - 1] <= EIG_CLAMP * s[0].max(1.0) {
            return Err(Error::Numerical(format!(
                "matrix rank below requested subspace dimension {k}"
            )));
        }
        // The bidiagonal QR behind `svd` reports accurate values but can
        // misplace singular vectors of exactly rank-deficient input by ~1e-3.
        // Two rounds of subspace iteration contract any out-of-spectrum
        // contamination by (σ_{k+1}/σ_k)^4; Rayleigh-Ritz realigns the block.
        let scaled = m / s[0];
        let mut x = u.columns(0, k).into_owned();
        for _ in 0..2 {
            let mut y = &scaled * (scaled.transpose() * &x);
            for j in 0..k {
                let norm = y.column(j).norm();
                if norm > 0.0 {
                    y.column_mut(j).scale_mut(1.0 / norm);
                }
            }
            x = y;
            orthonormalize_columns(&mut x);
        }
        let (_, ritz_vecs) = rayleigh_ritz(&scaled, &x);
        return Ok(&x * ritz_vecs);
    }

    // Subspace iteration with a modest oversampling block.
    let block = (k + 4).min(d.min(m.ncols()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a1a);
    let mut x = DMatrix::from_fn(d, block, |_, _| rng.gen::<f64>() - 0.5);
    orthonormalize_columns(&mut x);
    let mut prev: Option<DMatrix<f64>> = None;
    for iter in 0..300 {
        let y = m * (m.transpose() * &x);
        x = y;
        orthonormalize_columns(&mut x);
        if iter % 5 == 4 {
            let (ritz_vals, ritz_vecs) = rayleigh_ritz(m, &x);
            let estimate = (&x * ritz_vecs).columns(0, k).into_owned();
            if ritz_vals[k - 1] <= EIG_CLAMP * EIG_CLAMP * ritz_vals[0].max(1.0) {
                return Err(Error::Numerical(format!(
                    "matrix rank below requested subspace dimension {k}"
                )));
            }
            if let Some(p) = &prev {
                if subspace_distance(p, &estimate) < 1e-12 {
                    return Ok(estimate);
                }
            }
            prev = Some(estimate);
        }
    }
    Ok(prev.expect("at least one Rayleigh-Ritz extraction"))
}

/// Rayleigh–Ritz step for subspace iteration on `M Mᵀ`: eigenpairs of
/// `Xᵀ M Mᵀ X` sorted descending.
fn rayleigh_ritz(m: &DMatrix<f64>, x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mt_x = m.transpose() * x;
    let small = mt_x.transpose() * mt_x;
    sym_eigen_desc(&symmetrize(&small))
}

/// In-place modified Gram–Schmidt. Columns with negligible residual are
/// replaced by deterministic directions orthogonal to the ones kept.
pub(crate) fn orthonormalize_columns(x: &mut DMatrix<f64>) {
    let (d, n) = (x.nrows(), x.ncols());
    for j in 0..n {
        for _attempt in 0..2 {
            for l in 0..j {
                let proj = x.column(l).dot(&x.column(j));
                let col_l = x.column(l).into_owned();
                let mut col_j = x.column_mut(j);
                col_j.axpy(-proj, &col_l, 1.0);
            }
            let norm = x.column(j).norm();
            if norm > 1e-10 {
                x.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            // Deterministic restart direction.
            let mut rng = ChaCha8Rng::seed_from_u64(0xc01d_5eed ^ j as u64);
            for i in 0..d {
                x[(i, j)] = rng.gen::<f64>() - 0.5;
            }
        }
    }
}

/// Extends the orthonormal columns of `basis` with `extra` further
/// orthonormal columns, chosen deterministically.
pub fn complete_orthonormal(basis: &DMatrix<f64>, extra: usize) -> DMatrix<f64> {
    let d = basis.nrows();
    assert!(basis.ncols() + extra <= d, "not enough ambient dimensions");
    let mut out = DMatrix::zeros(d, extra);
    let mut found = 0;
    let mut candidate = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0_0317);
    while found < extra {
        let mut v = if candidate < d {
            let mut e = DVector::zeros(d);
            e[candidate] = 1.0;
            e
        } else {
            DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5)
        };
        candidate += 1;
        for j in 0..basis.ncols() {
            let proj = basis.column(j).dot(&v);
            v.axpy(-proj, &basis.column(j).into_owned(), 1.0);
        }
        for j in 0..found {
            let proj = out.column(j).dot(&v);
            v.axpy(-proj, &out.column(j).into_owned(), 1.0);
        }
        let norm = v.norm();
        if norm > 0.5 {
            out.set_column(found, &(v / norm));
            found += 1;
        }
    }
    out
}

/// Orthonormal polar factor `W Vᵀ` of a (possibly rank-deficient) tall
/// matrix, from its thin SVD. This is the Stiefel-manifold maximizer of
/// `tr(Pᵀ G)`. Errors when `g` is numerically zero.
pub fn polar_orthonormal(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale <= 0.0 {
        return Err(Error::Numerical(
            "polar factor of an all-zero matrix is undefined".into(),
        ));
    }
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("Vᵀ requested");
    let q = u * vt;
    if orthonormality_deviation(&q) <= 1e-10 {
        return Ok(q);
    }
    // Exactly rank-deficient input can defeat the bidiagonal SVD. Rebuild the
    // right factor from the symmetric eigendecomposition of GᵀG, map it
    // through G for the nonzero directions, and complete the null ones.
    let n = g.ncols();
    let gram = symmetrize(&(g.transpose() * g));
    let (vals, vecs) = sym_eigen_desc(&gram);
    let sigma_max = vals[0].max(0.0).sqrt();
    if sigma_max <= 0.0 {
        return Err(Error::Numerical(
            "polar factor of an all-zero matrix is undefined".into(),
        ));
    }
    let kept: Vec<usize> = (0..n)
        .filter(|&j| vals[j].max(0.0).sqrt() > 1e-12 * sigma_max)
        .collect();
    let mut left = DMatrix::zeros(g.nrows(), kept.len());
    for (slot, &j) in kept.iter().enumerate() {
        left.set_column(slot, &(g * vecs.column(j) / vals[j].sqrt()));
    }
    orthonormalize_columns(&mut left);
    // Column j of the left factor must pair with eigenvector j; null
    // directions get arbitrary orthonormal completions in place.
    let mut full_left = DMatrix::zeros(g.nrows(), n);
    for (slot, &j) in kept.iter().enumerate() {
        full_left.set_column(j, &left.column(slot));
    }
    if kept.len() < n {
        let fresh = complete_orthonormal(&left, n - kept.len());
        let mut slot = 0;
        for j in 0..n {
            if !kept.contains(&j) {
                full_left.set_column(j, &fresh.column(slot));
                slot += 1;
            }
        }
    }
    let q = full_left * vecs.transpose();
    if orthonormality_deviation(&q) <= 1e-10 {
        Ok(q)
    } else {
        Err(Error::Numerical("polar factor failed to orthonormalize".into()))
    }
}

/// Largest absolute deviation of `QᵀQ` from the identity.
fn orthonormality_deviation(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let mut err = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let want = f64::from(i == j);
            err = err.max((gram[(i, j)] - want).abs());
        }
    }
    err
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases of equal rank.
///
/// Small angles are computed from the sine-based formulation
/// `σ((I - A Aᵀ) B)` to avoid the precision loss of `acos` near 1, large
/// ones from the cosine-based `σ(Aᵀ B)`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    assert_eq!(a.nrows(), b.nrows(), "ambient dimensions must match");
    assert_eq!(a.ncols(), b.ncols(), "subspace dimensions must match");
    let inner = a.transpose() * b;
    let residual = b - a * &inner;
    // Cosines descending; sines of the same angles ascending.
    let cos_desc = inner.svd(false, false).singular_values;
    let mut sin_asc: Vec<f64> = residual
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sin_asc.sort_by(|x, y| x.partial_cmp(y).expect("NaN singular value"));
    let k = cos_desc.len();
    DVector::from_fn(k, |j, _| {
        let c = cos_desc[j].clamp(-1.0, 1.0);
        if c * c > 0.5 {
            sin_asc[j].clamp(-1.0, 1.0).asin()
        } else {
            c.acos()
        }
    })
}

/// Largest principal angle between two equal-rank subspaces.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let angles = principal_angles(a, b);
    angles[angles.len() - 1]
}
