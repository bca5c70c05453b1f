//! Small dense linear-algebra helpers shared by the geometric modules.
//!
//! Everything here works on `nalgebra` dynamic matrices. Matrices expressed in
//! a parallel orthonormal frame are Euclidean, so most routines use the plain
//! dot product; the metric-aware variants take the Gram matrix explicitly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative singular-value threshold used for every rank and kernel decision.
pub const RANK_REL_TOL: f64 = 1e-6;

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues ascending.
///
/// Ties keep the order produced by the decomposition, which makes the result
/// deterministic for a given input.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen(m).0.iter().copied().collect()
}

/// Sum of the `k` smallest entries of an ascending slice.
pub fn sum_smallest(sorted: &[f64], k: usize) -> f64 {
    sorted.iter().take(k).sum()
}

/// Sum of the `k` largest entries of an ascending slice.
pub fn sum_largest(sorted: &[f64], k: usize) -> f64 {
    sorted.iter().rev().take(k).sum()
}

pub fn inner(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * g * b)[(0, 0)]
}

pub fn norm_g(g: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    inner(g, a, a).max(0.0).sqrt()
}

/// Modified Gram-Schmidt in the metric `g`.
///
/// Candidates whose residual norm falls below `drop_tol` times their own norm
/// are skipped; at most `limit` vectors are returned.
pub fn gram_schmidt_g(
    g: &DMatrix<f64>,
    against: &[DVector<f64>],
    candidates: &[DVector<f64>],
    limit: usize,
    drop_tol: f64,
) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(limit);
    for c in candidates {
        if basis.len() == limit {
            break;
        }
        let scale = norm_g(g, c);
        if scale == 0.0 {
            continue;
        }
        let mut r = c.clone();
        // two passes for stability
        for _ in 0..2 {
            for a in against.iter().chain(basis.iter()) {
                let coef = inner(g, a, &r);
                r -= a * coef;
            }
        }
        let nr = norm_g(g, &r);
        if nr > drop_tol * scale {
            basis.push(r / nr);
        }
    }
    basis
}

/// Thin singular value decomposition, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * &self.v_t
    }

    /// `V Σ⁺ Uᵀ`, inverting only singular values above `threshold`.
    pub fn pseudo_inverse(&self, threshold: f64) -> DMatrix<f64> {
        let inv = self.singular_values.map(|s| if s > threshold { 1.0 / s } else { 0.0 });
        self.v_t.transpose() * DMatrix::from_diagonal(&inv) * self.u.transpose()
    }

    /// Least-squares solution of `m x = b` with the given cut-off.
    pub fn solve(&self, b: &DVector<f64>, threshold: f64) -> DVector<f64> {
        self.pseudo_inverse(threshold) * b
    }

    fn sorted(self) -> Svd {
        let k = self.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| self.singular_values[b].total_cmp(&self.singular_values[a]).then(a.cmp(&b)));
        Svd {
            u: DMatrix::from_fn(self.u.nrows(), k, |r, c| self.u[(r, order[c])]),
            singular_values: DVector::from_fn(k, |i, _| self.singular_values[order[i]]),
            v_t: DMatrix::from_fn(k, self.v_t.ncols(), |r, c| self.v_t[(order[r], c)]),
        }
    }
}

/// Relative reconstruction error accepted from the underlying SVD.
const SVD_CHECK: f64 = 1e-12;

fn raw_svd(m: &DMatrix<f64>) -> Svd {
    let s = m.clone().svd(true, true);
    Svd {
        u: s.u.expect("requested U"),
        singular_values: s.singular_values,
        v_t: s.v_t.expect("requested V^T"),
    }
}

fn padded_svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    let mut p = DMatrix::zeros(r + 1, c + 1);
    p.view_mut((0, 0), (r, c)).copy_from(m);
    p[(r, c)] = 2.0 * m.norm() + 1.0;
    let full = raw_svd(&p);
    // drop the triplet carried by the padding corner
    let k = full.singular_values.len();
    let pad = (0..k)
        .max_by(|&a, &b| full.v_t[(a, c)].abs().total_cmp(&full.v_t[(b, c)].abs()))
        .expect("nonempty");
    let keep: Vec<usize> = (0..k).filter(|&i| i != pad).collect();
    Svd {
        u: DMatrix::from_fn(r, keep.len(), |i, j| full.u[(i, keep[j])]),
        singular_values: DVector::from_fn(keep.len(), |i, _| full.singular_values[keep[i]]),
        v_t: DMatrix::from_fn(keep.len(), c, |i, j| full.v_t[(keep[i], j)]),
    }
}

/// SVD with a reconstruction check.
///
/// nalgebra's implicit-shift iteration occasionally returns wrong factors for
/// structured inputs (a rotation times a diagonal is a typical trigger). A
/// failed check retries on the transpose, then on a matrix padded with one
/// large diagonal entry; the most accurate attempt is returned.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Svd)> = None;
    for attempt in 0..3 {
        let s = match attempt {
            0 => raw_svd(m),
            1 => {
                let t = raw_svd(&m.transpose());
                Svd {
                    u: t.v_t.transpose(),
                    singular_values: t.singular_values,
                    v_t: t.u.transpose(),
                }
            }
            _ => padded_svd(m),
        };
        let err = (s.reconstruct() - m).norm() / scale;
        if err <= SVD_CHECK {
            return s.sorted();
        }
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, s));
        }
    }
    best.expect("at least one attempt").1.sorted()
}

/// Singular values (descending) of `m`.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).singular_values.iter().copied().collect()
}

/// Rank decision with the relative threshold and the spectral gap at that threshold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RankInfo {
    pub rank: usize,
    /// Smallest singular value counted as nonzero (or 0 when the rank is 0).
    pub smallest_kept: f64,
    /// Largest singular value counted as zero (or 0 when full rank).
    pub largest_dropped: f64,
    pub threshold: f64,
}

pub fn rank_info(m: &DMatrix<f64>, rel: f64) -> RankInfo {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    let threshold = rel * top.max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|&&x| x > threshold).count();
    RankInfo {
        rank,
        smallest_kept: if rank > 0 { s[rank - 1] } else { 0.0 },
        largest_dropped: s.get(rank).copied().unwrap_or(0.0),
        threshold,
    }
}

/// Orthonormal basis (columns) of the kernel of `m`, using an explicit absolute threshold.
pub fn null_space_abs(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad so that the SVD returns a full set of right singular vectors
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = svd(&padded);
    let vt = svd.v_t;
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= threshold)
        .map(|i| vt.row(i).transpose())
        .collect();
    columns(n, &cols)
}

/// Orthonormal kernel basis with the relative threshold policy.
pub fn null_space(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let top = singular_values(m).first().copied().unwrap_or(0.0);
    null_space_abs(m, rel * top.max(f64::MIN_POSITIVE))
}

/// Orthonormal basis (columns) of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = svd(m);
    let u = svd.u;
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel * top && top > 0.0)
        .map(|i| u.column(i).into_owned())
        .collect();
    columns(rows, &cols)
}

/// Orthonormal basis of the orthogonal complement of the column space of `basis` in R^n.
pub fn complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    null_space_abs(&basis.transpose(), 1e-10)
}

/// Stack column vectors into a matrix with `rows` rows (possibly zero columns).
pub fn columns(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Dimension of the intersection of two subspaces given by orthonormal columns.
///
/// Counts principal angles whose cosine exceeds `1 - tol`.
pub fn intersection_dim(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> usize {
    if a.ncols() == 0 || b.ncols() == 0 {
        return 0;
    }
    singular_values(&(a.transpose() * b))
        .into_iter()
        .filter(|&c| c > 1.0 - tol)
        .count()
}

/// Whether the column space of `sub` is contained in that of `sup` (orthonormal columns).
pub fn contained_in(sub: &DMatrix<f64>, sup: &DMatrix<f64>, tol: f64) -> bool {
    if sub.ncols() == 0 {
        return true;
    }
    let resid = sub - sup * (sup.transpose() * sub);
    resid.norm() <= tol * (sub.ncols() as f64).sqrt()
}

/// Count of eigenvalues strictly below `-threshold`, and of those within the band.
pub fn inertia(values: &[f64], threshold: f64) -> (usize, usize) {
    let neg = values.iter().filter(|&&x| x < -threshold).count();
    let zero = values.iter().filter(|&&x| x.abs() <= threshold).count();
    (neg, zero)
}
