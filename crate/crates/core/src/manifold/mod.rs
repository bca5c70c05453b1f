//! Coordinate charts, Levi-Civita connection and curvature.
//!
//! Curvature sign convention: `R(X, Y)Z = ∇_X ∇_Y Z - ∇_Y ∇_X Z - ∇_[X,Y] Z`,
//! so that `sec(v, w) = <R(w, v)v, w> / |v ∧ w|^2` and the Jacobi equation
//! reads `J'' + R(J, γ')γ' = 0`.

mod family;

pub use family::MetricFamily;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, HyperDual64};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::linalg::{self, gram_schmidt_g, inner, norm_g};

/// Default central-difference step (relative to coordinate scale).
pub const FD_STEP: f64 = 1e-4;

/// Tolerance on `|v|_g - 1` accepted for unit directions.
pub const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChristoffelMode {
    /// Exact metric derivatives through dual-number evaluation.
    Analytic,
    /// Second-order central differences of the metric with step `h`.
    FiniteDifference { h: f64 },
}

/// A single coordinate chart carrying a closed-form metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricChart {
    pub name: String,
    pub family: MetricFamily,
    pub coords: Vec<String>,
    /// Open box `(lo, hi)` per coordinate.
    pub domain: Vec<(f64, f64)>,
    pub mode: ChristoffelMode,
}

/// Christoffel symbols `Γ^k_ij`, stored as `data[(k * n + i) * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Γ(a, b)^k = Γ^k_ij a^i b^j`.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.data[(k * n + i) * n + j] * a[i] * b[j];
                }
            }
            s
        })
    }

    /// Matrix `M^k_j = Γ^k_ij v^i`, so that `Γ(v, w) = M w`.
    pub fn along(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| self.data[(k * n + i) * n + j] * v[i]).sum())
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Riemann tensor `R^l_ijk` (`R(∂_i, ∂_j)∂_k = R^l_ijk ∂_l`), stored as `data[((l*n+i)*n+j)*n+k]`.
#[derive(Debug, Clone)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + i) * n + j) * n + k]
    }

    /// `R(a, b)c` as a coordinate vector.
    pub fn apply(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |l, _| {
            let mut s = 0.0;
            for i in 0..n {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let bj = b[j];
                    if bj == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        s += self.data[((l * n + i) * n + j) * n + k] * a[i] * bj * c[k];
                    }
                }
            }
            s
        })
    }

    /// Coordinate matrix of `X ↦ R(X, v)v`.
    pub fn jacobi_operator(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |l, i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += self.data[((l * n + i) * n + j) * n + k] * v[j] * v[k];
                }
            }
            s
        })
    }
}

/// The Jacobi operator `R(·, v)v` on `v^⊥` in an orthonormal basis.
#[derive(Debug, Clone)]
pub struct CurvatureOperator {
    pub basepoint: DVector<f64>,
    pub direction: DVector<f64>,
    /// Orthonormal basis of `v^⊥` (columns, coordinate components).
    pub basis: DMatrix<f64>,
    pub matrix: DMatrix<f64>,
}

impl CurvatureOperator {
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.matrix)
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).abs().max()
    }
}

/// Metric with its first (and optionally second) coordinate derivatives.
struct MetricJet {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    dg: Vec<DMatrix<f64>>,
    ddg: Vec<Vec<DMatrix<f64>>>,
}

impl MetricChart {
    pub fn new(name: impl Into<String>, family: MetricFamily, domain: Vec<(f64, f64)>) -> Self {
        let coords = family.default_coords();
        assert_eq!(domain.len(), family.dim(), "domain box must match dimension");
        MetricChart {
            name: name.into(),
            family,
            coords,
            domain,
            mode: ChristoffelMode::Analytic,
        }
    }

    pub fn with_mode(mut self, mode: ChristoffelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Strict interior test against the domain box.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.domain).all(|(xi, (lo, hi))| xi.is_finite() && *xi > *lo && *xi < *hi)
    }

    pub fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeomError::Domain {
                chart: self.name.clone(),
                point: x.iter().copied().collect(),
            })
        }
    }

    /// Metric matrix at `x` (no domain check).
    pub fn metric(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.family.components(x.as_slice()))
    }

    /// Metric with domain and positive-definiteness checks.
    pub fn metric_checked(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let g = self.metric(x);
        if g.iter().any(|v| !v.is_finite()) || g.clone().cholesky().is_none() {
            return Err(GeomError::Definiteness {
                chart: self.name.clone(),
                point: x.iter().copied().collect(),
                min_eig: linalg::sym_eigenvalues(&g)[0],
            });
        }
        Ok(g)
    }

    pub fn inner(&self, x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        inner(&self.metric(x), a, b)
    }

    pub fn norm(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        norm_g(&self.metric(x), a)
    }

    fn fd_step(&self, x: &DVector<f64>, i: usize, h: f64) -> f64 {
        h * x[i].abs().max(1.0)
    }

    fn jet(&self, x: &DVector<f64>, second: bool) -> Result<MetricJet> {
        let n = self.dim();
        let g = self.metric_checked(x)?;
        let ginv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| GeomError::Definiteness {
                chart: self.name.clone(),
                point: x.iter().copied().collect(),
                min_eig: 0.0,
            })?;
        let to_mat = |v: Vec<f64>| DMatrix::from_row_slice(n, n, &v);
        let (dg, ddg) = match self.mode {
            ChristoffelMode::Analytic => {
                if second {
                    let mut dg = vec![DMatrix::zeros(n, n); n];
                    let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
                    for i in 0..n {
                        for j in i..n {
                            let mut xs: Vec<HyperDual64> =
                                x.iter().map(|&v| HyperDual64::from_re(v)).collect();
                            xs[i].eps1 = 1.0;
                            xs[j].eps2 = 1.0;
                            let comp = self.family.components(&xs);
                            if i == j {
                                dg[i] = to_mat(comp.iter().map(|c| c.eps1).collect());
                            }
                            let h = to_mat(comp.iter().map(|c| c.eps1eps2).collect());
                            ddg[j][i] = h.clone();
                            ddg[i][j] = h;
                        }
                    }
                    (dg, ddg)
                } else {
                    let dg = (0..n)
                        .map(|i| {
                            let xs: Vec<Dual64> = x
                                .iter()
                                .enumerate()
                                .map(|(j, &v)| Dual64::new(v, if i == j { 1.0 } else { 0.0 }))
                                .collect();
                            to_mat(self.family.components(&xs).iter().map(|c| c.eps).collect())
                        })
                        .collect();
                    (dg, Vec::new())
                }
            }
            ChristoffelMode::FiniteDifference { h } => {
                let shifted = |offsets: &[(usize, f64)]| {
                    let mut y = x.clone();
                    for &(i, d) in offsets {
                        y[i] += d;
                    }
                    self.metric(&y)
                };
                let dg: Vec<DMatrix<f64>> = (0..n)
                    .map(|i| {
                        let hi = self.fd_step(x, i, h);
                        (shifted(&[(i, hi)]) - shifted(&[(i, -hi)])) / (2.0 * hi)
                    })
                    .collect();
                let ddg = if second {
                    let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
                    for i in 0..n {
                        let hi = self.fd_step(x, i, h);
                        ddg[i][i] = (shifted(&[(i, hi)]) - &g * 2.0 + shifted(&[(i, -hi)])) / (hi * hi);
                        for j in (i + 1)..n {
                            let hj = self.fd_step(x, j, h);
                            let m = (shifted(&[(i, hi), (j, hj)])
                                - shifted(&[(i, hi), (j, -hj)])
                                - shifted(&[(i, -hi), (j, hj)])
                                + shifted(&[(i, -hi), (j, -hj)]))
                                / (4.0 * hi * hj);
                            ddg[j][i] = m.clone();
                            ddg[i][j] = m;
                        }
                    }
                    ddg
                } else {
                    Vec::new()
                };
                (dg, ddg)
            }
        };
        Ok(MetricJet { g, ginv, dg, ddg })
    }

    fn christoffel_from(jet: &MetricJet) -> Christoffel {
        let n = jet.g.nrows();
        let mut data = vec![0.0; n * n * n];
        // first-kind symbols T_{mij} = ∂_i g_mj + ∂_j g_mi - ∂_m g_ij
        let t = |m: usize, i: usize, j: usize| jet.dg[i][(m, j)] + jet.dg[j][(m, i)] - jet.dg[m][(i, j)];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let s: f64 = (0..n).map(|m| jet.ginv[(k, m)] * t(m, i, j)).sum::<f64>() * 0.5;
                    data[(k * n + i) * n + j] = s;
                    data[(k * n + j) * n + i] = s;
                }
            }
        }
        Christoffel { n, data }
    }

    /// Christoffel symbols at `x` using the chart's configured mode.
    pub fn christoffel(&self, x: &DVector<f64>) -> Result<Christoffel> {
        Ok(Self::christoffel_from(&self.jet(x, false)?))
    }

    /// Christoffel symbols forced through central differences with step `h`.
    pub fn christoffel_fd(&self, x: &DVector<f64>, h: f64) -> Result<Christoffel> {
        let fd = self.clone().with_mode(ChristoffelMode::FiniteDifference { h });
        fd.christoffel(x)
    }

    /// Coordinate derivatives `∂_i g` at `x` in the configured mode.
    pub fn metric_derivatives(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.jet(x, false)?.dg)
    }

    pub fn riemann(&self, x: &DVector<f64>) -> Result<Riemann> {
        let jet = self.jet(x, true)?;
        let n = jet.g.nrows();
        let gam = Self::christoffel_from(&jet);
        let dginv: Vec<DMatrix<f64>> = (0..n).map(|i| -(&jet.ginv * &jet.dg[i] * &jet.ginv)).collect();
        // dgam[((i*n + l)*n + j)*n + k] = ∂_i Γ^l_jk
        let mut dgam = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    for l in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            let t = jet.dg[j][(m, k)] + jet.dg[k][(m, j)] - jet.dg[m][(j, k)];
                            let dt = jet.ddg[i][j][(m, k)] + jet.ddg[i][k][(m, j)] - jet.ddg[i][m][(j, k)];
                            s += dginv[i][(l, m)] * t + jet.ginv[(l, m)] * dt;
                        }
                        s *= 0.5;
                        dgam[((i * n + l) * n + j) * n + k] = s;
                        dgam[((i * n + l) * n + k) * n + j] = s;
                    }
                }
            }
        }
        let mut data = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = dgam[((i * n + l) * n + j) * n + k] - dgam[((j * n + l) * n + i) * n + k];
                        for m in 0..n {
                            s += gam.get(l, i, m) * gam.get(m, j, k) - gam.get(l, j, m) * gam.get(m, i, k);
                        }
                        data[((l * n + i) * n + j) * n + k] = s;
                    }
                }
            }
        }
        Ok(Riemann { n, data })
    }

    fn require_unit(&self, g: &DMatrix<f64>, v: &DVector<f64>) -> Result<()> {
        let nv = norm_g(g, v);
        if (nv - 1.0).abs() > UNIT_TOL {
            return Err(GeomError::Normalization { norm: nv });
        }
        Ok(())
    }

    /// Orthonormal basis of `v^⊥` from Gram-Schmidt of the coordinate basis, in order.
    pub fn orthonormal_complement(&self, g: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let vhat = v / norm_g(g, v);
        let cands: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                e
            })
            .collect();
        let basis = gram_schmidt_g(g, &[vhat], &cands, n - 1, 1e-3);
        linalg::columns(n, &basis)
    }

    /// `R(·, v)v` restricted to `v^⊥`, expressed in an orthonormal basis of `v^⊥`.
    pub fn curvature_operator(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<CurvatureOperator> {
        let g = self.metric_checked(x)?;
        self.require_unit(&g, v)?;
        let basis = self.orthonormal_complement(&g, v);
        let matrix = self.curvature_in_frame(x, v, &basis)?;
        Ok(CurvatureOperator {
            basepoint: x.clone(),
            direction: v.clone(),
            basis,
            matrix,
        })
    }

    /// Matrix `<R(E_a, v)v, E_b>` for the columns `E` of `frame`.
    pub fn curvature_in_frame(&self, x: &DVector<f64>, v: &DVector<f64>, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let g = self.metric(x);
        let rv = self.riemann(x)?.jacobi_operator(v);
        Ok(frame.transpose() * g * rv * frame)
    }

    /// Sectional curvature of the plane spanned by `v` and `w`.
    pub fn sectional(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let g = self.metric_checked(x)?;
        let vv = inner(&g, v, v);
        let ww = inner(&g, w, w);
        let vw = inner(&g, v, w);
        let wedge2 = vv * ww - vw * vw;
        let wedge = wedge2.max(0.0).sqrt();
        if wedge <= 1e-10 * (vv * ww).sqrt().max(1e-300) {
            return Err(GeomError::Degenerate { wedge });
        }
        let r = self.riemann(x)?;
        let rw = r.apply(w, v, v);
        Ok(inner(&g, &rw, w) / wedge2)
    }

    /// Intermediate Ricci curvature: the sum of the `k` smallest eigenvalues of `R(·, v)v` on `v^⊥`.
    pub fn ric_k(&self, x: &DVector<f64>, v: &DVector<f64>, k: usize) -> Result<f64> {
        let n = self.dim();
        if k < 1 || k > n - 1 {
            return Err(GeomError::param("k", format!("k = {k} not in [1, {}]", n - 1)));
        }
        let op = self.curvature_operator(x, v)?;
        Ok(linalg::sum_smallest(&op.eigenvalues(), k))
    }

    /// Rescale `v` to unit length at `x`.
    pub fn normalize(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v / self.norm(x, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn s2_polar() -> MetricChart {
        MetricChart::new(
            "s2_polar",
            MetricFamily::SpherePolar { curvature: 1.0 },
            vec![(0.0, std::f64::consts::PI), (-10.0, 10.0)],
        )
    }

    #[test]
    fn flat_christoffels_vanish() {
        let c = MetricChart::new("flat", MetricFamily::Euclidean { dim: 3 }, vec![(-5.0, 5.0); 3]);
        let gam = c.christoffel(&DVector::from_vec(vec![0.3, -1.0, 2.0])).unwrap();
        assert!(gam.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn polar_sphere_christoffels_at_equator() {
        // Γ^θ_φφ = -sinθ cosθ and Γ^φ_θφ = cotθ, both zero at θ = π/2.
        let c = s2_polar();
        let gam = c.christoffel(&DVector::from_vec(vec![FRAC_PI_2, 0.0])).unwrap();
        assert_abs_diff_eq!(gam.get(0, 1, 1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gam.get(1, 0, 1), 0.0, epsilon = 1e-15);
        let th: f64 = 0.7;
        let gam = c.christoffel(&DVector::from_vec(vec![th, 0.2])).unwrap();
        assert_abs_diff_eq!(gam.get(0, 1, 1), -th.sin() * th.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(gam.get(1, 0, 1), th.cos() / th.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(gam.get(1, 1, 0), th.cos() / th.sin(), epsilon = 1e-14);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let c = s2_polar();
        let err = c.christoffel(&DVector::from_vec(vec![-0.1, 0.0])).unwrap_err();
        assert!(matches!(err, GeomError::Domain { .. }));
    }

    #[test]
    fn degenerate_plane_is_rejected() {
        let c = s2_polar();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(c.sectional(&x, &v, &(&v * 2.0)), Err(GeomError::Degenerate { .. })));
    }

    #[test]
    fn ric_k_range_checked() {
        let c = s2_polar();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(c.ric_k(&x, &v, 2), Err(GeomError::Parameter { .. })));
        assert!(matches!(c.ric_k(&x, &(&v * 2.0), 1), Err(GeomError::Normalization { .. })));
    }
}
