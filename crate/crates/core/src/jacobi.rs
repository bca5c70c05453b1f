//! Normal Jacobi fields, Lagrangian families and Riccati operators.
//!
//! All quantities are expressed in the parallel orthonormal frame carried by
//! a [`GeodesicPath`]. In that frame the Jacobi equation is the linear system
//! `J'' = -R(t) J` with the symmetric matrix `R_ab = <R(E_a, γ')γ', E_b>`.
//! The fundamental matrix of the first-order system is integrated once per
//! path with RK4 on the path grid (using the stored midpoints), and every
//! Lagrangian family on that path reuses it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::geodesic::{GeodesicPath, GeodesicSample};
use crate::linalg::{self, RANK_REL_TOL};

/// Refined singular times must reach this normalized smallest singular value.
pub const SINGULAR_ACCEPT: f64 = 1e-6;
/// Local minima below this (but above [`SINGULAR_ACCEPT`]) are reported as near-grazing.
pub const GRAZING_FLAG: f64 = 1e-3;
/// Target accuracy in `t` of singular-time refinement.
pub const REFINE_TOL: f64 = 1e-8;

/// Curvature matrix `<R(E_a, v)v, E_b>` at one path state.
pub fn frame_curvature(path: &GeodesicPath, s: &GeodesicSample) -> Result<DMatrix<f64>> {
    let m = path.chart.curvature_in_frame(&s.x, &s.v, &s.frame)?;
    Ok((&m + m.transpose()) * 0.5)
}

fn block_system(r: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = r.nrows();
    let cols = y.ncols();
    let mut out = DMatrix::zeros(2 * m, cols);
    let top = y.rows(0, m);
    let bottom = y.rows(m, m);
    out.rows_mut(0, m).copy_from(&bottom);
    out.rows_mut(m, m).copy_from(&(-(r * top)));
    out
}

fn rk4_linear(r0: &DMatrix<f64>, rm: &DMatrix<f64>, r1: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = block_system(r0, y);
    let k2 = block_system(rm, &(y + &k1 * (h / 2.0)));
    let k3 = block_system(rm, &(y + &k2 * (h / 2.0)));
    let k4 = block_system(r1, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Fundamental matrix of the Jacobi system along a path.
#[derive(Debug, Clone)]
pub struct JacobiPropagator {
    pub path: GeodesicPath,
    pub curvature: Vec<DMatrix<f64>>,
    pub curvature_mid: Vec<DMatrix<f64>>,
    /// `phi[i]` maps `(J(0), J'(0))` to `(J(t_i), J'(t_i))`.
    pub phi: Vec<DMatrix<f64>>,
}

impl JacobiPropagator {
    pub fn new(path: GeodesicPath) -> Result<Arc<Self>> {
        let curvature = path
            .samples
            .iter()
            .map(|s| frame_curvature(&path, s))
            .collect::<Result<Vec<_>>>()?;
        let curvature_mid = path
            .midpoints
            .iter()
            .map(|s| frame_curvature(&path, s))
            .collect::<Result<Vec<_>>>()?;
        let m = path.dim() - 1;
        let mut phi = Vec::with_capacity(path.samples.len());
        phi.push(DMatrix::identity(2 * m, 2 * m));
        for i in 0..path.midpoints.len() {
            let h = path.samples[i + 1].t - path.samples[i].t;
            let next = rk4_linear(&curvature[i], &curvature_mid[i], &curvature[i + 1], &phi[i], h);
            phi.push(next);
        }
        Ok(Arc::new(JacobiPropagator {
            path,
            curvature,
            curvature_mid,
            phi,
        }))
    }

    pub fn frame_dim(&self) -> usize {
        self.path.dim() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.path.t_max
    }

    /// Fundamental matrix at an arbitrary `t`, by one partial RK4 step from the sample below.
    pub fn phi_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let i = self.path.sample_index(t);
        let dt = t - self.path.samples[i].t;
        if dt.abs() < 1e-14 || i + 1 >= self.path.samples.len() {
            if dt.abs() > 1e-9 {
                return Err(GeomError::param("t", format!("{t} beyond path length {}", self.t_max())));
            }
            return Ok(self.phi[i].clone());
        }
        let s_mid = self.path.state_at(self.path.samples[i].t + dt / 2.0)?;
        let s_end = self.path.state_at(t)?;
        let rm = frame_curvature(&self.path, &s_mid)?;
        let r1 = frame_curvature(&self.path, &s_end)?;
        Ok(rk4_linear(&self.curvature[i], &rm, &r1, &self.phi[i], dt))
    }

    /// Frame curvature matrix at an arbitrary `t`.
    pub fn curvature_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let s = self.path.state_at(t)?;
        frame_curvature(&self.path, &s)
    }
}

/// One Jacobi field sampled on the path grid (frame components).
#[derive(Debug, Clone)]
pub struct JacobiField {
    pub t: Vec<f64>,
    pub j: Vec<DVector<f64>>,
    pub jp: Vec<DVector<f64>>,
}

impl JacobiField {
    pub fn at_sample(&self, i: usize) -> (&DVector<f64>, &DVector<f64>) {
        (&self.j[i], &self.jp[i])
    }
}

/// Integrate the Jacobi field with initial frame components `(J(0), J'(0))`.
pub fn integrate_jacobi(prop: &JacobiPropagator, j0: &DVector<f64>, jp0: &DVector<f64>) -> JacobiField {
    let m = prop.frame_dim();
    let mut y0 = DVector::zeros(2 * m);
    y0.rows_mut(0, m).copy_from(j0);
    y0.rows_mut(m, m).copy_from(jp0);
    let mut field = JacobiField {
        t: Vec::with_capacity(prop.phi.len()),
        j: Vec::with_capacity(prop.phi.len()),
        jp: Vec::with_capacity(prop.phi.len()),
    };
    for (s, phi) in prop.path.samples.iter().zip(&prop.phi) {
        let y = phi * &y0;
        field.t.push(s.t);
        field.j.push(y.rows(0, m).into_owned());
        field.jp.push(y.rows(m, m).into_owned());
    }
    field
}

/// Largest residual of `(J')' + R J = 0` at interior uniform samples (five-point stencil).
pub fn jacobi_residual(prop: &JacobiPropagator, field: &JacobiField) -> f64 {
    let h = prop.path.integrator.step;
    let n = field.t.len();
    let mut worst: f64 = 0.0;
    for i in 2..n.saturating_sub(2) {
        if (field.t[i + 2] - field.t[i - 2] - 4.0 * h).abs() > 1e-12 {
            continue;
        }
        let d = (&field.jp[i - 2] - &field.jp[i - 1] * 8.0 + &field.jp[i + 1] * 8.0 - &field.jp[i + 2]) / (12.0 * h);
        let r = d + &prop.curvature[i] * &field.j[i];
        worst = worst.max(r.norm());
    }
    worst
}

/// `ω(J1, J2) = <J1', J2> - <J1, J2'>` at sample `i`.
pub fn symplectic_form(a: &JacobiField, b: &JacobiField, i: usize) -> f64 {
    a.jp[i].dot(&b.j[i]) - a.j[i].dot(&b.jp[i])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GramMode {
    Point,
    Submanifold {
        name: String,
        /// Shape operator in the orthonormal tangent basis used for `J(0)`.
        shape: Vec<Vec<f64>>,
    },
}

/// A Lagrangian family of normal Jacobi fields.
///
/// `initial` holds `(J(0); J'(0))` for the basis fields as columns, normalized
/// to orthonormal columns. Coefficient vectors used throughout (kernels,
/// subspaces of the family) refer to these normalized columns.
#[derive(Debug, Clone)]
pub struct LagrangianFamily {
    pub prop: Arc<JacobiPropagator>,
    pub initial: DMatrix<f64>,
    pub mode: GramMode,
}

/// Multiplicity-counted zero of a Lagrangian family.
#[derive(Debug, Clone, Serialize)]
pub struct SingularTimeRecord {
    pub t: f64,
    pub multiplicity: usize,
    /// Coefficient vectors (columns) of the fields vanishing at `t`.
    #[serde(skip)]
    pub kernel: DMatrix<f64>,
    /// Normalized smallest singular value at the refined time.
    pub sigma_min: f64,
    /// Threshold used for the multiplicity count.
    pub threshold: f64,
    /// Smallest normalized singular value counted as nonzero.
    pub gap: f64,
    /// Whether the determinant of `J` changes sign across the grid cell.
    pub det_sign_change: bool,
    /// False for near-grazing minima that did not reach the acceptance level.
    pub accepted: bool,
    /// `1 - sigma_min / GRAZING_FLAG` for flagged minima; 1 for clean zeros.
    pub confidence: f64,
}

/// Riccati operator on its domain at one time.
#[derive(Debug, Clone)]
pub struct RiccatiOperator {
    pub t: f64,
    /// Orthonormal basis (columns, frame components) of the domain `K(t)^⊥`.
    pub domain: DMatrix<f64>,
    /// Operator on the full frame space: `D S_D D^T`.
    pub matrix: DMatrix<f64>,
    /// Matrix in the domain basis.
    pub restricted: DMatrix<f64>,
    /// Asymmetry of `J'^T J` (zero for a Lagrangian family).
    pub asymmetry: f64,
}

impl RiccatiOperator {
    /// `S_t u`, failing when `u` leaves the domain by more than `angle_tol` radians.
    pub fn apply(&self, u: &DVector<f64>, angle_tol: f64) -> Result<DVector<f64>> {
        let nu = u.norm();
        if nu == 0.0 {
            return Ok(u.clone());
        }
        let proj = &self.domain * (self.domain.transpose() * u);
        let off = (u - &proj).norm() / nu;
        if off.asin().abs() > angle_tol || off > 1.0 {
            return Err(GeomError::IllDefined {
                t: self.t,
                detail: format!("vector leaves the domain by angle {:.3e}", off.min(1.0).asin()),
            });
        }
        Ok(&self.matrix * proj)
    }

    pub fn is_full(&self) -> bool {
        self.domain.ncols() == self.domain.nrows()
    }
}

fn orthonormalize_columns(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let info = linalg::rank_info(y, RANK_REL_TOL);
    if info.rank < y.ncols() {
        return Err(GeomError::Precondition(format!(
            "initial data has rank {} < {}",
            info.rank,
            y.ncols()
        )));
    }
    let svd = linalg::svd(y);
    let (u, vt) = (svd.u, svd.v_t);
    // polar factor: closest matrix with orthonormal columns
    Ok(u * vt)
}

impl LagrangianFamily {
    /// Build from explicit initial data; checks rank and the Lagrangian condition.
    pub fn new(prop: Arc<JacobiPropagator>, j0: &DMatrix<f64>, jp0: &DMatrix<f64>, mode: GramMode) -> Result<Self> {
        let m = prop.frame_dim();
        if j0.nrows() != m || jp0.nrows() != m || j0.ncols() != m || jp0.ncols() != m {
            return Err(GeomError::param("initial data", format!("expected {m}x{m} blocks")));
        }
        let omega = jp0.transpose() * j0 - j0.transpose() * jp0;
        let scale = 1.0 + j0.norm() * jp0.norm();
        if omega.abs().max() > 1e-8 * scale {
            return Err(GeomError::Precondition(format!(
                "initial data is not Lagrangian (|ω| = {:.3e})",
                omega.abs().max()
            )));
        }
        let mut y = DMatrix::zeros(2 * m, m);
        y.rows_mut(0, m).copy_from(j0);
        y.rows_mut(m, m).copy_from(jp0);
        let initial = orthonormalize_columns(&y)?;
        Ok(LagrangianFamily { prop, initial, mode })
    }

    /// Fields vanishing at the start of the path.
    pub fn from_point(prop: Arc<JacobiPropagator>) -> Self {
        let m = prop.frame_dim();
        let mut initial = DMatrix::zeros(2 * m, m);
        initial.rows_mut(m, m).copy_from(&DMatrix::identity(m, m));
        LagrangianFamily {
            prop,
            initial,
            mode: GramMode::Point,
        }
    }

    pub fn dim(&self) -> usize {
        self.initial.ncols()
    }

    fn split(&self, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.dim();
        let full = y * &self.initial;
        (full.rows(0, m).into_owned(), full.rows(m, m).into_owned())
    }

    /// `(J, J')` matrices (columns = basis fields) at sample `i`.
    pub fn values_at_sample(&self, i: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        self.split(&self.prop.phi[i])
    }

    /// `(J, J')` at an arbitrary time.
    pub fn values_at(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok(self.split(&self.prop.phi_at(t)?))
    }

    /// Basis fields sampled on the grid.
    pub fn fields(&self) -> Vec<JacobiField> {
        let m = self.dim();
        (0..m)
            .map(|c| {
                let col = self.initial.column(c);
                integrate_jacobi(&self.prop, &col.rows(0, m).into_owned(), &col.rows(m, m).into_owned())
            })
            .collect()
    }

    /// Largest `|ω(J_a, J_b)|` over basis pairs and samples.
    pub fn omega_defect(&self) -> f64 {
        (0..self.prop.phi.len())
            .map(|i| {
                let (j, jp) = self.values_at_sample(i);
                (jp.transpose() * &j - j.transpose() * &jp).abs().max()
            })
            .fold(0.0, f64::max)
    }

    /// Normalized smallest singular value of `J` (relative to the stacked `(J; J')`).
    fn mu_from(&self, y: &DMatrix<f64>) -> f64 {
        let m = self.dim();
        let full = y * &self.initial;
        let j = full.rows(0, m).into_owned();
        let scale = linalg::singular_values(&full).first().copied().unwrap_or(1.0);
        linalg::singular_values(&j).last().copied().unwrap_or(0.0) / scale
    }

    fn mu_at(&self, t: f64) -> Result<f64> {
        Ok(self.mu_from(&self.prop.phi_at(t)?))
    }

    fn det_sign(&self, i: usize) -> f64 {
        self.values_at_sample(i).0.determinant().signum()
    }

    fn golden_min(&self, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = self.mu_at(c)?;
        let mut fd = self.mu_at(d)?;
        while (b - a) > REFINE_TOL {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.mu_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.mu_at(d)?;
            }
        }
        let t = 0.5 * (a + b);
        Ok((t, self.mu_at(t)?))
    }

    /// Singular times in `(lo, hi]` with multiplicities and kernels.
    ///
    /// Candidates are grid-local minima of the normalized smallest singular
    /// value of `J`; each is refined by golden-section search. Minima that do
    /// not reach [`SINGULAR_ACCEPT`] but fall below [`GRAZING_FLAG`] are
    /// returned with `accepted = false`.
    pub fn singular_times(&self, lo: f64, hi: f64) -> Result<Vec<SingularTimeRecord>> {
        let samples = &self.prop.path.samples;
        let hi = hi.min(self.prop.t_max());
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].t > lo + 1e-12 && samples[i].t <= hi + 1e-12)
            .collect();
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        let mu: Vec<f64> = idx.iter().map(|&i| self.mu_from(&self.prop.phi[i])).collect();
        let mut out: Vec<SingularTimeRecord> = Vec::new();
        for (p, &i) in idx.iter().enumerate() {
            let left_ok = p == 0 || mu[p] <= mu[p - 1];
            let right_ok = p + 1 == idx.len() || mu[p] < mu[p + 1];
            // the first retained sample only counts when a genuine interior neighbour exists
            let first_interior = p == 0 && !(i > 0 && samples[i - 1].t > lo);
            if !(left_ok && right_ok) || first_interior || mu[p] > 0.5 {
                continue;
            }
            let a = if i > 0 { samples[i - 1].t.max(lo) } else { samples[i].t };
            let b = if i + 1 < samples.len() { samples[i + 1].t.min(hi) } else { samples[i].t };
            let (t, m) = self.golden_min(a, b.max(a))?;
            if m >= GRAZING_FLAG {
                continue;
            }
            if out.iter().any(|r| (r.t - t).abs() < 10.0 * REFINE_TOL) {
                continue;
            }
            let rec = self.record_at(t, m)?;
            let sign_change = i > 0 && i + 1 < samples.len() && self.det_sign(i - 1) != self.det_sign(i + 1);
            out.push(SingularTimeRecord {
                det_sign_change: sign_change,
                ..rec
            });
        }
        Ok(out)
    }

    fn record_at(&self, t: f64, sigma: f64) -> Result<SingularTimeRecord> {
        let m = self.dim();
        let y = self.prop.phi_at(t)? * &self.initial;
        let scale = linalg::singular_values(&y).first().copied().unwrap_or(1.0);
        let j = y.rows(0, m).into_owned();
        let threshold = SINGULAR_ACCEPT * scale;
        let sv = linalg::singular_values(&j);
        let accepted = sigma < SINGULAR_ACCEPT;
        let mult = if accepted {
            sv.iter().filter(|&&s| s <= threshold).count().max(1)
        } else {
            1
        };
        let kernel = if accepted {
            let k = linalg::null_space_abs(&j, threshold);
            if k.ncols() >= mult {
                k
            } else {
                // fall back to the smallest right singular vectors
                linalg::null_space_abs(&j, sv[m - mult] * (1.0 + 1e-12))
            }
        } else {
            linalg::null_space_abs(&j, sv[m - 1] * (1.0 + 1e-12))
        };
        let gap = if mult < m { sv[m - mult - 1] / scale } else { 0.0 };
        Ok(SingularTimeRecord {
            t,
            multiplicity: mult,
            kernel,
            sigma_min: sigma,
            threshold: SINGULAR_ACCEPT,
            gap,
            det_sign_change: false,
            accepted,
            confidence: if accepted { 1.0 } else { 1.0 - sigma / GRAZING_FLAG },
        })
    }

    /// First accepted singular time in `(lo, hi]`.
    pub fn first_singular_time(&self, lo: f64, hi: f64) -> Result<Option<SingularTimeRecord>> {
        Ok(self.singular_times(lo, hi)?.into_iter().find(|r| r.accepted))
    }

    /// Basis (coefficient columns) of the span of all kernels at accepted singular times in `(lo, hi]`.
    pub fn full_index_space(&self, lo: f64, hi: f64) -> Result<DMatrix<f64>> {
        let recs = self.singular_times(lo, hi)?;
        Ok(span_of_kernels(self.dim(), recs.iter().filter(|r| r.accepted)))
    }

    /// Riccati operator at `t` on `K(t)^⊥ = image J(t)`.
    pub fn riccati(&self, t: f64) -> Result<RiccatiOperator> {
        let (j, jp) = self.values_at(t)?;
        Ok(riccati_from(t, &j, &jp))
    }

    /// Riccati operator at sample `i`.
    pub fn riccati_at_sample(&self, i: usize) -> RiccatiOperator {
        let (j, jp) = self.values_at_sample(i);
        riccati_from(self.prop.path.samples[i].t, &j, &jp)
    }

    /// The evaluation space `V(t)` of the coefficient subspace `v` (columns):
    /// values of its fields together with derivatives of those vanishing at `t`.
    pub fn evaluation_space(&self, v: &DMatrix<f64>, j: &DMatrix<f64>, jp: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.dim();
        if v.ncols() == 0 {
            return DMatrix::zeros(m, 0);
        }
        let jv = j * v;
        let scale = linalg::singular_values(&(jp * v)).first().copied().unwrap_or(1.0).max(
            linalg::singular_values(&jv).first().copied().unwrap_or(0.0),
        );
        let ker = linalg::null_space_abs(&jv, SINGULAR_ACCEPT * scale.max(1e-300));
        let mut parts = jv.clone();
        if ker.ncols() > 0 {
            let extra = jp * v * ker;
            parts = DMatrix::from_fn(m, jv.ncols() + extra.ncols(), |r, c| {
                if c < jv.ncols() {
                    jv[(r, c)]
                } else {
                    extra[(r, c - jv.ncols())]
                }
            });
        }
        linalg::range_basis(&parts, SINGULAR_ACCEPT)
    }

    /// Per-sample Riccati traces and eigenvalues as CSV.
    pub fn riccati_csv(&self) -> String {
        let m = self.dim();
        let mut out = String::from("t,domain_dim,trace");
        for a in 0..m {
            out.push_str(&format!(",eig{a}"));
        }
        out.push('\n');
        for i in 1..self.prop.path.samples.len() {
            let s = self.riccati_at_sample(i);
            let eig = linalg::sym_eigenvalues(&s.restricted);
            out.push_str(&format!("{:.10},{},{:.10}", s.t, s.domain.ncols(), s.restricted.trace()));
            for a in 0..m {
                match eig.get(a) {
                    Some(e) => out.push_str(&format!(",{e:.10}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Riccati operator from `(J, J')` at one time.
pub fn riccati_from(t: f64, j: &DMatrix<f64>, jp: &DMatrix<f64>) -> RiccatiOperator {
    let m = j.nrows();
    let scale = linalg::singular_values(j)
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(linalg::singular_values(jp).first().copied().unwrap_or(0.0));
    let svd = linalg::svd(j);
    let u = svd.u.clone();
    let thr = SINGULAR_ACCEPT * scale.max(1e-300);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > thr).collect();
    let domain = linalg::columns(m, &keep.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let pinv = svd.pseudo_inverse(thr);
    let s_full = jp * pinv;
    let restricted = domain.transpose() * &s_full * &domain;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let matrix = &domain * &restricted * domain.transpose();
    let asym = jp.transpose() * j;
    let asymmetry = (&asym - asym.transpose()).abs().max();
    RiccatiOperator {
        t,
        domain,
        matrix,
        restricted,
        asymmetry,
    }
}

fn span_of_kernels<'a>(m: usize, recs: impl Iterator<Item = &'a SingularTimeRecord>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = recs.flat_map(|r| r.kernel.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect();
    if cols.is_empty() {
        return DMatrix::zeros(m, 0);
    }
    linalg::range_basis(&linalg::columns(m, &cols), RANK_REL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;
    use crate::manifold::{MetricChart, MetricFamily};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn s3() -> MetricChart {
        MetricChart::new(
            "s3",
            MetricFamily::SphereStereo { dim: 3, curvature: 1.0 },
            vec![(-40.0, 40.0); 3],
        )
    }

    fn s3_path(len: f64) -> Arc<JacobiPropagator> {
        let c = s3();
        let x0 = DVector::from_vec(vec![0.2, -0.1, 0.3]);
        let v = DVector::from_vec(vec![0.3, 0.5, -0.2]);
        let v0 = c.normalize(&x0, &v);
        let p = integrate_geodesic(&c, &x0, &v0, len, 1e-8).unwrap();
        assert!(p.completed());
        JacobiPropagator::new(p).unwrap()
    }

    #[test]
    fn sine_field_on_round_sphere() {
        let prop = s3_path(3.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let f = integrate_jacobi(&prop, &DVector::zeros(2), &e1);
        for (i, t) in f.t.iter().enumerate() {
            assert_abs_diff_eq!(f.j[i][0], t.sin(), epsilon = 1e-7);
            assert_abs_diff_eq!(f.j[i][1], 0.0, epsilon = 1e-7);
        }
        assert!(jacobi_residual(&prop, &f) < 1e-7);
    }

    #[test]
    fn symplectic_form_of_sine_and_cosine() {
        let prop = s3_path(2.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let a = integrate_jacobi(&prop, &DVector::zeros(2), &e1);
        let b = integrate_jacobi(&prop, &e1, &DVector::zeros(2));
        for i in 0..a.t.len() {
            assert_abs_diff_eq!(symplectic_form(&a, &b, i), 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(symplectic_form(&a, &a, i), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn point_family_on_sphere_has_double_conjugate_point_at_pi() {
        let prop = s3_path(2.0 * PI - 0.2);
        let fam = LagrangianFamily::from_point(prop);
        let recs = fam.singular_times(0.0, 2.0 * PI - 0.2).unwrap();
        let acc: Vec<_> = recs.iter().filter(|r| r.accepted).collect();
        assert_eq!(acc.len(), 1, "{recs:?}");
        assert_abs_diff_eq!(acc[0].t, PI, epsilon = 1e-6);
        assert_eq!(acc[0].multiplicity, 2);
        assert_eq!(fam.full_index_space(0.0, 2.0 * PI - 0.2).unwrap().ncols(), 2);
        assert!(fam.omega_defect() < 1e-9);
    }

    #[test]
    fn riccati_is_cot_on_sphere() {
        let prop = s3_path(3.1);
        let fam = LagrangianFamily::from_point(prop);
        for &t in &[0.01, 0.5, 1.3, 2.2, 3.1] {
            let s = fam.riccati(t).unwrap();
            assert!(s.is_full());
            let expect = DMatrix::identity(2, 2) / t.tan();
            assert!((s.matrix - expect).abs().max() < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn flat_family_is_regular() {
        let c = MetricChart::new("flat", MetricFamily::Euclidean { dim: 3 }, vec![(-10.0, 10.0); 3]);
        let p = integrate_geodesic(&c, &DVector::zeros(3), &DVector::from_vec(vec![0.0, 1.0, 0.0]), 3.0, 1e-8).unwrap();
        let fam = LagrangianFamily::from_point(JacobiPropagator::new(p).unwrap());
        assert!(fam.singular_times(0.0, 3.0).unwrap().is_empty());
        let s = fam.riccati(2.0).unwrap();
        assert!((s.matrix - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-10);
        let f = integrate_jacobi(&fam.prop, &DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0]));
        let last = f.t.len() - 1;
        assert_abs_diff_eq!(f.j[last][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.j[last][1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn riccati_rejects_vectors_outside_domain() {
        let prop = s3_path(PI + 0.1);
        let fam = LagrangianFamily::from_point(prop);
        let s = fam.riccati(PI).unwrap();
        assert_eq!(s.domain.ncols(), 0);
        let r = s.apply(&DVector::from_vec(vec![1.0, 0.0]), 1e-6);
        assert!(matches!(r, Err(GeomError::IllDefined { .. })));
    }
}
