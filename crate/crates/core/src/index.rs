//! Morse index of geodesics: endpoint case by conjugate counting, endmanifold
//! case by the Hingston–Kalish formula, and a broken-Jacobi-field oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::jacobi::{JacobiPropagator, LagrangianFamily, SingularTimeRecord};
use crate::linalg::{self, inner, norm_g, RANK_REL_TOL};
use crate::submanifold::{lagrangian_from_submanifold, SubmanifoldPatch};

/// Lengths within this distance of a singular time are rejected unless the
/// degenerate mode is requested.
pub const SINGULAR_BAND: f64 = 1e-3;
/// Accepted endpoint/orthogonality defect of a connector.
pub const ENDPOINT_TOL: f64 = 1e-6;
/// Relative eigenvalue threshold of the oracle (on the L²-scaled matrix).
pub const ORACLE_REL_TOL: f64 = 1e-8;
/// Maximal segment length of the oracle's first subdivision.
const MAX_SEGMENT: f64 = 0.25;
const MAX_SEGMENTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexOptions {
    /// Accept lengths at (or within the band of) a singular time.
    pub allow_degenerate: bool,
    pub band: f64,
    /// Initial oracle subdivision; `None` picks one from the length.
    pub oracle_segments: Option<usize>,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            allow_degenerate: false,
            band: SINGULAR_BAND,
            oracle_segments: None,
        }
    }
}

/// A geodesic from `N` to `Ñ` together with the data at both ends.
#[derive(Debug, Clone)]
pub struct EndmanifoldSetup {
    pub prop: Arc<JacobiPropagator>,
    pub start: SubmanifoldPatch,
    pub start_param: Vec<f64>,
    pub start_component: usize,
    pub end: SubmanifoldPatch,
    pub end_param: Vec<f64>,
    pub end_component: usize,
    /// Tangent space of `N` at `γ(0)` in path-frame components (orthonormal columns).
    pub p0: DMatrix<f64>,
    /// Shape operator of `N` for `γ'(0)` in the `p0` basis.
    pub s0: DMatrix<f64>,
    /// Tangent space of `Ñ` at `γ(b)` in path-frame components.
    pub q: DMatrix<f64>,
    /// Shape operator of `Ñ` for `γ'(b)` in the `q` basis.
    pub s_end: DMatrix<f64>,
    /// Distance of `γ(b)` from `Ñ(end_param)` and angle between `γ'(b)` and the normal space.
    pub end_defect: (f64, f64),
}

fn orthonormal_polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    let svd = linalg::svd(m);
    svd.u * svd.v_t
}

impl EndmanifoldSetup {
    pub fn new(
        prop: Arc<JacobiPropagator>,
        start: SubmanifoldPatch,
        start_param: Vec<f64>,
        start_component: usize,
        end: SubmanifoldPatch,
        end_param: Vec<f64>,
        end_component: usize,
    ) -> Result<Self> {
        let path = &prop.path;
        let path = if path.completed() {
            path
        } else {
            return Err(GeomError::LeftDomain { t: path.t_max });
        };
        let fs = start.frame(&start_param, start_component)?;
        let s0sample = path.start();
        let p0 = s0sample.frame.transpose() * &fs.metric * &fs.tangent;
        let s0 = start.shape_operator_in(&start_param, start_component, &fs, &s0sample.v)?.as_matrix();

        let fe = end.frame(&end_param, end_component)?;
        let last = path.end();
        let g = &fe.metric;
        let dist = norm_g(g, &(&last.x - &fe.point));
        // unit normal closest to γ'(b)
        let nu_raw = &fe.normal * (fe.normal.transpose() * g * &last.v);
        let nn = norm_g(g, &nu_raw);
        let angle = if nn == 0.0 { std::f64::consts::FRAC_PI_2 } else { (nn / norm_g(g, &last.v)).min(1.0).acos() };
        if dist > ENDPOINT_TOL || angle > ENDPOINT_TOL {
            return Err(GeomError::Precondition(format!(
                "geodesic does not end orthogonally on `{}` (distance {dist:.2e}, angle {angle:.2e})",
                end.name
            )));
        }
        let nu = nu_raw / nn;
        let s_end = end.shape_operator_in(&end_param, end_component, &fe, &nu)?.as_matrix();
        let q = orthonormal_polar(&(last.frame.transpose() * g * &fe.tangent));
        Ok(EndmanifoldSetup {
            prop,
            start,
            start_param,
            start_component,
            end,
            end_param,
            end_component,
            p0,
            s0,
            q,
            s_end,
            end_defect: (dist, angle),
        })
    }

    pub fn length(&self) -> f64 {
        self.prop.t_max()
    }

    pub fn family(&self) -> Result<LagrangianFamily> {
        lagrangian_from_submanifold(self.prop.clone(), &self.start, &self.start_param, self.start_component)
    }
}

/// Endpoint-case index.
#[derive(Debug, Clone, Serialize)]
pub struct EndpointIndex {
    pub length: f64,
    pub index: usize,
    /// The endpoint is conjugate (within the band).
    pub degenerate: bool,
    pub endpoint_multiplicity: usize,
    pub conjugate_times: Vec<SingularTimeRecord>,
    /// Near-grazing minima that were not counted.
    pub flagged: usize,
}

/// Index of a geodesic between fixed endpoints: conjugate points in `(0, b)` with multiplicity.
pub fn index_endpoint(prop: Arc<JacobiPropagator>, band: f64) -> Result<EndpointIndex> {
    let b = prop.t_max();
    let fam = LagrangianFamily::from_point(prop);
    let recs = fam.singular_times(0.0, b)?;
    let flagged = recs.iter().filter(|r| !r.accepted).count();
    let accepted: Vec<SingularTimeRecord> = recs.into_iter().filter(|r| r.accepted).collect();
    let index = accepted.iter().filter(|r| r.t < b - band).map(|r| r.multiplicity).sum();
    let endpoint_multiplicity: usize = accepted.iter().filter(|r| r.t >= b - band).map(|r| r.multiplicity).sum();
    Ok(EndpointIndex {
        length: b,
        index,
        degenerate: endpoint_multiplicity > 0,
        endpoint_multiplicity,
        conjugate_times: accepted,
        flagged,
    })
}

/// The form `A(J₁, J₂) = <J₁'(b) - S J₁(b), J₂(b)>` on `Λ_{N,Ñ}`.
#[derive(Debug, Clone, Serialize)]
pub struct AForm {
    /// Coefficient basis (columns) of `Λ_{N,Ñ}` inside `Λ_N`.
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Asymmetry before symmetrization.
    pub asymmetry: f64,
    pub rank_threshold: f64,
    /// Smallest normalized singular value of the constraint counted as nonzero.
    pub extraction_gap: f64,
    pub eigen_threshold: f64,
}

impl AForm {
    pub fn index(&self) -> usize {
        self.eigenvalues.iter().filter(|&&e| e < -self.eigen_threshold).count()
    }

    pub fn nullity(&self) -> usize {
        self.eigenvalues.iter().filter(|&&e| e.abs() <= self.eigen_threshold).count()
    }
}

/// A-form from the Lagrangian values at `b`.
pub fn a_form_from(setup: &EndmanifoldSetup, j: &DMatrix<f64>, jp: &DMatrix<f64>) -> AForm {
    let m = j.nrows();
    let qperp = linalg::complement(&setup.q, m);
    let constraint = qperp.transpose() * j;
    let scale = linalg::singular_values(j)
        .first()
        .copied()
        .unwrap_or(1.0)
        .max(linalg::singular_values(jp).first().copied().unwrap_or(0.0));
    let thr = RANK_REL_TOL * scale;
    let basis = if constraint.nrows() == 0 {
        DMatrix::identity(m, m)
    } else {
        linalg::null_space_abs(&constraint, thr)
    };
    let sv = linalg::singular_values(&constraint);
    let extraction_gap = sv.iter().copied().filter(|&s| s > thr).fold(f64::INFINITY, f64::min) / scale;
    let jb = j * &basis;
    let jpb = jp * &basis;
    let shape_term = &setup.q * &setup.s_end * setup.q.transpose() * &jb;
    let raw = jb.transpose() * (jpb - shape_term);
    let asymmetry = (&raw - raw.transpose()).abs().max();
    let sym = (&raw + raw.transpose()) * 0.5;
    let eigenvalues = linalg::sym_eigenvalues(&sym);
    let eig_scale = eigenvalues.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let d = sym.nrows();
    AForm {
        dim: basis.ncols(),
        basis,
        matrix: (0..d).map(|r| (0..d).map(|c| sym[(r, c)]).collect()).collect(),
        eigenvalues,
        asymmetry,
        rank_threshold: RANK_REL_TOL,
        extraction_gap: if extraction_gap.is_finite() { extraction_gap } else { 0.0 },
        eigen_threshold: RANK_REL_TOL * eig_scale,
    }
}

pub fn a_form(setup: &EndmanifoldSetup) -> Result<AForm> {
    let fam = setup.family()?;
    let (j, jp) = fam.values_at_sample(fam.prop.path.samples.len() - 1);
    Ok(a_form_from(setup, &j, &jp))
}

/// All terms of the endmanifold index computation.
#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub start: String,
    pub end: String,
    pub length: f64,
    pub index_a: usize,
    pub nullity_a: usize,
    pub a_form: AForm,
    /// Focal points of `Λ_N` in `(0, b]` with multiplicity.
    pub focal_count: usize,
    /// Focal points in `(0, b)`.
    pub focal_open: usize,
    pub focal_times: Vec<SingularTimeRecord>,
    /// `dim K_b(b)`.
    pub dim_k_b: usize,
    /// `dim (K_b(b) ∩ TÑ^⊥)`.
    pub correction: usize,
    /// `dim Proj_TÑ K_b(b)`.
    pub m_t: usize,
    pub total_hk: usize,
    pub total_oracle: Option<OracleResult>,
    /// `focal(0,b] - correction = focal(0,b) + m_T`.
    pub identity_holds: bool,
    pub endpoint_focal: bool,
    pub rank_threshold: f64,
    pub intersection_tol: f64,
    pub end_defect: (f64, f64),
}

impl IndexReport {
    pub fn agrees_with_oracle(&self) -> Option<bool> {
        self.total_oracle.as_ref().map(|o| o.index == self.total_hk)
    }
}

/// Hingston–Kalish index: `Index A + focal(0, b] - dim(K_b(b) ∩ TÑ^⊥)`.
pub fn index_endmanifold_hk(setup: &EndmanifoldSetup, options: IndexOptions) -> Result<IndexReport> {
    let fam = setup.family()?;
    let b = setup.length();
    let recs = fam.singular_times(0.0, b)?;
    let accepted: Vec<SingularTimeRecord> = recs.into_iter().filter(|r| r.accepted).collect();
    let near_end: Vec<&SingularTimeRecord> = accepted.iter().filter(|r| r.t >= b - options.band).collect();
    if !near_end.is_empty() && !options.allow_degenerate {
        return Err(GeomError::Precondition(format!(
            "length {b} lies within {} of the focal time {}; request the degenerate mode",
            options.band, near_end[0].t
        )));
    }
    let focal_open: usize = accepted.iter().filter(|r| r.t < b - options.band).map(|r| r.multiplicity).sum();
    let (j, jp) = fam.values_at_sample(fam.prop.path.samples.len() - 1);
    let m = j.nrows();

    let k_b = if near_end.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        let kernels: Vec<DVector<f64>> = near_end
            .iter()
            .flat_map(|r| r.kernel.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        linalg::range_basis(&(&jp * linalg::columns(m, &kernels)), RANK_REL_TOL)
    };
    let dim_k_b = k_b.ncols();
    let endpoint_mult: usize = near_end.iter().map(|r| r.multiplicity).sum();
    let focal_count = focal_open + endpoint_mult;
    let qperp = linalg::complement(&setup.q, m);
    let intersection_tol = RANK_REL_TOL;
    let correction = linalg::intersection_dim(&k_b, &qperp, intersection_tol);
    let m_t = if dim_k_b == 0 || setup.q.ncols() == 0 {
        0
    } else {
        // cosines of principal angles with TÑ; sin ≤ sqrt(2 tol) matches the intersection test
        let cut = (2.0 * intersection_tol).sqrt();
        linalg::singular_values(&(setup.q.transpose() * &k_b))
            .into_iter()
            .filter(|&s| s > cut)
            .count()
    };
    let identity_holds = focal_count as i64 - correction as i64 == (focal_open + m_t) as i64;

    let af = a_form_from(setup, &j, &jp);
    let index_a = af.index();
    let total = index_a + focal_count - correction.min(focal_count);
    Ok(IndexReport {
        start: setup.start.name.clone(),
        end: setup.end.name.clone(),
        length: b,
        index_a,
        nullity_a: af.nullity(),
        a_form: af,
        focal_count,
        focal_open,
        focal_times: accepted,
        dim_k_b,
        correction,
        m_t,
        total_hk: total,
        total_oracle: None,
        identity_holds,
        endpoint_focal: endpoint_mult > 0,
        rank_threshold: RANK_REL_TOL,
        intersection_tol,
        end_defect: setup.end_defect,
    })
}

/// HK report with the oracle attached.
pub fn index_report(setup: &EndmanifoldSetup, options: IndexOptions) -> Result<IndexReport> {
    let mut rep = index_endmanifold_hk(setup, options)?;
    rep.total_oracle = Some(index_form_oracle(setup, options.oracle_segments)?);
    Ok(rep)
}

/// Outcome of the discretized second-variation count.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub index: usize,
    /// Some eigenvalue lies within the threshold of zero.
    pub degenerate: bool,
    pub segments: usize,
    /// Index on twice as many segments (must agree).
    pub refined_index: usize,
    pub stable: bool,
    pub min_abs_eigenvalue: f64,
    pub eigen_threshold: f64,
    pub dimension: usize,
}

/// Quadratic form of the index form on broken Jacobi fields over `segments`
/// equal subintervals, L²-scaled so that eigenvalues approximate those of the
/// index form. Returns `None` when a subinterval contains a conjugate point.
fn oracle_matrix(
    prop: &JacobiPropagator,
    p0: &DMatrix<f64>,
    s0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    s_end: &DMatrix<f64>,
    segments: usize,
) -> Result<Option<DMatrix<f64>>> {
    let m = prop.frame_dim();
    let b = prop.t_max();
    let h = b / segments as f64;
    let l0 = p0.ncols();
    let l1 = q.ncols();
    let nodes = segments + 1;
    let mut full = DMatrix::zeros(m * nodes, m * nodes);
    let mut prev = prop.phi_at(0.0)?;
    for i in 0..segments {
        let next = prop.phi_at(if i + 1 == segments { b } else { (i + 1) as f64 * h })?;
        let inv = match prev.clone().try_inverse() {
            Some(v) => v,
            None => return Ok(None),
        };
        let step = &next * inv;
        let a = step.view((0, 0), (m, m)).into_owned();
        let bb = step.view((0, m), (m, m)).into_owned();
        let d = step.view((m, m), (m, m)).into_owned();
        let sv = linalg::singular_values(&bb);
        if sv.last().copied().unwrap_or(0.0) < 1e-3 * h {
            return Ok(None);
        }
        let binv = bb.try_inverse().expect("checked invertible");
        let uu = &binv * &a;
        let ww = &d * &binv;
        let uu = (&uu + uu.transpose()) * 0.5;
        let ww = (&ww + ww.transpose()) * 0.5;
        let (r0, r1) = (i * m, (i + 1) * m);
        let mut blk = full.view_mut((r0, r0), (m, m));
        blk += &uu;
        let mut blk = full.view_mut((r1, r1), (m, m));
        blk += &ww;
        let mut blk = full.view_mut((r0, r1), (m, m));
        blk -= &binv;
        let mut blk = full.view_mut((r1, r0), (m, m));
        blk -= binv.transpose();
        prev = next;
    }
    // boundary terms +<S^N V, V>(0) - <S^Ñ V, V>(b)
    let sf0 = p0 * s0 * p0.transpose();
    let sf1 = q * s_end * q.transpose();
    let mut blk = full.view_mut((0, 0), (m, m));
    blk += &sf0;
    let last = segments * m;
    let mut blk = full.view_mut((last, last), (m, m));
    blk -= &sf1;

    // restriction to V(0) ∈ TN, V(b) ∈ TÑ, with L² weights
    let dim = l0 + (segments - 1) * m + l1;
    let mut basis = DMatrix::zeros(m * nodes, dim);
    let w_end = (0.5 * h).sqrt();
    let w_mid = h.sqrt();
    basis.view_mut((0, 0), (m, l0)).copy_from(&(p0 / w_end));
    for i in 1..segments {
        let c = l0 + (i - 1) * m;
        basis.view_mut((i * m, c), (m, m)).copy_from(&(DMatrix::identity(m, m) / w_mid));
    }
    basis.view_mut((last, dim - l1), (m, l1)).copy_from(&(q / w_end));
    let red = basis.transpose() * full * &basis;
    Ok(Some((&red + red.transpose()) * 0.5))
}

fn count_negative(mat: &DMatrix<f64>) -> (usize, f64, f64) {
    let eig = linalg::sym_eigenvalues(mat);
    let scale = eig.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let tau = ORACLE_REL_TOL * scale;
    let neg = eig.iter().filter(|&&e| e < -tau).count();
    let min_abs = eig.iter().fold(f64::INFINITY, |a, e| a.min(e.abs()));
    (neg, min_abs, tau)
}

fn oracle_core(
    prop: &JacobiPropagator,
    p0: &DMatrix<f64>,
    s0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    s_end: &DMatrix<f64>,
    segments: Option<usize>,
) -> Result<OracleResult> {
    let b = prop.t_max();
    let mut k = segments.unwrap_or(((b / MAX_SEGMENT).ceil() as usize).max(8));
    let mut last: Option<(usize, usize, f64, f64, usize)> = None;
    while k <= MAX_SEGMENTS {
        match oracle_matrix(prop, p0, s0, q, s_end, k)? {
            None => {
                last = None;
            }
            Some(mat) => {
                let (neg, min_abs, tau) = count_negative(&mat);
                if let Some((k_prev, neg_prev, min_prev, tau_prev, dim_prev)) = last {
                    let stable = neg_prev == neg;
                    if stable {
                        return Ok(OracleResult {
                            index: neg_prev,
                            degenerate: min_prev <= tau_prev,
                            segments: k_prev,
                            refined_index: neg,
                            stable,
                            min_abs_eigenvalue: min_prev,
                            eigen_threshold: tau_prev,
                            dimension: dim_prev,
                        });
                    }
                }
                last = Some((k, neg, min_abs, tau, mat.nrows()));
            }
        }
        k *= 2;
    }
    match last {
        Some((k, neg, min_abs, tau, dim)) => Ok(OracleResult {
            index: neg,
            degenerate: min_abs <= tau,
            segments: k,
            refined_index: neg,
            stable: false,
            min_abs_eigenvalue: min_abs,
            eigen_threshold: tau,
            dimension: dim,
        }),
        None => Err(GeomError::NoConvergence("oracle subdivision never separated conjugate points".into())),
    }
}

/// Index of the second variation on broken Jacobi fields, auto-refined until `m → 2m` agrees.
pub fn index_form_oracle(setup: &EndmanifoldSetup, segments: Option<usize>) -> Result<OracleResult> {
    oracle_core(&setup.prop, &setup.p0, &setup.s0, &setup.q, &setup.s_end, segments)
}

/// Oracle for fixed endpoints.
pub fn index_form_oracle_endpoint(prop: &JacobiPropagator, segments: Option<usize>) -> Result<OracleResult> {
    let m = prop.frame_dim();
    let z = DMatrix::zeros(m, 0);
    let e = DMatrix::zeros(0, 0);
    oracle_core(prop, &z, &e, &z, &e, segments)
}

/// `<γ'(b), T>` defect helper used by scenario builders.
pub fn orthogonality_defect(g: &DMatrix<f64>, v: &DVector<f64>, tangent: &DMatrix<f64>) -> f64 {
    tangent.column_iter().map(|c| inner(g, &c.into_owned(), v).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;
    use crate::manifold::{MetricChart, MetricFamily};
    use std::f64::consts::PI;

    fn s3() -> MetricChart {
        MetricChart::new("s3", MetricFamily::SphereStereo { dim: 3, curvature: 1.0 }, vec![(-40.0, 40.0); 3])
    }

    fn equator_path(len: f64) -> Arc<JacobiPropagator> {
        // the great circle |y| = 1 in the (y1, y2) plane, unit speed: v = (1 + |y|^2)/2 = 1
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let v0 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        JacobiPropagator::new(integrate_geodesic(&s3(), &x0, &v0, len, 1e-8).unwrap()).unwrap()
    }

    #[test]
    fn endpoint_index_on_round_sphere() {
        assert_eq!(index_endpoint(equator_path(1.5 * PI), SINGULAR_BAND).unwrap().index, 2);
        assert_eq!(index_endpoint(equator_path(0.5 * PI), SINGULAR_BAND).unwrap().index, 0);
        let at_pi = index_endpoint(equator_path(PI), SINGULAR_BAND).unwrap();
        assert!(at_pi.degenerate);
        assert_eq!(at_pi.endpoint_multiplicity, 2);
    }

    #[test]
    fn oracle_endpoint_matches() {
        let o = index_form_oracle_endpoint(&equator_path(1.5 * PI), Some(8)).unwrap();
        assert_eq!(o.index, 2);
        assert!(o.stable);
        let o = index_form_oracle_endpoint(&equator_path(0.5 * PI), None).unwrap();
        assert_eq!(o.index, 0);
    }

    #[test]
    fn flat_segment_has_index_zero() {
        let chart = MetricChart::new("flat", MetricFamily::Euclidean { dim: 3 }, vec![(-10.0, 10.0); 3]);
        let x0 = DVector::zeros(3);
        let v0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let prop = JacobiPropagator::new(integrate_geodesic(&chart, &x0, &v0, 5.0, 1e-8).unwrap()).unwrap();
        assert_eq!(index_endpoint(prop.clone(), SINGULAR_BAND).unwrap().index, 0);
        assert_eq!(index_form_oracle_endpoint(&prop, None).unwrap().index, 0);
    }
}
