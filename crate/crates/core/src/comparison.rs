//! Riccati comparison checks, the low-trace subspace construction, and the
//! quantitative hypothesis checkers for the connectivity and distance theorems.
//!
//! Every check works along one concrete geodesic or on sampled data; nothing
//! here certifies a global curvature bound.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::geodesic::{integrate_geodesic, Termination};
use crate::jacobi::{riccati_from, GramMode, JacobiPropagator, LagrangianFamily, SingularTimeRecord};
use crate::linalg;
use crate::manifold::MetricChart;
use crate::submanifold::{
    distance, focal_radius, min_admissible_r, normal_samples, trace_extremes, unit_directions, AdmissibleRadius,
    DistanceReport, NormalSampling, RadiusBound, SubmanifoldPatch, DEFAULT_HORIZON,
};

/// Default tolerance on comparison margins.
pub const COMPARISON_TOL: f64 = 1e-5;
/// Samples whose cot argument is within this distance of 0 or π are excluded.
pub const COT_GUARD: f64 = 1e-3;
/// Slack allowed when certifying `Ric_k ≥ k` by sampling.
pub const RIC_TOL: f64 = 1e-6;
/// Margin required for strict inequalities between radii.
pub const STRICT_TOL: f64 = 1e-4;
/// Slack of the distance bound `dist ≤ r + r̃`.
pub const FRANKEL_TOL: f64 = 1e-4;
/// Singular times this close past the end of a closed interval still count.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Hypothesis slack for traces of numerically computed shape operators.
pub const TRACE_TOL: f64 = 1e-6;
const KERNEL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Applicability {
    Applicable,
    Inapplicable { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inapplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    /// `k cot(t + s0)`
    ShiftedCot { s0: f64 },
    /// `k cot(t)`
    Cot,
}

impl Bound {
    fn argument(&self, t: f64) -> f64 {
        match self {
            Bound::ShiftedCot { s0 } => t + s0,
            Bound::Cot => t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSample {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub dim_h: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub bound: Bound,
    pub k: usize,
    pub interval: (f64, f64),
    pub samples: Vec<ComparisonSample>,
    /// Times skipped by the cot guard or because `H(t)` was too small.
    pub excluded: Vec<f64>,
    pub worst_margin: Option<f64>,
    pub max_abs_margin: Option<f64>,
    pub pass: bool,
    pub tolerance: f64,
    pub status: Applicability,
    pub ric_k_min: f64,
    /// First time in the interval where a vanishing field lies outside `V`.
    pub full_index_until: Option<f64>,
    /// Times at which `dim H(t)` differs from the previous sample.
    pub dim_h_changes: Vec<f64>,
    /// For `dim V ≤ n - 1 - k`: whether the full-index interval ends by `π`.
    pub short_geodesic: Option<bool>,
}

impl ComparisonReport {
    fn empty(bound: Bound, k: usize, interval: (f64, f64), ric_k_min: f64) -> Self {
        ComparisonReport {
            scenario: String::new(),
            bound,
            k,
            interval,
            samples: Vec::new(),
            excluded: Vec::new(),
            worst_margin: None,
            max_abs_margin: None,
            pass: false,
            tolerance: COMPARISON_TOL,
            status: Applicability::Applicable,
            ric_k_min,
            full_index_until: None,
            dim_h_changes: Vec::new(),
            short_geodesic: None,
        }
    }

    fn inapplicable(mut self, reason: impl Into<String>) -> Self {
        self.status = Applicability::Inapplicable { reason: reason.into() };
        self.pass = false;
        self
    }

    pub fn named(mut self, scenario: impl Into<String>) -> Self {
        self.scenario = scenario.into();
        self
    }

    pub fn verdict(&self) -> Verdict {
        match (&self.status, self.pass) {
            (Applicability::Inapplicable { .. }, _) => Verdict::Inapplicable,
            (_, true) => Verdict::Pass,
            (_, false) => Verdict::Fail,
        }
    }

    fn finish(&mut self) {
        self.worst_margin = self.samples.iter().map(|s| s.margin).reduce(f64::min);
        self.max_abs_margin = self.samples.iter().map(|s| s.margin.abs()).reduce(f64::max);
        self.pass = self.worst_margin.is_some_and(|w| w >= -self.tolerance) && self.short_geodesic != Some(false);
    }

    /// Per-sample trace, bound and margin as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,t,lhs,rhs,margin,dim_h\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{:.10},{:.10},{:.10},{:.10},{}\n",
                self.scenario, s.t, s.lhs, s.rhs, s.margin, s.dim_h
            ));
        }
        out
    }
}

/// Smallest `ric_k(γ')` over the path samples with `t ≤ hi`.
///
/// Evaluated from the chart curvature at each sample, independent of the
/// propagated frame, so frame drift does not leak into the certificate.
pub fn ric_k_along(prop: &JacobiPropagator, k: usize, hi: f64) -> Result<f64> {
    let m = prop.frame_dim();
    if k < 1 || k > m {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {m}]")));
    }
    let path = &prop.path;
    let mut worst = f64::INFINITY;
    for s in path.samples.iter().filter(|s| s.t <= hi + 1e-12) {
        let v = path.chart.normalize(&s.x, &s.v);
        worst = worst.min(path.chart.ric_k(&s.x, &v, k)?);
    }
    Ok(worst)
}

/// Λ_N of the distance sphere of radius `s0` about the start point: `J(0) = sin(s0) I`, `J'(0) = cos(s0) I`.
pub fn distance_sphere_family(prop: Arc<JacobiPropagator>, s0: f64) -> Result<LagrangianFamily> {
    if !(s0 > 0.0 && s0 < PI) {
        return Err(GeomError::param("s0", format!("{s0} not in (0, π)")));
    }
    let m = prop.frame_dim();
    let id = DMatrix::<f64>::identity(m, m);
    LagrangianFamily::new(
        prop,
        &(&id * s0.sin()),
        &(&id * s0.cos()),
        GramMode::Submanifold {
            name: format!("distance sphere of radius {s0}"),
            shape: (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 / s0.tan() } else { 0.0 }).collect()).collect(),
        },
    )
}

fn orthonormal(w: &DMatrix<f64>, what: &'static str, m: usize) -> Result<DMatrix<f64>> {
    if w.nrows() != m {
        return Err(GeomError::param(what, format!("expected {m} rows, got {}", w.nrows())));
    }
    let b = linalg::range_basis(w, linalg::RANK_REL_TOL);
    if b.ncols() < w.ncols() {
        return Err(GeomError::param(what, "columns are linearly dependent"));
    }
    Ok(b)
}

fn accepted_records(fam: &LagrangianFamily) -> Result<Vec<SingularTimeRecord>> {
    Ok(fam
        .singular_times(0.0, fam.prop.t_max())?
        .into_iter()
        .filter(|r| r.accepted)
        .collect())
}

/// First accepted singular time in `(0, hi]` whose kernel is not contained in `v`.
fn full_index_failure(recs: &[SingularTimeRecord], v: &DMatrix<f64>, hi: f64) -> Option<f64> {
    recs.iter()
        .filter(|r| r.t <= hi + BOUNDARY_TOL)
        .find(|r| !linalg::contained_in(&r.kernel, v, KERNEL_TOL))
        .map(|r| r.t)
}

fn check_interval(fam: &LagrangianFamily, interval: (f64, f64)) -> Result<()> {
    let (lo, hi) = interval;
    if !(lo >= 0.0 && hi > lo) {
        return Err(GeomError::param("interval", format!("[{lo}, {hi}] is not a valid interval")));
    }
    if hi > fam.prop.t_max() + 1e-9 {
        return Err(GeomError::Precondition(format!(
            "interval ends at {hi}, beyond the path length {}",
            fam.prop.t_max()
        )));
    }
    Ok(())
}

/// Shared sampling loop: `trace(t, J, J')` returns the trace on `H(t)` and its dimension.
fn sample_bound(
    report: &mut ComparisonReport,
    fam: &LagrangianFamily,
    lo: f64,
    hi: f64,
    trace: impl Fn(f64, &DMatrix<f64>, &DMatrix<f64>) -> Option<(f64, usize)>,
) {
    let k = report.k as f64;
    let mut last_dim = None;
    for (i, s) in fam.prop.path.samples.iter().enumerate() {
        if s.t < lo - 1e-12 || s.t > hi + 1e-12 {
            continue;
        }
        let arg = report.bound.argument(s.t);
        if arg <= COT_GUARD || arg >= PI - COT_GUARD {
            report.excluded.push(s.t);
            continue;
        }
        let (j, jp) = fam.values_at_sample(i);
        let Some((lhs, dim_h)) = trace(s.t, &j, &jp) else {
            report.excluded.push(s.t);
            continue;
        };
        if last_dim.is_some_and(|d| d != dim_h) {
            report.dim_h_changes.push(s.t);
        }
        last_dim = Some(dim_h);
        let rhs = k / arg.tan();
        report.samples.push(ComparisonSample {
            t: s.t,
            lhs,
            rhs,
            margin: rhs - lhs,
            dim_h,
        });
    }
}

/// Check `Tr S_t|_{H(t)} ≤ k cot(t + s0)` where `H(t)` is orthogonal to the
/// evaluation of `V = {J : J(0) ⊥ W0}`.
///
/// `w0` holds `k` frame-space columns at `t = 0`. The report is inapplicable
/// when `Ric_k ≥ k` fails along the path, when the trace hypothesis fails at
/// `t = 0`, or when `V` is not of full index on the interval.
pub fn verify_ricci_comparison(
    fam: &LagrangianFamily,
    w0: &DMatrix<f64>,
    s0: f64,
    interval: (f64, f64),
) -> Result<ComparisonReport> {
    check_interval(fam, interval)?;
    if !(s0 > 0.0 && s0 < PI) {
        return Err(GeomError::param("s0", format!("{s0} not in (0, π)")));
    }
    let m = fam.dim();
    let w0 = orthonormal(w0, "W0", m)?;
    let k = w0.ncols();
    let (lo, hi) = interval;
    let ric = ric_k_along(&fam.prop, k, hi)?;
    let report = ComparisonReport::empty(Bound::ShiftedCot { s0 }, k, interval, ric);
    if ric < k as f64 - RIC_TOL {
        return Ok(report.inapplicable(format!("ric_{k} = {ric:.6} < {k} along the geodesic")));
    }

    let (j0, jp0) = fam.values_at_sample(0);
    let s_start = riccati_from(0.0, &j0, &jp0);
    let mut tr0 = 0.0;
    for c in w0.column_iter() {
        let c = c.into_owned();
        tr0 += c.dot(&s_start.apply(&c, 1e-6)?);
    }
    let bound0 = k as f64 / s0.tan();
    if tr0 > bound0 + TRACE_TOL {
        return Ok(report.inapplicable(format!("Tr S_0|W0 = {tr0:.6} exceeds k cot(s0) = {bound0:.6}")));
    }

    let wj = w0.transpose() * &j0;
    let v = linalg::null_space_abs(&wj, 1e-9);
    let recs = accepted_records(fam)?;
    let mut report = report;
    let failure = full_index_failure(&recs, &v, hi);
    report.full_index_until = failure;
    // a failure at the very end of the interval only truncates it
    if let Some(t) = failure.filter(|&t| t < hi - COT_GUARD) {
        return Ok(report.inapplicable(format!("V is not of full index: a field outside V vanishes at t = {t:.8}")));
    }
    let stop = failure.map_or(hi, |t| hi.min(t - COT_GUARD));

    sample_bound(&mut report, fam, lo, stop, |t, j, jp| {
        let h = linalg::complement(&fam.evaluation_space(&v, j, jp), m);
        let s = riccati_from(t, j, jp);
        Some(((h.transpose() * &s.matrix * &h).trace(), h.ncols()))
    });
    report.finish();
    Ok(report)
}

/// Check `Tr S_t|_H ≤ k cot(t)` for every `k`-dimensional `H ⊥ V(t)`, using the
/// maximizing `H` (the `k` largest eigenvalues of `S_t` compressed to `V(t)^⊥`).
///
/// The check runs up to the first time `V` stops being of full index. When
/// `dim V ≤ n - 1 - k` the report also records whether that happens by `π`.
pub fn verify_cot_bound(fam: &LagrangianFamily, v: &DMatrix<f64>, interval: (f64, f64), k: usize) -> Result<ComparisonReport> {
    check_interval(fam, interval)?;
    let m = fam.dim();
    if k < 1 || k > m {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {m}]")));
    }
    let v = if v.ncols() == 0 {
        DMatrix::zeros(m, 0)
    } else {
        orthonormal(v, "V", m)?
    };
    let (lo, hi) = interval;
    let ric = ric_k_along(&fam.prop, k, hi)?;
    let mut report = ComparisonReport::empty(Bound::Cot, k, interval, ric);
    if ric < k as f64 - RIC_TOL {
        return Ok(report.inapplicable(format!("ric_{k} = {ric:.6} < {k} along the geodesic")));
    }
    let recs = accepted_records(fam)?;
    let failure = full_index_failure(&recs, &v, fam.prop.t_max());
    report.full_index_until = failure;
    if v.ncols() + k <= m {
        let end = failure.unwrap_or(fam.prop.t_max());
        let reaches_pi = failure.is_some() || end >= PI - STRICT_TOL;
        report.short_geodesic = Some(!reaches_pi || end <= PI + STRICT_TOL);
    }
    let stop = failure.map_or(hi, |t| hi.min(t - COT_GUARD));
    if stop <= lo {
        return Ok(report.inapplicable(format!("V is not of full index past t = {:.8}", failure.unwrap_or(lo))));
    }
    sample_bound(&mut report, fam, lo, stop, |t, j, jp| {
        let hc = linalg::complement(&fam.evaluation_space(&v, j, jp), m);
        if hc.ncols() < k {
            return None;
        }
        let s = riccati_from(t, j, jp);
        let eig = linalg::sym_eigenvalues(&(hc.transpose() * &s.matrix * &hc));
        Some((linalg::sum_largest(&eig, k), k))
    });
    report.finish();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstCorReport {
    pub l: usize,
    pub k: usize,
    pub r: f64,
    /// Largest `Tr S_0|_W` over `k`-dimensional `W ⊂ U0`.
    pub max_trace: f64,
    pub trace_bound: f64,
    pub status: Applicability,
    pub dim_k: usize,
    pub required: usize,
    /// Accepted singular times `(t, multiplicity)` in `(0, π/2 + r]`.
    pub singular_times: Vec<(f64, usize)>,
    pub pass: bool,
}

/// Dimension of the span of fields vanishing somewhere in `(0, π/2 + r]`,
/// compared against `ℓ - k + 1` when `Tr S_0|_W ≤ k cot(π/2 - r)` on `U0`.
pub fn check_first_cor(fam: &LagrangianFamily, u0: &DMatrix<f64>, r: f64, k: usize) -> Result<FirstCorReport> {
    if !(0.0..FRAC_PI_2).contains(&r) {
        return Err(GeomError::param("r", format!("{r} not in [0, π/2)")));
    }
    let m = fam.dim();
    let u0 = orthonormal(u0, "U0", m)?;
    let l = u0.ncols();
    let horizon = FRAC_PI_2 + r;
    if fam.prop.t_max() < horizon - 1e-9 {
        return Err(GeomError::Precondition(format!(
            "geodesic length {} is shorter than π/2 + r = {horizon}",
            fam.prop.t_max()
        )));
    }
    let s0 = fam.riccati(0.0)?;
    let mut cols = Vec::with_capacity(l);
    for c in u0.column_iter() {
        cols.push(s0.apply(&c.into_owned(), 1e-6)?);
    }
    let su = u0.transpose() * linalg::columns(m, &cols);
    let (_, max_trace) = trace_extremes(&su, k)?;
    let trace_bound = k as f64 * r.tan();
    let recs: Vec<SingularTimeRecord> = accepted_records(fam)?
        .into_iter()
        .filter(|rec| rec.t <= horizon + BOUNDARY_TOL)
        .collect();
    let kernels: Vec<DVector<f64>> = recs
        .iter()
        .flat_map(|rec| rec.kernel.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    let dim_k = if kernels.is_empty() {
        0
    } else {
        linalg::range_basis(&linalg::columns(m, &kernels), linalg::RANK_REL_TOL).ncols()
    };
    let required = (l + 1).saturating_sub(k);
    let status = if max_trace <= trace_bound + TRACE_TOL {
        Applicability::Applicable
    } else {
        Applicability::Inapplicable {
            reason: format!("max Tr S_0|W = {max_trace:.6} exceeds k cot(π/2 - r) = {trace_bound:.6}"),
        }
    };
    let pass = status == Applicability::Applicable && dim_k >= required;
    Ok(FirstCorReport {
        l,
        k,
        r,
        max_trace,
        trace_bound,
        status,
        dim_k,
        required,
        singular_times: recs.iter().map(|rec| (rec.t, rec.multiplicity)).collect(),
        pass,
    })
}

/// Outcome of [`low_trace_subspace`].
#[derive(Debug, Clone)]
pub enum LowTrace {
    /// Eigenvectors (columns) with eigenvalue at most `λ`.
    Subspace {
        basis: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        rayleigh_max: f64,
        required_dim: usize,
    },
    /// A `k`-dimensional subspace with `Tr A|_W > kλ`.
    Violation { witness: DMatrix<f64>, trace: f64, bound: f64 },
}

/// If every `k`-plane has `Tr A|_W ≤ kλ`, the eigenvectors of `A` with
/// eigenvalue `≤ λ` span at least `ℓ - k + 1` dimensions; otherwise the top
/// `k` eigenvectors witness the failure.
pub fn low_trace_subspace(a: &DMatrix<f64>, k: usize, lambda: f64) -> Result<LowTrace> {
    let l = a.nrows();
    if a.ncols() != l {
        return Err(GeomError::param("A", "matrix is not square"));
    }
    if k < 1 || k > l {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {l}]")));
    }
    let (vals, vecs) = linalg::sym_eigen(a);
    let vals: Vec<f64> = vals.iter().copied().collect();
    let top = linalg::sum_largest(&vals, k);
    let bound = k as f64 * lambda;
    let slack = 1e-12 * (1.0 + a.abs().max() + lambda.abs());
    if top > bound + slack {
        return Ok(LowTrace::Violation {
            witness: vecs.columns(l - k, k).into_owned(),
            trace: top,
            bound,
        });
    }
    let keep = vals.iter().filter(|&&x| x <= lambda + slack).count().max(l + 1 - k);
    Ok(LowTrace::Subspace {
        basis: vecs.columns(0, keep).into_owned(),
        eigenvalues: vals[..keep].to_vec(),
        rayleigh_max: vals[keep - 1],
        required_dim: l + 1 - k,
    })
}

/// Predicted connectivity degree, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Connectivity {
    pub degree: i64,
    pub vacuous: bool,
}

impl Connectivity {
    fn from_raw(d: i64) -> Self {
        Connectivity {
            degree: d.max(0),
            vacuous: d <= 0,
        }
    }
}

/// Extremes of `ric_k` and of the sectional curvatures over random draws.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSampling {
    pub k: usize,
    pub draws: usize,
    /// Draws rejected because the point left the chart.
    pub rejected: usize,
    pub ric_k_min: f64,
    pub ric_k_max: f64,
    pub sec_min: f64,
    pub sec_max: f64,
}

/// `count` seeded draws of `x` uniform in the box `center ± spread` and `v`
/// uniform on the unit sphere of `g(x)`.
pub fn sample_curvature(chart: &MetricChart, center: &DVector<f64>, spread: f64, k: usize, count: usize, seed: u64) -> Result<CurvatureSampling> {
    let n = chart.dim();
    if k < 1 || k + 1 > n {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {}]", n - 1)));
    }
    if count == 0 || spread.is_nan() || spread < 0.0 {
        return Err(GeomError::param("sampling", "needs a positive count and a nonnegative spread"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CurvatureSampling {
        k,
        draws: 0,
        rejected: 0,
        ric_k_min: f64::INFINITY,
        ric_k_max: f64::NEG_INFINITY,
        sec_min: f64::INFINITY,
        sec_max: f64::NEG_INFINITY,
    };
    while out.draws < count {
        if out.rejected > 10 * count {
            return Err(GeomError::NoConvergence(format!("only {} of {count} draws stayed in the chart", out.draws)));
        }
        let x = DVector::from_fn(n, |i, _| center[i] + spread * rng.random_range(-1.0..=1.0));
        if chart.metric_checked(&x).is_err() {
            out.rejected += 1;
            continue;
        }
        let v = loop {
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            let r = v.norm();
            if r > 0.1 && r <= 1.0 {
                break chart.normalize(&x, &v);
            }
        };
        let eig = chart.curvature_operator(&x, &v)?.eigenvalues();
        let ric = linalg::sum_smallest(&eig, k);
        out.ric_k_min = out.ric_k_min.min(ric);
        out.ric_k_max = out.ric_k_max.max(ric);
        for e in eig {
            out.sec_min = out.sec_min.min(e);
            out.sec_max = out.sec_max.max(e);
        }
        out.draws += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremAReport {
    pub chart: String,
    pub n: usize,
    pub k: usize,
    pub ric_k_min: f64,
    pub conj_radius: RadiusBound,
    pub conj_direction: Option<Vec<f64>>,
    pub directions: usize,
    /// Directions whose geodesic left the chart before a conjugate point.
    pub skipped: usize,
    pub horizon: f64,
    pub hypothesis: bool,
    pub predicted: Connectivity,
}

/// Sampled check of `Ric_k ≥ k` and `conj_p > π/2` at `p`.
///
/// Directions are frame axes (both signs) plus `directions` quasi-uniform unit
/// vectors; the curvature minimum is taken over `p` and every geodesic sample.
pub fn theorem_a_check(chart: &MetricChart, p: &DVector<f64>, k: usize, directions: usize, tol: f64) -> Result<TheoremAReport> {
    let n = chart.dim();
    if k < 1 || k + 1 > n {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {}]", n - 1)));
    }
    let g = chart.metric_checked(p)?;
    let coords: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })).collect();
    let frame = linalg::columns(n, &linalg::gram_schmidt_g(&g, &[], &coords, n, 1e-6));
    let dirs: Vec<DVector<f64>> = unit_directions(n, directions).iter().map(|d| &frame * d).collect();
    let horizon = DEFAULT_HORIZON;
    let results: Vec<Result<Option<(Option<f64>, f64)>>> = dirs
        .par_iter()
        .map(|v| {
            let ric_p = chart.ric_k(p, v, k)?;
            let path = match integrate_geodesic(chart, p, v, horizon, tol) {
                Ok(path) => path,
                Err(GeomError::Domain { .. }) | Err(GeomError::LeftDomain { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let term = path.termination;
            let t_end = path.t_max;
            let prop = JacobiPropagator::new(path)?;
            let ric = ric_p.min(ric_k_along(&prop, k, t_end)?);
            let fam = LagrangianFamily::from_point(prop);
            match fam.first_singular_time(0.0, t_end)? {
                Some(rec) => Ok(Some((Some(rec.t), ric))),
                None if matches!(term, Termination::LeftDomain { .. }) => Ok(Some((None, ric))),
                None => Ok(Some((Some(horizon), ric))),
            }
        })
        .collect();
    let mut ric_min = f64::INFINITY;
    let mut best: Option<(f64, usize)> = None;
    let mut skipped = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            None => skipped += 1,
            Some((conj, ric)) => {
                ric_min = ric_min.min(ric);
                match conj {
                    None => skipped += 1,
                    Some(t) => {
                        if best.is_none_or(|(b, _)| t < b) {
                            best = Some((t, i));
                        }
                    }
                }
            }
        }
    }
    let (conj_radius, conj_direction) = match best {
        Some((t, i)) if t < horizon => (RadiusBound::Exact { value: t }, Some(dirs[i].iter().copied().collect())),
        _ => (RadiusBound::AtLeast { value: horizon }, None),
    };
    let hypothesis = ric_min >= k as f64 - RIC_TOL && conj_radius.value() > FRAC_PI_2 + STRICT_TOL;
    Ok(TheoremAReport {
        chart: chart.name.clone(),
        n,
        k,
        ric_k_min: ric_min,
        conj_radius,
        conj_direction,
        directions: dirs.len(),
        skipped,
        horizon,
        hypothesis,
        predicted: Connectivity::from_raw(n as i64 - k as i64),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremBReport {
    pub patch: String,
    pub n: usize,
    pub l: usize,
    pub k: usize,
    pub focal_radius: RadiusBound,
    pub admissible: AdmissibleRadius,
    /// Smallest `ric_k` over sampled unit normals.
    pub ric_k_min: f64,
    /// `foc_N > r` with margin [`STRICT_TOL`].
    pub condition: bool,
    pub hypothesis: bool,
    pub predicted: Connectivity,
}

/// Focal radius against the smallest admissible `r` for `N ⊂ M`.
pub fn theorem_b_check(patch: &SubmanifoldPatch, k: usize, sampling: NormalSampling, tol: f64) -> Result<TheoremBReport> {
    let n = patch.ambient.dim();
    let l = patch.dim_sub;
    let admissible = min_admissible_r(patch, k, sampling)?;
    let foc = focal_radius(patch, sampling, DEFAULT_HORIZON, tol)?;
    let mut ric_min = f64::INFINITY;
    for s in normal_samples(patch, sampling) {
        let fr = patch.frame(&s.param, s.component)?;
        let nu = &fr.normal * DVector::from_vec(s.eta.clone());
        ric_min = ric_min.min(patch.ambient.ric_k(&fr.point, &nu, k)?);
    }
    let condition = foc.radius.value() > admissible.r + STRICT_TOL;
    Ok(TheoremBReport {
        patch: patch.name.clone(),
        n,
        l,
        k,
        focal_radius: foc.radius,
        admissible,
        ric_k_min: ric_min,
        condition,
        hypothesis: condition && ric_min >= k as f64 - RIC_TOL,
        predicted: Connectivity::from_raw(2 * l as i64 - n as i64 - k as i64 + 2),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrankelReport {
    pub first: String,
    pub second: String,
    pub k: usize,
    /// `dim N + dim Ñ ≥ dim M + k - 1`
    pub dim_condition: bool,
    pub r: f64,
    pub r_tilde: f64,
    pub distance: DistanceReport,
    pub bound: f64,
    pub margin: f64,
    pub equality_gap: f64,
    pub pass: bool,
}

/// `dist(N, Ñ) ≤ r + r̃` with `r`, `r̃` the smallest admissible radii.
pub fn frankel_check(
    first: &SubmanifoldPatch,
    second: &SubmanifoldPatch,
    k: usize,
    sampling: NormalSampling,
    grid: usize,
    tol: f64,
) -> Result<FrankelReport> {
    let n = first.ambient.dim();
    if second.ambient.dim() != n {
        return Err(GeomError::param("patches", "ambient dimensions differ"));
    }
    let dim_condition = first.dim_sub + second.dim_sub + 1 >= n + k;
    let r = min_admissible_r(first, k, sampling)?.r;
    let r_tilde = min_admissible_r(second, k, sampling)?.r;
    let d = distance(first, second, grid, tol)?;
    let bound = r + r_tilde;
    Ok(FrankelReport {
        first: first.name.clone(),
        second: second.name.clone(),
        k,
        dim_condition,
        r,
        r_tilde,
        bound,
        margin: bound - d.value,
        equality_gap: (d.value - bound).abs(),
        pass: dim_condition && d.value <= bound + FRANKEL_TOL,
        distance: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submanifold::{lagrangian_from_submanifold, normal_geodesic};
    use crate::zoo;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn s3_point_family(len: f64) -> LagrangianFamily {
        let chart = zoo::chart("s3_unit").unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let path = integrate_geodesic(&chart, &x, &v, len, 1e-10).unwrap();
        LagrangianFamily::from_point(JacobiPropagator::new(path).unwrap())
    }

    fn clifford_family(len: f64) -> LagrangianFamily {
        let n = zoo::patch("clifford_torus").unwrap();
        let u = [0.4, 1.1];
        let eta = DVector::from_vec(vec![1.0]);
        let path = normal_geodesic(&n, &u, 0, &eta, len, 1e-10).unwrap();
        lagrangian_from_submanifold(JacobiPropagator::new(path).unwrap(), &n, &u, 0).unwrap()
    }

    #[test]
    fn low_trace_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        match low_trace_subspace(&a, 2, 2.0).unwrap() {
            LowTrace::Subspace { basis, rayleigh_max, .. } => {
                assert_eq!(basis.ncols(), 2);
                assert_abs_diff_eq!(basis[(0, 0)].abs() + basis[(0, 1)].abs(), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(rayleigh_max, 1.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let id = DMatrix::<f64>::identity(3, 3) * 0.7;
        match low_trace_subspace(&id, 2, 0.7).unwrap() {
            LowTrace::Subspace { basis, .. } => assert_eq!(basis.ncols(), 3),
            other => panic!("{other:?}"),
        }
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 0.0, 0.0]));
        match low_trace_subspace(&a, 1, 2.0).unwrap() {
            LowTrace::Violation { witness, trace, .. } => {
                assert_abs_diff_eq!(witness[(0, 0)].abs(), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(trace, 5.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cot_bound_is_attained_on_s3() {
        let fam = s3_point_family(PI + 0.2);
        let rep = verify_cot_bound(&fam, &DMatrix::zeros(2, 0), (1e-3, PI + 0.2), 2).unwrap();
        let w = rep.samples.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).unwrap();
        assert!(rep.pass, "{w:?}");
        assert!(rep.max_abs_margin.unwrap() < 1e-4, "{:?}", rep.max_abs_margin);
        assert_abs_diff_eq!(rep.full_index_until.unwrap(), PI, epsilon = 1e-6);
        assert_eq!(rep.short_geodesic, Some(true));
    }

    #[test]
    fn distance_sphere_comparison_is_sharp() {
        let s0 = 0.3;
        let fam = distance_sphere_family(s3_point_family(PI).prop.clone(), s0).unwrap();
        let w0 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let rep = verify_ricci_comparison(&fam, &w0, s0, (0.0, PI - s0)).unwrap();
        let w = rep.samples.iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
        assert_eq!(rep.verdict(), Verdict::Pass, "{w:?}");
        assert!(rep.max_abs_margin.unwrap() < 1e-4, "{:?}", rep.max_abs_margin);
    }

    #[test]
    fn clifford_comparison_with_plus_one_direction() {
        let fam = clifford_family(3.0 * FRAC_PI_4 + 0.1);
        let s = fam.riccati(0.0).unwrap();
        let (vals, vecs) = linalg::sym_eigen(&s.matrix);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-6);
        let w0 = vecs.columns(1, 1).into_owned();
        let rep = verify_ricci_comparison(&fam, &w0, FRAC_PI_4, (0.0, 3.0 * FRAC_PI_4)).unwrap();
        let w = rep.samples.iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
        assert_eq!(rep.verdict(), Verdict::Pass, "{w:?} {:?}", rep.full_index_until);
        assert!(rep.max_abs_margin.unwrap() < 1e-4);
        assert!(rep.dim_h_changes.is_empty());
    }

    #[test]
    fn flat_ambient_is_inapplicable() {
        let chart = zoo::chart("flat_rn").unwrap();
        let x = DVector::zeros(3);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let path = integrate_geodesic(&chart, &x, &v, 1.0, 1e-8).unwrap();
        let fam = LagrangianFamily::from_point(JacobiPropagator::new(path).unwrap());
        let rep = verify_cot_bound(&fam, &DMatrix::zeros(2, 0), (0.0, 1.0), 1).unwrap();
        assert_eq!(rep.verdict(), Verdict::Inapplicable);
    }

    #[test]
    fn first_cor_on_clifford_and_equator() {
        let fam = clifford_family(3.0 * FRAC_PI_4 + 0.05);
        let rep = check_first_cor(&fam, &DMatrix::identity(2, 2), FRAC_PI_4, 1).unwrap();
        assert_eq!((rep.dim_k, rep.required), (2, 2));
        assert!(rep.pass, "{rep:?}");

        let n = zoo::patch("equator_s2_in_s3").unwrap();
        let u = [1.2, 0.5];
        let path = normal_geodesic(&n, &u, 0, &DVector::from_vec(vec![1.0]), FRAC_PI_2 + 0.05, 1e-8).unwrap();
        let fam = lagrangian_from_submanifold(JacobiPropagator::new(path).unwrap(), &n, &u, 0).unwrap();
        let rep = check_first_cor(&fam, &DMatrix::identity(2, 2), 0.0, 1).unwrap();
        assert_eq!(rep.singular_times.len(), 1);
        assert_eq!(rep.singular_times[0].1, 2);
        assert!(rep.pass);

        assert!(matches!(
            check_first_cor(&s3_point_family(PI), &DMatrix::identity(2, 2), FRAC_PI_2, 1),
            Err(GeomError::Parameter { .. })
        ));
    }
}
