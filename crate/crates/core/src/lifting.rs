//! Lifting curves and homotopies through the normal exponential map.
//!
//! Points of the normal bundle are `(u, η)`: a base parameter of the patch and
//! normal-frame components. Lifts are built sample by sample by inverting
//! `exp⊥` locally with damped Newton, starting from the previous sample, the
//! numerical counterpart of lifting through local diffeomorphisms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::geodesic::GeodesicPath;
use crate::linalg;
use crate::submanifold::{exp_normal, halton_points, normal_geodesic, segment_length, SubmanifoldPatch};

/// Norm below which a bundle point counts as lying on the zero section.
pub const ZERO_SECTION_TOL: f64 = 1e-8;
/// Residual of the local inversion, in the ambient metric.
pub const NEWTON_TOL: f64 = 1e-11;
/// Distance below which a point counts as lying on the patch.
pub const ON_PATCH_TOL: f64 = 1e-6;
/// Largest allowed matching defect at the split point of a homotopy row.
pub const MATCH_TOL: f64 = 1e-6;
/// Continuity tolerance of a lifted grid, as a multiple of the source resolution.
pub const CONTINUITY_FACTOR: f64 = 5.0;
const MAX_HALVINGS: usize = 12;
const NEWTON_ITERS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalBundlePoint {
    pub param: Vec<f64>,
    pub component: usize,
    pub eta: Vec<f64>,
    pub norm: f64,
}

impl NormalBundlePoint {
    pub fn zero(param: Vec<f64>, component: usize, codim: usize) -> Self {
        NormalBundlePoint {
            param,
            component,
            eta: vec![0.0; codim],
            norm: 0.0,
        }
    }

    fn from_z(z: &DVector<f64>, l: usize, component: usize) -> Self {
        let eta: Vec<f64> = z.rows(l, z.len() - l).iter().copied().collect();
        NormalBundlePoint {
            param: z.rows(0, l).iter().copied().collect(),
            component,
            norm: eta.iter().map(|x| x * x).sum::<f64>().sqrt(),
            eta,
        }
    }

    fn z(&self) -> DVector<f64> {
        DVector::from_iterator(self.param.len() + self.eta.len(), self.param.iter().chain(&self.eta).copied())
    }

    pub fn on_zero_section(&self) -> bool {
        self.norm <= ZERO_SECTION_TOL
    }

    /// Image under the normal exponential map.
    pub fn project(&self, patch: &SubmanifoldPatch, tol: f64) -> Result<DVector<f64>> {
        exp_normal(patch, &self.param, self.component, &DVector::from_vec(self.eta.clone()), tol)
    }
}

/// Distance between two bundle points in the product of the induced metric
/// (at `a`) and the Euclidean fiber metric.
pub fn bundle_distance(patch: &SubmanifoldPatch, a: &NormalBundlePoint, b: &NormalBundlePoint) -> Result<f64> {
    if a.component != b.component {
        return Ok(f64::INFINITY);
    }
    let du = DVector::from_iterator(a.param.len(), a.param.iter().zip(&b.param).map(|(x, y)| y - x));
    let base = if du.is_empty() {
        0.0
    } else {
        let fr = patch.frame(&a.param, a.component)?;
        let induced = fr.raw_tangent.transpose() * &fr.metric * &fr.raw_tangent;
        linalg::norm_g(&induced, &du)
    };
    let de: f64 = a.eta.iter().zip(&b.eta).map(|(x, y)| (y - x) * (y - x)).sum();
    Ok((base * base + de).sqrt())
}

/// A discretized curve in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCurve {
    pub t: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl SampledCurve {
    pub fn new(t: Vec<f64>, points: Vec<DVector<f64>>) -> Result<Self> {
        if t.len() != points.len() || t.is_empty() {
            return Err(GeomError::param("curve", "needs matching, nonempty t and point lists"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeomError::param("curve", "t must be strictly increasing"));
        }
        Ok(SampledCurve {
            t,
            points: points.iter().map(|p| p.iter().copied().collect()).collect(),
        })
    }

    pub fn from_path(path: &GeodesicPath) -> Self {
        SampledCurve {
            t: path.samples.iter().map(|s| s.t).collect(),
            points: path.samples.iter().map(|s| s.x.iter().copied().collect()).collect(),
        }
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        DVector::from_vec(self.points[i].clone())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn reversed(&self) -> SampledCurve {
        let b = *self.t.last().expect("nonempty");
        SampledCurve {
            t: self.t.iter().rev().map(|t| b - t).collect(),
            points: self.points.iter().rev().cloned().collect(),
        }
    }

    fn slice(&self, lo: usize, hi: usize) -> SampledCurve {
        SampledCurve {
            t: self.t[lo..=hi].to_vec(),
            points: self.points[lo..=hi].to_vec(),
        }
    }

    /// Cumulative arclength at each sample.
    pub fn arclength(&self, patch: &SubmanifoldPatch) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.len() {
            acc += segment_length(&patch.ambient, &self.point(i - 1), &self.point(i));
            out.push(acc);
        }
        out
    }

    pub fn length(&self, patch: &SubmanifoldPatch) -> f64 {
        *self.arclength(patch).last().expect("nonempty")
    }

    fn max_step(&self, patch: &SubmanifoldPatch) -> f64 {
        (1..self.len())
            .map(|i| segment_length(&patch.ambient, &self.point(i - 1), &self.point(i)))
            .fold(0.0, f64::max)
    }
}

/// Nearest point of a patch to `p`: parameter, component and distance.
#[derive(Debug, Clone, Serialize)]
pub struct PatchLocation {
    pub param: Vec<f64>,
    pub component: usize,
    pub distance: f64,
}

/// Locate the foot point of `p` on the patch by Gauss–Newton from `guess`
/// (or from the best point of a coarse Halton search).
pub fn locate_on_patch(patch: &SubmanifoldPatch, p: &DVector<f64>, guess: Option<(&[f64], usize)>) -> Result<PatchLocation> {
    let g = patch.ambient.metric_checked(p)?;
    let starts: Vec<(Vec<f64>, usize)> = match guess {
        Some((u, c)) => vec![(u.to_vec(), c)],
        None => (0..patch.components())
            .flat_map(|c| halton_points(&patch.param_box, 64).into_iter().map(move |u| (u, c)))
            .collect(),
    };
    let dist2 = |u: &[f64], c: usize| -> Option<f64> {
        let x = patch.embed(u, c).ok()?;
        let r = &x - p;
        Some(linalg::inner(&g, &r, &r))
    };
    let (mut u, comp) = starts
        .into_iter()
        .filter_map(|(u, c)| dist2(&u, c).map(|d| (d, u, c)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, u, c)| (u, c))
        .ok_or_else(|| GeomError::NoConvergence("no patch point inside the chart".into()))?;
    if patch.dim_sub > 0 {
        for _ in 0..50 {
            let fr = patch.frame(&u, comp)?;
            let r = &fr.point - p;
            let jt_g = fr.raw_tangent.transpose() * &g;
            let lhs = &jt_g * &fr.raw_tangent;
            let rhs = -(&jt_g * &r);
            let Some(step) = lhs.lu().solve(&rhs) else {
                break;
            };
            let cur = linalg::inner(&g, &r, &r);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-8 {
                let un: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                if dist2(&un, comp).is_some_and(|d| d < cur) {
                    u = un;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || step.norm() < 1e-14 {
                break;
            }
        }
    }
    let x = patch.embed(&u, comp)?;
    Ok(PatchLocation {
        distance: segment_length(&patch.ambient, &x, p),
        param: u,
        component: comp,
    })
}

struct Inverter<'a> {
    patch: &'a SubmanifoldPatch,
    component: usize,
    tol: f64,
}

impl Inverter<'_> {
    fn l(&self) -> usize {
        self.patch.dim_sub
    }

    fn image(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let l = self.l();
        let u: Vec<f64> = z.rows(0, l).iter().copied().collect();
        exp_normal(self.patch, &u, self.component, &z.rows(l, z.len() - l).into_owned(), self.tol)
    }

    fn jacobian(&self, z: &DVector<f64>, fz: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = z.len();
        let mut jac = DMatrix::zeros(fz.len(), n);
        for i in 0..n {
            let h = 1e-7 * z[i].abs().max(1.0);
            let mut zp = z.clone();
            zp[i] += h;
            jac.set_column(i, &((self.image(&zp)? - fz) / h));
        }
        Ok(jac)
    }

    /// Solve `exp⊥(z) = target` from `z0`; `None` when Newton does not converge.
    fn solve(&self, z0: &DVector<f64>, target: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        let g = self.patch.ambient.metric_checked(target)?;
        let resid = |fz: &DVector<f64>| linalg::norm_g(&g, &(fz - target));
        let mut z = z0.clone();
        let Ok(mut fz) = self.image(&z) else {
            return Ok(None);
        };
        let mut r = resid(&fz);
        let mut jac: Option<DMatrix<f64>> = None;
        for _ in 0..NEWTON_ITERS {
            if r <= NEWTON_TOL {
                return Ok(Some(z));
            }
            let j = match jac.take() {
                Some(j) => j,
                None => self.jacobian(&z, &fz)?,
            };
            let Some(step) = j.clone().lu().solve(&(target - &fz)) else {
                return Ok(None);
            };
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-4 {
                let zn = &z + &step * t;
                if let Ok(fn_) = self.image(&zn) {
                    let rn = resid(&fn_);
                    if rn < r {
                        accepted = Some((zn, fn_, rn));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((zn, fn_, rn)) = accepted else {
                return Ok(None);
            };
            // keep the chord Jacobian while the contraction is fast
            if t == 1.0 && rn < 0.1 * r {
                jac = Some(j);
            }
            z = zn;
            fz = fn_;
            r = rn;
        }
        Ok((r <= NEWTON_TOL).then_some(z))
    }
}

/// A lift of a sampled curve to the normal bundle.
#[derive(Debug, Clone, Serialize)]
pub struct LiftedCurve {
    pub t: Vec<f64>,
    pub samples: Vec<NormalBundlePoint>,
    #[serde(skip)]
    pub source: SampledCurve,
    pub source_length: f64,
    pub max_norm: f64,
    /// Largest ambient distance between `exp⊥` of a lifted sample and the source.
    pub round_trip: f64,
    /// Largest bundle step divided by the matching source step.
    pub max_step_ratio: f64,
    /// Intermediate targets inserted by step halving.
    pub halvings: usize,
}

impl LiftedCurve {
    pub fn to_csv(&self) -> String {
        lift_rows_csv(&[(0.0, self)])
    }
}

fn lift_rows_csv(rows: &[(f64, &LiftedCurve)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::from("s,t,norm\n");
    };
    let l = first.samples[0].param.len();
    let c = first.samples[0].eta.len();
    let mut out = String::from("s,t");
    for a in 0..l {
        out.push_str(&format!(",u{a}"));
    }
    for a in 0..c {
        out.push_str(&format!(",eta{a}"));
    }
    out.push_str(",norm\n");
    for (s, row) in rows {
        for (t, p) in row.t.iter().zip(&row.samples) {
            out.push_str(&format!("{s:.10},{t:.10}"));
            for v in p.param.iter().chain(&p.eta) {
                out.push_str(&format!(",{v:.12}"));
            }
            out.push_str(&format!(",{:.12}\n", p.norm));
        }
    }
    out
}

/// Lift `curve` starting at `start` (a zero-section point over `curve(0)`).
///
/// When `tube_radius` is given, the curve must be shorter than it. Newton
/// failures are retried on halved steps; persistent failure is reported as a
/// lift obstruction.
pub fn lift_curve(
    patch: &SubmanifoldPatch,
    curve: &SampledCurve,
    start: &NormalBundlePoint,
    tube_radius: Option<f64>,
    tol: f64,
) -> Result<LiftedCurve> {
    if start.param.len() != patch.dim_sub || start.eta.len() != patch.codim() {
        return Err(GeomError::param("start", "dimensions do not match the patch"));
    }
    let base = start.project(patch, tol)?;
    let gap = segment_length(&patch.ambient, &base, &curve.point(0));
    if gap > ON_PATCH_TOL {
        return Err(GeomError::Precondition(format!(
            "curve starts at distance {gap:.3e} from the image of the start point"
        )));
    }
    let length = curve.length(patch);
    if let Some(r) = tube_radius {
        if length >= r {
            return Err(GeomError::Precondition(format!(
                "curve length {length:.6} is not below the tube radius {r:.6}"
            )));
        }
    }
    let inv = Inverter {
        patch,
        component: start.component,
        tol,
    };
    let l = patch.dim_sub;
    let mut zs: Vec<DVector<f64>> = vec![start.z()];
    let mut halvings = 0;
    for i in 1..curve.len() {
        let a = curve.point(i - 1);
        let b = curve.point(i);
        let prev = zs[i - 1].clone();
        let guess = if i >= 2 { &prev * 2.0 - &zs[i - 2] } else { prev.clone() };
        if let Some(z) = inv.solve(&guess, &b)? {
            zs.push(z);
            continue;
        }
        // halve the step: walk through intermediate targets on the coordinate segment
        let mut done = None;
        for depth in 1..=MAX_HALVINGS {
            let parts = 1usize << depth;
            let mut z = prev.clone();
            let mut ok = true;
            for p in 1..=parts {
                let target = &a + (&b - &a) * (p as f64 / parts as f64);
                match inv.solve(&z, &target)? {
                    Some(zn) => z = zn,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                halvings += parts - 1;
                done = Some(z);
                break;
            }
        }
        match done {
            Some(z) => zs.push(z),
            None => {
                return Err(GeomError::LiftObstruction {
                    index: i,
                    t: curve.t[i],
                    detail: format!("local inversion of exp⊥ failed after {MAX_HALVINGS} halvings"),
                })
            }
        }
    }
    let samples: Vec<NormalBundlePoint> = zs.iter().map(|z| NormalBundlePoint::from_z(z, l, start.component)).collect();
    let mut round_trip: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let img = s.project(patch, tol)?;
        round_trip = round_trip.max(segment_length(&patch.ambient, &img, &curve.point(i)));
        if i > 0 {
            let src = segment_length(&patch.ambient, &curve.point(i - 1), &curve.point(i));
            let d = bundle_distance(patch, &samples[i - 1], s)?;
            if src > 1e-12 {
                ratio = ratio.max(d / src);
            }
        }
    }
    Ok(LiftedCurve {
        t: curve.t.clone(),
        max_norm: samples.iter().map(|s| s.norm).fold(0.0, f64::max),
        samples,
        source: curve.clone(),
        source_length: length,
        round_trip,
        max_step_ratio: ratio,
        halvings,
    })
}

/// A homotopy `H(t, s)` sampled on a grid: one curve per `s` value, all on the same `t` grid.
#[derive(Debug, Clone, Serialize)]
pub struct HomotopyGrid {
    pub s: Vec<f64>,
    pub rows: Vec<SampledCurve>,
}

impl HomotopyGrid {
    pub fn new(s: Vec<f64>, rows: Vec<SampledCurve>) -> Result<Self> {
        if s.len() != rows.len() || rows.is_empty() {
            return Err(GeomError::param("homotopy", "needs one row per s value"));
        }
        let n = rows[0].len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(GeomError::param("homotopy", "rows must share a t grid of at least two samples"));
        }
        Ok(HomotopyGrid { s, rows })
    }

    /// Grid from a closure `H(t, s)` evaluated on `nt × ns` uniform samples of `[0, b] × [0, 1]`.
    pub fn sample(b: f64, nt: usize, ns: usize, h: impl Fn(f64, f64) -> DVector<f64>) -> Result<Self> {
        let ts: Vec<f64> = (0..nt).map(|i| b * i as f64 / (nt - 1) as f64).collect();
        let ss: Vec<f64> = (0..ns).map(|j| j as f64 / (ns - 1).max(1) as f64).collect();
        let rows = ss
            .iter()
            .map(|&s| SampledCurve::new(ts.clone(), ts.iter().map(|&t| h(t, s)).collect()))
            .collect::<Result<Vec<_>>>()?;
        HomotopyGrid::new(ss, rows)
    }

    fn resolution(&self, patch: &SubmanifoldPatch) -> f64 {
        let mut m: f64 = 0.0;
        for (j, row) in self.rows.iter().enumerate() {
            m = m.max(row.max_step(patch));
            if j > 0 {
                for i in 0..row.len() {
                    m = m.max(segment_length(&patch.ambient, &self.rows[j - 1].point(i), &row.point(i)));
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftedHomotopy {
    pub s: Vec<f64>,
    /// Pasted lift, one row per `s`.
    pub rows: Vec<LiftedCurve>,
    pub row_lengths: Vec<f64>,
    /// Sample index at which each row is split.
    pub split: Vec<usize>,
    /// Distance between left and right lifts at the split point, per row.
    pub defects: Vec<f64>,
    pub match_tol: f64,
    pub first_mismatch: Option<f64>,
    /// Largest bundle distance between grid neighbours of the pasted lift.
    pub max_adjacent: f64,
    pub continuity_tol: f64,
    pub continuous: bool,
    /// Largest norm over the three sides that must lie on the zero section.
    pub boundary_norm: f64,
    pub pass: bool,
}

impl LiftedHomotopy {
    pub fn to_csv(&self) -> String {
        let rows: Vec<(f64, &LiftedCurve)> = self.s.iter().copied().zip(&self.rows).collect();
        lift_rows_csv(&rows)
    }
}

/// Lift a homotopy whose three sides `t = 0`, `s = 0`, `t = b` lie on `N` by
/// lifting each row from both ends up to its half-length point and pasting.
pub fn lift_homotopy(patch: &SubmanifoldPatch, grid: &HomotopyGrid, focal_radius: f64, tol: f64) -> Result<LiftedHomotopy> {
    let lengths: Vec<f64> = grid.rows.iter().map(|r| r.length(patch)).collect();
    if let Some((j, len)) = lengths.iter().enumerate().find(|(_, &len)| len >= 2.0 * focal_radius) {
        return Err(GeomError::Precondition(format!(
            "row s = {} has length {len:.6}, not below 2·foc = {:.6}",
            grid.s[j],
            2.0 * focal_radius
        )));
    }
    let codim = patch.codim();
    // foot points of the row ends, followed continuously in s
    let mut ends: Vec<(PatchLocation, PatchLocation)> = Vec::with_capacity(grid.rows.len());
    for (j, row) in grid.rows.iter().enumerate() {
        let prev = ends.last();
        let a = locate_on_patch(patch, &row.point(0), prev.map(|(a, _)| (a.param.as_slice(), a.component)))?;
        let b = locate_on_patch(patch, &row.point(row.len() - 1), prev.map(|(_, b)| (b.param.as_slice(), b.component)))?;
        for (loc, side) in [(&a, "start"), (&b, "end")] {
            if loc.distance > ON_PATCH_TOL {
                return Err(GeomError::Precondition(format!(
                    "{side} of row s = {} lies at distance {:.3e} from the patch",
                    grid.s[j], loc.distance
                )));
            }
        }
        ends.push((a, b));
    }
    let halves: Vec<Result<(usize, LiftedCurve, LiftedCurve)>> = grid
        .rows
        .par_iter()
        .zip(ends.par_iter())
        .map(|(row, (a, b))| {
            let arc = row.arclength(patch);
            let half = arc.last().expect("nonempty") / 2.0;
            let k = arc.iter().position(|&x| x >= half).unwrap_or(row.len() - 1).max(1).min(row.len() - 1);
            let left = lift_curve(patch, &row.slice(0, k), &NormalBundlePoint::zero(a.param.clone(), a.component, codim), None, tol)?;
            let right = lift_curve(
                patch,
                &row.slice(k, row.len() - 1).reversed(),
                &NormalBundlePoint::zero(b.param.clone(), b.component, codim),
                None,
                tol,
            )?;
            Ok((k, left, right))
        })
        .collect();
    let mut rows = Vec::with_capacity(grid.rows.len());
    let mut split = Vec::new();
    let mut defects = Vec::new();
    let mut first_mismatch = None;
    for (j, h) in halves.into_iter().enumerate() {
        let (k, left, right) = h?;
        let l_end = left.samples.last().expect("nonempty");
        let r_end = right.samples.last().expect("nonempty");
        let defect = bundle_distance(patch, l_end, r_end)?;
        if defect > MATCH_TOL && first_mismatch.is_none() {
            first_mismatch = Some(grid.s[j]);
        }
        defects.push(defect);
        split.push(k);
        let row = &grid.rows[j];
        let mut samples = left.samples.clone();
        samples.extend(right.samples.iter().rev().skip(1).cloned());
        rows.push(LiftedCurve {
            t: row.t.clone(),
            max_norm: samples.iter().map(|s| s.norm).fold(0.0, f64::max),
            samples,
            source: row.clone(),
            source_length: lengths[j],
            round_trip: left.round_trip.max(right.round_trip),
            max_step_ratio: left.max_step_ratio.max(right.max_step_ratio),
            halvings: left.halvings + right.halvings,
        });
    }
    let continuity_tol = CONTINUITY_FACTOR * grid.resolution(patch);
    let mut max_adjacent: f64 = 0.0;
    for (j, row) in rows.iter().enumerate() {
        for i in 0..row.samples.len() {
            if i > 0 {
                max_adjacent = max_adjacent.max(bundle_distance(patch, &row.samples[i - 1], &row.samples[i])?);
            }
            if j > 0 {
                max_adjacent = max_adjacent.max(bundle_distance(patch, &rows[j - 1].samples[i], &row.samples[i])?);
            }
        }
    }
    let mut boundary_norm: f64 = rows[0].samples.iter().map(|p| p.norm).fold(0.0, f64::max);
    for row in &rows {
        boundary_norm = boundary_norm.max(row.samples[0].norm).max(row.samples.last().expect("nonempty").norm);
    }
    let continuous = max_adjacent <= continuity_tol;
    Ok(LiftedHomotopy {
        s: grid.s.clone(),
        rows,
        row_lengths: lengths,
        split,
        defects,
        match_tol: MATCH_TOL,
        pass: first_mismatch.is_none() && continuous && boundary_norm <= ON_PATCH_TOL,
        first_mismatch,
        max_adjacent,
        continuity_tol,
        continuous,
        boundary_norm,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NoLiftReport {
    pub length: f64,
    pub focal_radius: f64,
    /// `b < 2 foc_N`; otherwise the report is diagnostic only.
    pub hypothesis: bool,
    /// Time `c ∈ (b/2, foc_N)` at which the fiber-line identity is checked.
    pub c: Option<f64>,
    pub norm_at_c: Option<f64>,
    /// Largest deviation of the lift from `t·γ'(0)` on `[0, c]`.
    pub fiber_line_defect: Option<f64>,
    pub endpoint_norm: Option<f64>,
    /// Set when the lift could not be continued (typically at a focal point).
    pub obstruction: Option<String>,
    pub certified: bool,
}

fn orthogonality_angle(patch: &SubmanifoldPatch, loc: &PatchLocation, v: &DVector<f64>) -> Result<f64> {
    let fr = patch.frame(&loc.param, loc.component)?;
    let nv = linalg::norm_g(&fr.metric, v);
    let tang = fr.tangent.transpose() * &fr.metric * v;
    Ok((tang.norm() / nv).min(1.0).asin())
}

/// Lift the normal geodesic `γ` from the zero section and show that its
/// endpoint is off the zero section although `γ(b) ∈ N`.
pub fn no_lift_certificate(
    patch: &SubmanifoldPatch,
    param: &[f64],
    component: usize,
    eta: &DVector<f64>,
    length: f64,
    focal_radius: f64,
    tol: f64,
) -> Result<NoLiftReport> {
    let path = normal_geodesic(patch, param, component, eta, length, tol)?.require_complete()?;
    let end = path.end();
    let loc = locate_on_patch(patch, &end.x, None)?;
    if loc.distance > ON_PATCH_TOL {
        return Err(GeomError::Precondition(format!("γ(b) lies at distance {:.3e} from N", loc.distance)));
    }
    let angle = orthogonality_angle(patch, &loc, &end.v)?;
    if angle > ON_PATCH_TOL {
        return Err(GeomError::Precondition(format!("γ'(b) makes angle {angle:.3e} with the normal space")));
    }
    let hypothesis = length < 2.0 * focal_radius;
    let curve = SampledCurve::from_path(&path);
    let start = NormalBundlePoint::zero(param.to_vec(), component, patch.codim());
    let unit = eta / eta.norm();
    let mut report = NoLiftReport {
        length,
        focal_radius,
        hypothesis,
        c: None,
        norm_at_c: None,
        fiber_line_defect: None,
        endpoint_norm: None,
        obstruction: None,
        certified: false,
    };
    let lift = match lift_curve(patch, &curve, &start, None, tol) {
        Ok(l) => l,
        Err(GeomError::LiftObstruction { t, detail, .. }) => {
            report.obstruction = Some(format!("t = {t:.6}: {detail}"));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let c_target = 0.5 * (length / 2.0 + focal_radius.min(length));
    let ic = lift.t.iter().position(|&t| t >= c_target).unwrap_or(lift.t.len() - 1);
    let mut defect: f64 = 0.0;
    for (t, p) in lift.t.iter().zip(&lift.samples).take(ic + 1) {
        let du: f64 = p.param.iter().zip(param).map(|(a, b)| (a - b) * (a - b)).sum();
        let de: f64 = p.eta.iter().zip(unit.iter()).map(|(a, b)| (a - t * b) * (a - t * b)).sum();
        defect = defect.max((du + de).sqrt());
    }
    let end_norm = lift.samples.last().expect("nonempty").norm;
    report.c = Some(lift.t[ic]);
    report.norm_at_c = Some(lift.samples[ic].norm);
    report.fiber_line_defect = Some(defect);
    report.endpoint_norm = Some(end_norm);
    report.certified = hypothesis && end_norm > ZERO_SECTION_TOL;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScanStatus {
    Applicable,
    Inapplicable { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct LongHomotopyReport {
    pub row_lengths: Vec<f64>,
    pub max_length: f64,
    pub argmax_s: f64,
    pub bound: f64,
    /// Grid-resolution slack subtracted from the bound.
    pub slack: f64,
    pub status: ScanStatus,
    pub pass: bool,
}

/// Longest row of a homotopy from a normal geodesic (row `s = 0`) to a curve
/// in `N` (row `s = 1`) with endpoints on `N`, against `2 foc_N`.
pub fn long_homotopy_scan(patch: &SubmanifoldPatch, grid: &HomotopyGrid, focal_radius: f64) -> Result<LongHomotopyReport> {
    let mut prev: Option<(PatchLocation, PatchLocation)> = None;
    for (j, row) in grid.rows.iter().enumerate() {
        let a = locate_on_patch(patch, &row.point(0), prev.as_ref().map(|(a, _)| (a.param.as_slice(), a.component)))?;
        let b = locate_on_patch(
            patch,
            &row.point(row.len() - 1),
            prev.as_ref().map(|(_, b)| (b.param.as_slice(), b.component)),
        )?;
        if a.distance > ON_PATCH_TOL || b.distance > ON_PATCH_TOL {
            return Err(GeomError::Precondition(format!("row s = {} does not end on N", grid.s[j])));
        }
        prev = Some((a, b));
    }
    let last = grid.rows.last().expect("nonempty");
    let mut guess: Option<PatchLocation> = None;
    for i in 0..last.len() {
        let loc = locate_on_patch(patch, &last.point(i), guess.as_ref().map(|g| (g.param.as_slice(), g.component)))?;
        if loc.distance > ON_PATCH_TOL {
            return Err(GeomError::Precondition(format!("final row leaves N at sample {i}")));
        }
        guess = Some(loc);
    }
    let lengths: Vec<f64> = grid.rows.iter().map(|r| r.length(patch)).collect();
    let (jmax, &max_length) = lengths
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let slack = grid.resolution(patch);
    let bound = 2.0 * focal_radius;

    // the first row must be a nonconstant geodesic leaving N orthogonally
    let first = &grid.rows[0];
    let p0 = first.point(0);
    let p1 = first.point(1);
    let loc0 = locate_on_patch(patch, &p0, None)?;
    let dir = &p1 - &p0;
    let angle = orthogonality_angle(patch, &loc0, &dir)?;
    let mut on_n = true;
    let mut g: Option<PatchLocation> = Some(loc0);
    for i in 0..first.len() {
        let loc = locate_on_patch(patch, &first.point(i), g.as_ref().map(|x| (x.param.as_slice(), x.component)))?;
        if loc.distance > ON_PATCH_TOL {
            on_n = false;
            break;
        }
        g = Some(loc);
    }
    let status = if on_n {
        ScanStatus::Inapplicable {
            reason: "the initial curve lies in N, so it is not a normal geodesic".into(),
        }
    } else if angle > 10.0 * dir.norm() {
        ScanStatus::Inapplicable {
            reason: format!("the initial curve leaves N at angle {angle:.3e} from the normal space"),
        }
    } else {
        ScanStatus::Applicable
    };
    Ok(LongHomotopyReport {
        pass: status == ScanStatus::Applicable && max_length >= bound - slack,
        row_lengths: lengths,
        max_length,
        argmax_s: grid.s[jmax],
        bound,
        slack,
        status,
    })
}

/// A curve starting on `N` together with the zero-section point over its start.
#[derive(Debug, Clone)]
pub struct ShortCurve {
    pub start: NormalBundlePoint,
    pub curve: SampledCurve,
}

/// Seeded random curves `x0 + τa + τ²b` in chart coordinates, starting at
/// random points of the patch and rescaled to a random length in
/// `[0.1·max_len, max_len]`.
pub fn random_short_curves(patch: &SubmanifoldPatch, count: usize, seed: u64, max_len: f64, samples: usize) -> Result<Vec<ShortCurve>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = patch.ambient.dim();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 20 * count + 20 {
            return Err(GeomError::NoConvergence(format!("only {} of {count} admissible curves", out.len())));
        }
        let component = rng.random_range(0..patch.components());
        let u: Vec<f64> = patch.param_box.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
        let Ok(x0) = patch.embed(&u, component) else {
            continue;
        };
        let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let target = max_len * rng.random_range(0.1..1.0);
        let ts: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();
        let build = |scale: f64| -> Result<SampledCurve> {
            SampledCurve::new(ts.clone(), ts.iter().map(|&t| &x0 + (&a * t + &b * (t * t)) * scale).collect())
        };
        let mut scale = 1.0;
        let mut curve = None;
        // the metric varies along the curve, so the rescaling is iterated
        for _ in 0..3 {
            let c = build(scale)?;
            if c.points.iter().any(|p| patch.ambient.metric_checked(&DVector::from_vec(p.clone())).is_err()) {
                curve = None;
                break;
            }
            let len = c.length(patch);
            if len <= 0.0 {
                break;
            }
            scale *= target / len;
            curve = Some(c);
        }
        let Some(_) = curve else {
            continue;
        };
        let c = build(scale)?;
        if c.points.iter().any(|p| patch.ambient.metric_checked(&DVector::from_vec(p.clone())).is_err()) || c.length(patch) > max_len {
            continue;
        }
        out.push(ShortCurve {
            start: NormalBundlePoint::zero(u, component, patch.codim()),
            curve: c,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_curve_lifts_to_its_base_point() {
        let n = zoo::patch("clifford_torus").unwrap();
        let u = vec![0.7, 2.0];
        let x = n.embed(&u, 0).unwrap();
        let c = SampledCurve::new(vec![0.0, 0.5, 1.0], vec![x.clone(), x.clone(), x]).unwrap();
        let lift = lift_curve(&n, &c, &NormalBundlePoint::zero(u.clone(), 0, 1), None, 1e-8).unwrap();
        for p in &lift.samples {
            assert!(p.on_zero_section());
            assert_abs_diff_eq!(p.param[0], u[0], epsilon = 1e-10);
            assert_abs_diff_eq!(p.param[1], u[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn normal_geodesic_lifts_to_fiber_line() {
        let n = zoo::patch("clifford_torus").unwrap();
        let u = vec![0.3, 4.0];
        let eta = DVector::from_vec(vec![1.0]);
        let path = normal_geodesic(&n, &u, 0, &eta, 0.2, 1e-8).unwrap();
        let c = SampledCurve::from_path(&path);
        let lift = lift_curve(&n, &c, &NormalBundlePoint::zero(u.clone(), 0, 1), Some(std::f64::consts::FRAC_PI_4), 1e-8).unwrap();
        for (t, p) in lift.t.iter().zip(&lift.samples) {
            assert_abs_diff_eq!(p.eta[0], *t, epsilon = 1e-8);
            assert_abs_diff_eq!(p.norm, *t, epsilon = 1e-8);
        }
        assert!(lift.round_trip < 1e-6);
    }

    #[test]
    fn long_rows_are_rejected() {
        let n = zoo::patch("equator_s2_in_s3").unwrap();
        let u = vec![1.0, 0.0];
        let eta = DVector::from_vec(vec![1.0]);
        let path = normal_geodesic(&n, &u, 0, &eta, 3.2, 1e-8).unwrap();
        let row = SampledCurve::from_path(&path);
        let grid = HomotopyGrid::new(vec![0.0], vec![row]).unwrap();
        assert!(matches!(
            lift_homotopy(&n, &grid, std::f64::consts::FRAC_PI_2, 1e-8),
            Err(GeomError::Precondition(_))
        ));
    }

    #[test]
    fn locate_recovers_parameters() {
        let n = zoo::patch("equator_s2_in_s3").unwrap();
        let u = [1.1, 0.4];
        let loc = locate_on_patch(&n, &n.embed(&u, 0).unwrap(), None).unwrap();
        assert!(loc.distance < 1e-10);
        let x = n.embed(&loc.param, 0).unwrap();
        assert!((x - n.embed(&u, 0).unwrap()).norm() < 1e-9);
    }
}
