//! Unit-speed geodesics with a parallel orthonormal frame of the normal bundle.
//!
//! Integration is classical RK4 on a fixed output grid. Each grid step is split
//! into an even number of equal substeps chosen from the local size of the
//! connection, so badly conditioned regions of a chart (large Christoffels)
//! are resolved without changing the output grid. The state after half of the
//! substeps is stored as the step midpoint; Jacobi integration uses it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::linalg::{inner, norm_g};
use crate::manifold::{MetricChart, UNIT_TOL};

/// Largest grid step ever used.
pub const MAX_STEP: f64 = 0.01;
/// Target value of `step * |Γ(v, ·)|` per substep.
const SUBSTEP_SCALE: f64 = 0.1;
/// Substep counts beyond this are treated as leaving the usable chart.
const MAX_SUBSTEPS: usize = 4096;

/// Grid step associated with an integration tolerance.
pub fn step_for_tol(tol: f64) -> f64 {
    MAX_STEP.min(tol.powf(0.25))
}

/// Position, unit velocity and parallel frame (columns) at one parameter value.
#[derive(Debug, Clone)]
pub struct GeodesicSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub frame: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    LeftDomain { t: f64 },
}

#[derive(Debug, Clone)]
struct State {
    x: DVector<f64>,
    v: DVector<f64>,
    e: Option<DMatrix<f64>>,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            x: &self.x + &d.x * h,
            v: &self.v + &d.v * h,
            e: match (&self.e, &d.e) {
                (Some(e), Some(de)) => Some(e + de * h),
                _ => None,
            },
        }
    }
}

fn rhs(chart: &MetricChart, s: &State) -> Result<State> {
    let gam = chart.christoffel(&s.x)?;
    let m = gam.along(&s.v);
    Ok(State {
        x: s.v.clone(),
        v: -(&m * &s.v),
        e: s.e.as_ref().map(|e| -(&m * e)),
    })
}

fn rk4(chart: &MetricChart, s: &State, h: f64) -> Result<State> {
    let k1 = rhs(chart, s)?;
    let k2 = rhs(chart, &s.axpy(h / 2.0, &k1))?;
    let k3 = rhs(chart, &s.axpy(h / 2.0, &k2))?;
    let k4 = rhs(chart, &s.axpy(h, &k3))?;
    let mut out = s.axpy(h / 6.0, &k1);
    out = out.axpy(h / 3.0, &k2);
    out = out.axpy(h / 3.0, &k3);
    Ok(out.axpy(h / 6.0, &k4))
}

/// Number of substeps per half step for a step of length `h` starting at `s`.
fn half_substeps(chart: &MetricChart, s: &State, h: f64, conditioning: bool) -> Result<usize> {
    if !conditioning {
        return Ok(1);
    }
    let omega = chart.christoffel(&s.x)?.along(&s.v).norm();
    let m = ((h.abs() * omega) / (2.0 * SUBSTEP_SCALE)).ceil().max(1.0);
    if !m.is_finite() || m as usize > MAX_SUBSTEPS {
        return Err(GeomError::Domain {
            chart: chart.name.clone(),
            point: s.x.iter().copied().collect(),
        });
    }
    Ok(m as usize)
}

/// Advance by `h`, returning the midpoint and end states.
fn advance(chart: &MetricChart, s: &State, h: f64, conditioning: bool) -> Result<(State, State)> {
    let m = half_substeps(chart, s, h, conditioning)?;
    let dh = h / (2 * m) as f64;
    let mut cur = s.clone();
    for _ in 0..m {
        cur = rk4(chart, &cur, dh)?;
    }
    let mid = cur.clone();
    for _ in 0..m {
        cur = rk4(chart, &cur, dh)?;
    }
    Ok((mid, cur))
}

/// Integration settings shared by every geodesic computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub step: f64,
    /// Subdivide steps where the connection is large.
    pub conditioning: bool,
}

impl Integrator {
    pub fn from_tol(tol: f64) -> Self {
        Integrator {
            step: step_for_tol(tol),
            conditioning: true,
        }
    }
}

/// A discretized unit-speed geodesic carrying a parallel orthonormal frame of `γ'^⊥`.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub chart: MetricChart,
    pub samples: Vec<GeodesicSample>,
    /// `midpoints[i]` lies halfway between `samples[i]` and `samples[i + 1]`.
    pub midpoints: Vec<GeodesicSample>,
    pub t_max: f64,
    pub tol: f64,
    pub integrator: Integrator,
    pub termination: Termination,
}

fn to_sample(t: f64, s: State) -> GeodesicSample {
    GeodesicSample {
        t,
        x: s.x,
        v: s.v,
        frame: s.e.expect("frame state"),
    }
}

/// Integrate the geodesic from `x0` with unit initial velocity `v0` for length `t_len`.
///
/// Leaving the chart truncates the path; the result then reports
/// `Termination::LeftDomain` with the last reached parameter.
pub fn integrate_geodesic(chart: &MetricChart, x0: &DVector<f64>, v0: &DVector<f64>, t_len: f64, tol: f64) -> Result<GeodesicPath> {
    GeodesicPath::integrate(chart, x0, v0, t_len, tol, Integrator::from_tol(tol))
}

impl GeodesicPath {
    pub fn integrate(
        chart: &MetricChart,
        x0: &DVector<f64>,
        v0: &DVector<f64>,
        t_len: f64,
        tol: f64,
        integrator: Integrator,
    ) -> Result<GeodesicPath> {
        let g = chart.metric_checked(x0)?;
        let speed = norm_g(&g, v0);
        if (speed - 1.0).abs() > UNIT_TOL {
            return Err(GeomError::Normalization { norm: speed });
        }
        let frame = chart.orthonormal_complement(&g, v0);
        Self::integrate_with_frame(chart, x0, v0, frame, t_len, tol, integrator)
    }

    /// As [`GeodesicPath::integrate`] with a caller-supplied orthonormal frame of `v0^⊥`.
    pub fn integrate_with_frame(
        chart: &MetricChart,
        x0: &DVector<f64>,
        v0: &DVector<f64>,
        frame: DMatrix<f64>,
        t_len: f64,
        tol: f64,
        integrator: Integrator,
    ) -> Result<GeodesicPath> {
        if t_len < 0.0 || !t_len.is_finite() {
            return Err(GeomError::param("length", format!("{t_len} is not a nonnegative length")));
        }
        chart.check_point(x0)?;
        let h = integrator.step;
        let n_steps = (t_len / h - 1e-9).ceil().max(0.0) as usize;
        let mut samples = vec![GeodesicSample {
            t: 0.0,
            x: x0.clone(),
            v: v0.clone(),
            frame: frame.clone(),
        }];
        let mut midpoints = Vec::with_capacity(n_steps);
        let mut cur = State {
            x: x0.clone(),
            v: v0.clone(),
            e: Some(frame),
        };
        let mut t = 0.0;
        let mut termination = Termination::Completed;
        for i in 0..n_steps {
            let t_next = if i + 1 == n_steps { t_len } else { (i + 1) as f64 * h };
            let dt = t_next - t;
            match advance(chart, &cur, dt, integrator.conditioning) {
                Ok((mid, end)) if chart.contains(&end.x) && chart.contains(&mid.x) => {
                    midpoints.push(to_sample(t + dt / 2.0, mid));
                    samples.push(to_sample(t_next, end.clone()));
                    cur = end;
                    t = t_next;
                }
                _ => {
                    termination = Termination::LeftDomain { t };
                    break;
                }
            }
        }
        Ok(GeodesicPath {
            chart: chart.clone(),
            samples,
            midpoints,
            t_max: t,
            tol,
            integrator,
            termination,
        })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// Require the full requested length; converts truncation into an error.
    pub fn require_complete(self) -> Result<Self> {
        match self.termination {
            Termination::Completed => Ok(self),
            Termination::LeftDomain { t } => Err(GeomError::LeftDomain { t }),
        }
    }

    pub fn start(&self) -> &GeodesicSample {
        &self.samples[0]
    }

    pub fn end(&self) -> &GeodesicSample {
        self.samples.last().expect("nonempty path")
    }

    /// Index of the last sample with `t_i <= t`.
    pub fn sample_index(&self, t: f64) -> usize {
        match self.samples.binary_search_by(|s| s.t.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// State at an arbitrary parameter in `[0, t_max]`, integrated from the nearest sample below.
    pub fn state_at(&self, t: f64) -> Result<GeodesicSample> {
        if t < -1e-12 || t > self.t_max + 1e-12 {
            return Err(GeomError::param("t", format!("{t} outside [0, {}]", self.t_max)));
        }
        let i = self.sample_index(t);
        let s = &self.samples[i];
        let dt = t - s.t;
        if dt.abs() < 1e-15 {
            return Ok(s.clone());
        }
        let st = State {
            x: s.x.clone(),
            v: s.v.clone(),
            e: Some(s.frame.clone()),
        };
        let (_, end) = advance(&self.chart, &st, dt, self.integrator.conditioning)?;
        Ok(to_sample(t, end))
    }

    /// Frame components (`E^T g w`) of a coordinate vector at sample `i`.
    pub fn frame_components(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        let s = &self.samples[i];
        let g = self.chart.metric(&s.x);
        s.frame.transpose() * g * w
    }

    /// Coordinate vector with frame components `c` at sample `i`.
    pub fn from_frame(&self, i: usize, c: &DVector<f64>) -> DVector<f64> {
        &self.samples[i].frame * c
    }

    /// Parallel transport of a tangent vector at the start, evaluated at every sample.
    ///
    /// The vector is decomposed in the parallel basis `(v, E_1, ..., E_{n-1})`,
    /// whose coefficients are constant along the geodesic.
    pub fn parallel_transport(&self, w0: &DVector<f64>) -> Vec<DVector<f64>> {
        let s0 = self.start();
        let g = self.chart.metric(&s0.x);
        let cv = inner(&g, &s0.v, w0);
        let ce = s0.frame.transpose() * &g * w0;
        self.samples.iter().map(|s| &s.v * cv + &s.frame * &ce).collect()
    }

    /// Largest deviation of `|v|_g` from one over the samples.
    pub fn speed_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (self.chart.norm(&s.x, &s.v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `F^T g F - I` for `F = [v | E]`.
    pub fn frame_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let n = s.x.len();
                let mut f = DMatrix::zeros(n, n);
                f.set_column(0, &s.v);
                f.view_mut((0, 1), (n, n - 1)).copy_from(&s.frame);
                let gram = f.transpose() * self.chart.metric(&s.x) * &f;
                (gram - DMatrix::identity(n, n)).abs().max()
            })
            .fold(0.0, f64::max)
    }

    /// Residuals of `x'' + Γ(x', x') = 0` and `E' + Γ(x', E) = 0` at interior
    /// uniform samples, using a five-point derivative stencil.
    pub fn equation_residuals(&self) -> Result<(f64, f64)> {
        let h = self.integrator.step;
        let n = self.samples.len();
        let mut geo: f64 = 0.0;
        let mut tr: f64 = 0.0;
        for i in 2..n.saturating_sub(2) {
            if (self.samples[i + 2].t - self.samples[i - 2].t - 4.0 * h).abs() > 1e-12 {
                continue;
            }
            let d = |f: &dyn Fn(&GeodesicSample) -> DMatrix<f64>| {
                (f(&self.samples[i - 2]) - f(&self.samples[i - 1]) * 8.0 + f(&self.samples[i + 1]) * 8.0
                    - f(&self.samples[i + 2]))
                    / (12.0 * h)
            };
            let s = &self.samples[i];
            let gam = self.chart.christoffel(&s.x)?;
            let m = gam.along(&s.v);
            let dv = d(&|s: &GeodesicSample| DMatrix::from_column_slice(s.v.len(), 1, s.v.as_slice()));
            let de = d(&|s: &GeodesicSample| s.frame.clone());
            let g = self.chart.metric(&s.x);
            let rv = dv.column(0) + &m * &s.v;
            geo = geo.max(norm_g(&g, &rv.into_owned()));
            let re = de + &m * &s.frame;
            for c in 0..re.ncols() {
                tr = tr.max(norm_g(&g, &re.column(c).into_owned()));
            }
        }
        Ok((geo, tr))
    }

    /// Richardson estimate of the endpoint error: re-integrate position and
    /// velocity with half the step and scale the difference by `1/15`.
    pub fn richardson_error(&self) -> Result<f64> {
        let s0 = self.start();
        let half = Integrator {
            step: self.integrator.step / 2.0,
            conditioning: self.integrator.conditioning,
        };
        let (x, v) = integrate_state(&self.chart, &s0.x, &s0.v, self.t_max, half)?;
        let e = self.end();
        let g = self.chart.metric(&e.x);
        let dx = norm_g(&g, &(&x - &e.x));
        let dv = norm_g(&g, &(&v - &e.v));
        Ok(dx.max(dv) / 15.0)
    }

    /// Samples as CSV rows `t, x..., v...`.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for c in &self.chart.coords {
            out.push_str(&format!(",{c}"));
        }
        for c in &self.chart.coords {
            out.push_str(&format!(",d_{c}"));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{:.12}", s.t));
            for i in 0..n {
                out.push_str(&format!(",{:.12}", s.x[i]));
            }
            for i in 0..n {
                out.push_str(&format!(",{:.12}", s.v[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Position and velocity after length `t_len`, without frame or samples.
pub fn integrate_state(
    chart: &MetricChart,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_len: f64,
    integrator: Integrator,
) -> Result<(DVector<f64>, DVector<f64>)> {
    chart.check_point(x0)?;
    let h = integrator.step;
    let n_steps = (t_len.abs() / h - 1e-9).ceil().max(0.0) as usize;
    let sign = t_len.signum();
    let mut cur = State {
        x: x0.clone(),
        v: v0.clone(),
        e: None,
    };
    let mut t = 0.0;
    for i in 0..n_steps {
        let t_next = if i + 1 == n_steps { t_len.abs() } else { (i + 1) as f64 * h };
        let (_, end) = advance(chart, &cur, sign * (t_next - t), integrator.conditioning)
            .map_err(|_| GeomError::LeftDomain { t })?;
        if !chart.contains(&end.x) {
            return Err(GeomError::LeftDomain { t });
        }
        cur = end;
        t = t_next;
    }
    Ok((cur.x, cur.v))
}

/// Riemannian exponential `exp_x(w)`.
pub fn exp_map(chart: &MetricChart, x0: &DVector<f64>, w: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let len = chart.norm(x0, w);
    if len < 1e-300 {
        chart.check_point(x0)?;
        return Ok(x0.clone());
    }
    Ok(integrate_state(chart, x0, &(w / len), len, Integrator::from_tol(tol))?.0)
}

/// Position and velocity of the geodesic with initial velocity `w` at time one.
pub fn exp_map_with_velocity(
    chart: &MetricChart,
    x0: &DVector<f64>,
    w: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let len = chart.norm(x0, w);
    if len < 1e-300 {
        chart.check_point(x0)?;
        return Ok((x0.clone(), w.clone()));
    }
    let (x, v) = integrate_state(chart, x0, &(w / len), len, Integrator::from_tol(tol))?;
    Ok((x, v * len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::MetricFamily;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn flat(n: usize) -> MetricChart {
        MetricChart::new("flat", MetricFamily::Euclidean { dim: n }, vec![(-100.0, 100.0); n])
    }

    fn s2_polar() -> MetricChart {
        MetricChart::new("s2", MetricFamily::SpherePolar { curvature: 1.0 }, vec![(0.0, PI), (-10.0, 10.0)])
    }

    #[test]
    fn straight_line_in_flat_space() {
        let c = flat(3);
        let x0 = DVector::zeros(3);
        let v0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = integrate_geodesic(&c, &x0, &v0, 2.0, 1e-8).unwrap();
        assert!(p.completed());
        assert_abs_diff_eq!(p.end().x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.end().t, 2.0, epsilon = 1e-15);
        let w = p.parallel_transport(&DVector::from_vec(vec![0.3, -1.0, 2.0]));
        assert_abs_diff_eq!((&w[w.len() - 1] - &w[0]).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn meridian_reaches_the_pole_or_reports_exit() {
        let c = s2_polar();
        let x0 = DVector::from_vec(vec![FRAC_PI_2, 0.0]);
        let v0 = DVector::from_vec(vec![-1.0, 0.0]);
        let p = integrate_geodesic(&c, &x0, &v0, FRAC_PI_2 - 1e-3, 1e-8).unwrap();
        assert!(p.completed());
        assert_abs_diff_eq!(p.end().x[0], 1e-3, epsilon = 1e-9);
        let q = integrate_geodesic(&c, &x0, &v0, PI, 1e-8).unwrap();
        assert!(matches!(q.termination, Termination::LeftDomain { .. }));
        assert!(q.t_max <= FRAC_PI_2);
    }

    #[test]
    fn equator_transport_has_trivial_holonomy() {
        let c = s2_polar();
        let x0 = DVector::from_vec(vec![FRAC_PI_2, -PI]);
        let v0 = DVector::from_vec(vec![0.0, 1.0]);
        let p = integrate_geodesic(&c, &x0, &v0, 2.0 * PI, 1e-8).unwrap();
        let north = DVector::from_vec(vec![-1.0, 0.0]);
        let w = p.parallel_transport(&north);
        assert_abs_diff_eq!((&w[w.len() - 1] - &north).norm(), 0.0, epsilon = 1e-8);
        assert!(p.frame_defect() < 1e-10);
    }

    #[test]
    fn order_of_accuracy() {
        // Off-equator great circle on S^2; exact endpoint from the closed form.
        let c = s2_polar();
        let th0: f64 = 1.0;
        let x0 = DVector::from_vec(vec![th0, 0.0]);
        let a: f64 = 0.6;
        let v0 = DVector::from_vec(vec![a.cos(), a.sin() / th0.sin()]);
        let len: f64 = 1.5;
        let exact = {
            let p = [th0.sin(), 0.0, th0.cos()];
            let et = [th0.cos(), 0.0, -th0.sin()];
            let ep = [0.0, 1.0, 0.0];
            let d: Vec<f64> = (0..3).map(|i| a.cos() * et[i] + a.sin() * ep[i]).collect();
            let q: Vec<f64> = (0..3).map(|i| len.cos() * p[i] + len.sin() * d[i]).collect();
            DVector::from_vec(vec![q[2].acos(), q[1].atan2(q[0])])
        };
        let err = |h: f64| {
            let (x, _) = integrate_state(&c, &x0, &v0, len, Integrator { step: h, conditioning: false }).unwrap();
            (x - &exact).norm()
        };
        let e1 = err(0.1);
        let e2 = err(0.05);
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn non_unit_velocity_rejected() {
        let c = flat(2);
        let r = integrate_geodesic(&c, &DVector::zeros(2), &DVector::from_vec(vec![2.0, 0.0]), 1.0, 1e-8);
        assert!(matches!(r, Err(GeomError::Normalization { .. })));
    }
}
