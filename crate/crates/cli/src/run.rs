//! Execution of single scenarios: validation, the geometric computation, and
//! the check rows derived from its quantities.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use riclab::comparison::{
    distance_sphere_family, frankel_check, sample_curvature, theorem_a_check, theorem_b_check, verify_cot_bound,
    verify_ricci_comparison, Applicability, Verdict, COMPARISON_TOL, FRANKEL_TOL,
};
use riclab::geodesic::integrate_geodesic;
use riclab::index::{index_endpoint, index_form_oracle_endpoint, SINGULAR_BAND};
use riclab::jacobi::{JacobiPropagator, LagrangianFamily};
use riclab::lifting::{
    lift_curve, lift_homotopy, long_homotopy_scan, no_lift_certificate, random_short_curves, HomotopyGrid, ScanStatus, MATCH_TOL,
    ON_PATCH_TOL,
};
use riclab::scenarios::{focal_index_scenarios, random_index_scenarios, Pairing};
use riclab::submanifold::{
    exp_normal, focal_radius, lagrangian_from_submanifold, normal_geodesic, normal_samples, stereo, NormalSampling, SubmanifoldPatch,
    DEFAULT_HORIZON,
};
use riclab::{linalg, zoo, MetricChart};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{values, BoundKind, ExpectValue, FamilyKind, IndexMode, LiftMode, Number, Op, ScenarioConfig};
use crate::Failure;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0;
/// Default absolute tolerance of an expectation.
pub const DEFAULT_EXPECT_TOL: f64 = 1e-6;
const FOCAL_SEED_OFFSET: u64 = 1 << 32;
/// Round-trip and tube-bound tolerance of lifted curves.
pub const LIFT_TOL: f64 = 1e-6;

/// Run-wide defaults; scenario fields take precedence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
        }
    }
}

/// Shortest round-trip form, in scientific notation outside `[1e-4, 1e6)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum QValue {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl QValue {
    pub fn display(&self) -> String {
        match self {
            QValue::Num(x) => fmt_num(*x),
            QValue::Bool(b) => b.to_string(),
            QValue::Text(t) => t.clone(),
        }
    }
}

/// A check the operation always performs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Builtin {
    pub reference: String,
    pub tolerance: Option<f64>,
    pub margin: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: &'static str,
    pub value: QValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub scenario: String,
    pub op: &'static str,
    pub check: String,
    pub value: String,
    pub reference: String,
    pub source: String,
    pub tolerance: String,
    pub margin: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: String,
    pub op: &'static str,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
    pub checks: Vec<CheckRow>,
    pub quantities: Vec<Quantity>,
    pub details: Value,
    #[serde(skip)]
    pub failure: Option<Failure>,
    #[serde(skip)]
    pub trace_csv: Option<String>,
    #[serde(skip)]
    pub lift_csv: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

struct Output {
    quantities: Vec<Quantity>,
    details: Value,
    trace_csv: Option<String>,
    lift_csv: Option<String>,
}

impl Output {
    fn new(details: Value) -> Self {
        Output {
            quantities: Vec::new(),
            details,
            trace_csv: None,
            lift_csv: None,
        }
    }

    fn num(&mut self, name: &'static str, v: f64) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Num(v),
            builtin: None,
        });
        self
    }

    fn flag(&mut self, name: &'static str, v: bool) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Bool(v),
            builtin: None,
        });
        self
    }

    fn text(&mut self, name: &'static str, v: impl Into<String>) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Text(v.into()),
            builtin: None,
        });
        self
    }

    /// `value ≤ limit`.
    fn at_most(&mut self, name: &'static str, v: f64, limit: f64) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Num(v),
            builtin: Some(Builtin {
                reference: format!("<= {}", fmt_num(limit)),
                tolerance: Some(limit),
                margin: Some(limit - v),
                pass: v <= limit,
            }),
        });
        self
    }

    /// `value ≥ limit`.
    fn at_least(&mut self, name: &'static str, v: f64, limit: f64) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Num(v),
            builtin: Some(Builtin {
                reference: format!(">= {}", fmt_num(limit)),
                tolerance: None,
                margin: Some(v - limit),
                pass: v >= limit,
            }),
        });
        self
    }

    fn must_hold(&mut self, name: &'static str, v: bool) -> &mut Self {
        self.quantities.push(Quantity {
            name,
            value: QValue::Bool(v),
            builtin: Some(Builtin {
                reference: "true".into(),
                tolerance: None,
                margin: None,
                pass: v,
            }),
        });
        self
    }
}

fn details<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Quantities each operation reports, for validating `expect` keys up front.
pub fn quantity_names(op: Op, mode: Option<&str>) -> &'static [&'static str] {
    match (op, mode) {
        (Op::Curvature, _) => &[
            "ric_k_min",
            "ric_k_max",
            "sec_min",
            "sec_max",
            "conj_radius",
            "theorem_ric_k_min",
            "hypothesis",
            "degree",
            "vacuous",
        ],
        (Op::Focal, _) => &[
            "focal_radius",
            "second_focal_time",
            "principal_min",
            "principal_max",
            "trace_sup",
            "admissible_r",
            "ric_k_min",
            "condition",
            "hypothesis",
            "degree",
            "vacuous",
        ],
        (Op::Index, Some("random")) => &["scenarios", "disagreements", "identity_failures", "focal_endpoints"],
        (Op::Index, _) => &[
            "index",
            "oracle_index",
            "index_matches_oracle",
            "endpoint_multiplicity",
            "jacobi_model_error",
            "riccati_model_error",
        ],
        (Op::Compare, _) => &[
            "verdict",
            "worst_margin",
            "max_abs_margin",
            "ric_k_min",
            "full_index_until",
            "applicable",
            "short_geodesic",
            "samples",
        ],
        (Op::Frankel, _) => &[
            "distance",
            "bound",
            "margin",
            "equality_gap",
            "r",
            "r_tilde",
            "dim_condition",
            "intersect",
            "dist_le_bound",
        ],
        (Op::Lift, Some("homotopy")) => &[
            "max_defect",
            "max_adjacent",
            "continuity",
            "boundary_norm",
            "oracle_error",
            "max_norm",
        ],
        (Op::Lift, Some("no_lift")) => &["endpoint_norm", "norm_at_c", "fiber_line_defect", "hypothesis", "certified"],
        (Op::Lift, Some("long_homotopy")) => &["max_length", "bound", "slack", "first_row_length", "applicable", "reaches_bound"],
        (Op::Lift, _) => &["curves", "max_round_trip", "max_tube_excess", "max_norm"],
    }
}

fn parse_index_mode(m: Option<&str>) -> Result<IndexMode, Failure> {
    match m {
        None | Some("endpoint") => Ok(IndexMode::Endpoint),
        Some("random") => Ok(IndexMode::Random),
        Some(other) => Err(Failure::Config(format!("unknown index mode `{other}` (endpoint, random)"))),
    }
}

fn parse_lift_mode(m: Option<&str>) -> Result<LiftMode, Failure> {
    match m {
        None | Some("random") => Ok(LiftMode::Random),
        Some("homotopy") => Ok(LiftMode::Homotopy),
        Some("no_lift") => Ok(LiftMode::NoLift),
        Some("long_homotopy") => Ok(LiftMode::LongHomotopy),
        Some(other) => Err(Failure::Config(format!(
            "unknown lift mode `{other}` (random, homotopy, no_lift, long_homotopy)"
        ))),
    }
}

fn required<'a, T>(v: &'a Option<T>, field: &str, op: Op) -> Result<&'a T, Failure> {
    v.as_ref()
        .ok_or_else(|| Failure::Config(format!("`{}` scenarios need `{field}`", op.name())))
}

fn num(v: &Option<Number>, field: &str) -> Result<Option<f64>, Failure> {
    v.as_ref().map(|n| n.value(field)).transpose()
}

fn req_num(v: &Option<Number>, field: &str, op: Op) -> Result<f64, Failure> {
    required(v, field, op)?.value(field)
}

fn chart_of(sc: &ScenarioConfig) -> Result<MetricChart, Failure> {
    Ok(zoo::chart(required(&sc.chart, "chart", sc.op)?)?)
}

fn patch_of(sc: &ScenarioConfig) -> Result<SubmanifoldPatch, Failure> {
    Ok(zoo::patch(required(&sc.patch, "patch", sc.op)?)?)
}

fn point_of(sc: &ScenarioConfig, chart: &MetricChart) -> Result<DVector<f64>, Failure> {
    let n = chart.dim();
    let p = match &sc.point {
        Some(p) => values(p, "point")?,
        None => zoo::chart_entry(&chart.name)?.base_point,
    };
    if p.len() != n {
        return Err(Failure::Parameter(format!("`point` needs {n} coordinates, got {}", p.len())));
    }
    let x = DVector::from_vec(p);
    chart.metric_checked(&x)?;
    Ok(x)
}

fn vector(v: &[Number], field: &str, len: usize) -> Result<DVector<f64>, Failure> {
    let v = values(v, field)?;
    if v.len() != len {
        return Err(Failure::Parameter(format!("`{field}` needs {len} components, got {}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn unit_direction(sc: &ScenarioConfig, chart: &MetricChart, x: &DVector<f64>) -> Result<DVector<f64>, Failure> {
    let v = vector(required(&sc.direction, "direction", sc.op)?, "direction", chart.dim())?;
    if v.norm() == 0.0 {
        return Err(Failure::Parameter("`direction` is zero".into()));
    }
    Ok(chart.normalize(x, &v))
}

fn patch_params(sc: &ScenarioConfig, patch: &SubmanifoldPatch) -> Result<(Vec<f64>, usize), Failure> {
    let u = values(required(&sc.params, "params", sc.op)?, "params")?;
    if u.len() != patch.dim_sub {
        return Err(Failure::Parameter(format!("`params` needs {} values, got {}", patch.dim_sub, u.len())));
    }
    let c = sc.component.unwrap_or(0);
    if c >= patch.components() {
        return Err(Failure::Parameter(format!("`component` = {c} but the patch has {}", patch.components())));
    }
    Ok((u, c))
}

fn unit_normal(sc: &ScenarioConfig, patch: &SubmanifoldPatch) -> Result<DVector<f64>, Failure> {
    let eta = vector(required(&sc.normal, "normal", sc.op)?, "normal", patch.codim())?;
    if eta.norm() == 0.0 {
        return Err(Failure::Parameter("`normal` is zero".into()));
    }
    Ok(&eta / eta.norm())
}

fn k_of(sc: &ScenarioConfig) -> Result<usize, Failure> {
    let k = *required(&sc.k, "k", sc.op)?;
    if k == 0 {
        return Err(Failure::Parameter("k must be at least 1".into()));
    }
    Ok(k)
}

fn positive(v: f64, field: &str) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Parameter(format!("`{field}` = {v} must be positive and finite")))
    }
}

fn grid2(sc: &ScenarioConfig, default: [usize; 2]) -> Result<(usize, usize), Failure> {
    match sc.grid.as_deref() {
        None => Ok((default[0], default[1])),
        Some([nt, ns]) if *nt >= 2 && *ns >= 2 => Ok((*nt, *ns)),
        Some(_) => Err(Failure::Parameter("`grid` must be [n_t, n_s] with both at least 2".into())),
    }
}

/// Static checks before anything runs: names, modes, numbers and `expect` keys.
pub fn validate(sc: &ScenarioConfig) -> Result<(), Failure> {
    let fail = |f: Failure| f.context(&format!("scenario `{}`", sc.id));
    match sc.op {
        Op::Index => {
            parse_index_mode(sc.mode.as_deref()).map_err(fail)?;
        }
        Op::Lift => {
            parse_lift_mode(sc.mode.as_deref()).map_err(fail)?;
        }
        _ if sc.mode.is_some() => return Err(fail(Failure::Config(format!("`{}` scenarios take no `mode`", sc.op.name())))),
        _ => {}
    }
    if let Some(c) = &sc.chart {
        zoo::chart(c).map_err(|e| fail(e.into()))?;
    }
    if let Some(p) = &sc.patch {
        zoo::patch(p).map_err(|e| fail(e.into()))?;
    }
    if let Some(ps) = &sc.patches {
        for p in ps {
            zoo::patch(p).map_err(|e| fail(e.into()))?;
        }
    }
    let lists = [
        ("point", &sc.point),
        ("direction", &sc.direction),
        ("params", &sc.params),
        ("normal", &sc.normal),
        ("interval", &sc.interval),
    ];
    for (field, v) in lists {
        if let Some(v) = v {
            values(v, field).map_err(fail)?;
        }
    }
    let singles = [
        ("length", &sc.length),
        ("s0", &sc.s0),
        ("spread", &sc.spread),
        ("amplitude", &sc.amplitude),
        ("max_length", &sc.max_length),
        ("focal_radius", &sc.focal_radius),
        ("model_curvature", &sc.model_curvature),
    ];
    for (field, v) in singles {
        num(v, field).map_err(fail)?;
    }
    if let Some(t) = sc.tol {
        positive(t, "tol").map_err(fail)?;
    }
    let known = quantity_names(sc.op, sc.mode.as_deref());
    for (key, e) in &sc.expect {
        if !known.contains(&key.as_str()) {
            return Err(fail(Failure::Config(format!(
                "`expect.{key}` is not reported by this operation (known: {})",
                known.join(", ")
            ))));
        }
        if let ExpectValue::Num(n) = &e.value {
            n.value(&format!("expect.{key}")).map_err(fail)?;
        }
        if let Some(t) = e.tol {
            if t.is_nan() || t < 0.0 {
                return Err(fail(Failure::Parameter(format!("`expect.{key}.tol` = {t} must be nonnegative"))));
            }
        }
    }
    Ok(())
}

fn seed_of(sc: &ScenarioConfig, st: &Settings) -> u64 {
    sc.seed.unwrap_or(st.seed)
}

fn tol_of(sc: &ScenarioConfig, st: &Settings) -> f64 {
    sc.tol.unwrap_or(st.tol)
}

fn run_curvature(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let chart = chart_of(sc)?;
    let k = k_of(sc)?;
    let x = point_of(sc, &chart)?;
    let spread = num(&sc.spread, "spread")?.unwrap_or(0.3);
    let draws = sc.samples.unwrap_or(100);
    let sampled = sample_curvature(&chart, &x, spread, k, draws, seed_of(sc, st))?;
    let thm = theorem_a_check(&chart, &x, k, sc.directions.unwrap_or(16), tol_of(sc, st))?;
    let mut out = Output::new(json!({ "sampling": details(&sampled), "theorem": details(&thm) }));
    out.num("ric_k_min", sampled.ric_k_min)
        .num("ric_k_max", sampled.ric_k_max)
        .num("sec_min", sampled.sec_min)
        .num("sec_max", sampled.sec_max)
        .num("conj_radius", thm.conj_radius.value())
        .num("theorem_ric_k_min", thm.ric_k_min)
        .flag("hypothesis", thm.hypothesis)
        .num("degree", thm.predicted.degree as f64)
        .flag("vacuous", thm.predicted.vacuous);
    Ok(out)
}

fn run_focal(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let patch = patch_of(sc)?;
    let sampling = sc.sampling.unwrap_or_default();
    let tol = tol_of(sc, st);
    let foc = focal_radius(&patch, sampling, DEFAULT_HORIZON, tol)?;
    let mut out = Output::new(Value::Null);
    out.num("focal_radius", foc.radius.value());
    let first = foc.radius.value();
    if let Some(&(t, _)) = foc.focal_times_at_argmin.iter().find(|(t, _)| *t > first + 1e-6) {
        out.num("second_focal_time", t);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if patch.dim_sub > 0 {
        for s in normal_samples(&patch, sampling) {
            let fr = patch.frame(&s.param, s.component)?;
            let nu = &fr.normal * DVector::from_vec(s.eta.clone());
            for e in patch.shape_operator_in(&s.param, s.component, &fr, &nu)?.eigenvalues() {
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        out.num("principal_min", lo).num("principal_max", hi);
    }
    let k = sc.k.unwrap_or(1);
    let thm = if patch.dim_sub >= k && k >= 1 {
        let thm = theorem_b_check(&patch, k, sampling, tol)?;
        out.num("trace_sup", thm.admissible.max_trace)
            .num("admissible_r", thm.admissible.r)
            .num("ric_k_min", thm.ric_k_min)
            .flag("condition", thm.condition)
            .flag("hypothesis", thm.hypothesis)
            .num("degree", thm.predicted.degree as f64)
            .flag("vacuous", thm.predicted.vacuous);
        Some(thm)
    } else {
        None
    };
    out.details = json!({ "focal": details(&foc), "theorem": details(&thm) });
    Ok(out)
}

fn run_index(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let tol = tol_of(sc, st);
    match parse_index_mode(sc.mode.as_deref())? {
        IndexMode::Random => {
            let count = sc.count.unwrap_or(1);
            if count == 0 {
                return Err(Failure::Parameter("`count` must be at least 1".into()));
            }
            let seed = seed_of(sc, st);
            let pairings = Pairing::defaults();
            // each pairing draws `count` generic lengths and `count` focal ones
            let jobs: Vec<(usize, bool)> = (0..pairings.len()).flat_map(|i| [(i, false), (i, true)]).collect();
            let runs: Vec<Result<Vec<_>, Failure>> = jobs
                .par_iter()
                .map(|&(i, focal)| {
                    let s = seed.wrapping_add(i as u64);
                    let r = if focal {
                        focal_index_scenarios(pairings[i], count, s.wrapping_add(FOCAL_SEED_OFFSET), tol)
                    } else {
                        random_index_scenarios(pairings[i], count, s, tol)
                    };
                    r.map_err(Failure::from)
                })
                .collect();
            let mut all = Vec::new();
            for r in runs {
                all.extend(r?);
            }
            let disagreements = all.iter().filter(|s| !s.agrees()).count();
            let focal_endpoints = all.iter().filter(|s| s.report.endpoint_focal).count();
            let identity_failures = all.iter().filter(|s| s.report.endpoint_focal && !s.report.identity_holds).count();
            let rows: Vec<Value> = all
                .iter()
                .map(|s| {
                    json!({
                        "pairing": s.pairing,
                        "draw": s.draw,
                        "length": s.length,
                        "index_hk": s.report.total_hk,
                        "index_oracle": s.report.total_oracle.as_ref().map(|o| o.index),
                        "focal_count": s.report.focal_count,
                        "correction": s.report.correction,
                        "endpoint_focal": s.report.endpoint_focal,
                        "identity_holds": s.report.identity_holds,
                    })
                })
                .collect();
            let mut out = Output::new(json!({ "scenarios": rows }));
            out.num("scenarios", all.len() as f64)
                .at_most("disagreements", disagreements as f64, 0.0)
                .at_most("identity_failures", identity_failures as f64, 0.0)
                .num("focal_endpoints", focal_endpoints as f64);
            Ok(out)
        }
        IndexMode::Endpoint => {
            let chart = chart_of(sc)?;
            let x = point_of(sc, &chart)?;
            let v = unit_direction(sc, &chart, &x)?;
            let b = positive(req_num(&sc.length, "length", sc.op)?, "length")?;
            let path = integrate_geodesic(&chart, &x, &v, b, tol)?.require_complete()?;
            let prop = JacobiPropagator::new(path)?;
            let idx = index_endpoint(prop.clone(), SINGULAR_BAND)?;
            let oracle = index_form_oracle_endpoint(&prop, None)?;
            let mut out = Output::new(json!({ "index": details(&idx), "oracle": details(&oracle) }));
            out.num("index", idx.index as f64)
                .num("oracle_index", oracle.index as f64)
                .must_hold("index_matches_oracle", idx.index == oracle.index)
                .num("endpoint_multiplicity", idx.endpoint_multiplicity as f64);
            if let Some(kappa) = num(&sc.model_curvature, "model_curvature")? {
                let (je, re) = model_errors(&prop, positive(kappa, "model_curvature")?)?;
                out.num("jacobi_model_error", je).num("riccati_model_error", re);
            }
            Ok(out)
        }
    }
}

/// Largest deviation of the point family from `J = sn_κ(t) I` and of its
/// Riccati operator from `ct_κ(t) I` on `[0.01, min(b, 3.1/√κ)]`.
fn model_errors(prop: &Arc<JacobiPropagator>, kappa: f64) -> Result<(f64, f64), Failure> {
    let fam = LagrangianFamily::from_point(prop.clone());
    let m = fam.dim();
    let rk = kappa.sqrt();
    let hi = prop.t_max().min(3.1 / rk);
    let id = DMatrix::<f64>::identity(m, m);
    let mut je: f64 = 0.0;
    let mut re: f64 = 0.0;
    for (i, s) in prop.path.samples.iter().enumerate() {
        if s.t > hi + 1e-12 {
            break;
        }
        let (j, _) = fam.values_at_sample(i);
        je = je.max((&j - &id * ((rk * s.t).sin() / rk)).abs().max());
        if s.t >= 0.01 - 1e-12 {
            let ric = fam.riccati_at_sample(i);
            re = re.max((&ric.matrix - &id * (rk / (rk * s.t).tan())).abs().max());
        }
    }
    Ok((je, re))
}

fn run_compare(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let tol = tol_of(sc, st);
    let k = k_of(sc)?;
    let b = positive(req_num(&sc.length, "length", sc.op)?, "length")?;
    let kind = *required(&sc.family, "family", sc.op)?;
    let bound = *required(&sc.bound, "bound", sc.op)?;
    let s0 = num(&sc.s0, "s0")?;
    let fam = match kind {
        FamilyKind::Point | FamilyKind::DistanceSphere => {
            let chart = chart_of(sc)?;
            let x = point_of(sc, &chart)?;
            let v = unit_direction(sc, &chart, &x)?;
            let prop = JacobiPropagator::new(integrate_geodesic(&chart, &x, &v, b, tol)?.require_complete()?)?;
            if kind == FamilyKind::Point {
                LagrangianFamily::from_point(prop)
            } else {
                distance_sphere_family(prop, *required(&s0, "s0", sc.op)?)?
            }
        }
        FamilyKind::Submanifold => {
            let patch = patch_of(sc)?;
            let (u, c) = patch_params(sc, &patch)?;
            let eta = unit_normal(sc, &patch)?;
            let path = normal_geodesic(&patch, &u, c, &eta, b, tol)?.require_complete()?;
            lagrangian_from_submanifold(JacobiPropagator::new(path)?, &patch, &u, c)?
        }
    };
    let interval = match &sc.interval {
        Some(iv) => match values(iv, "interval")?.as_slice() {
            [lo, hi] => Some((*lo, *hi)),
            _ => return Err(Failure::Parameter("`interval` needs two endpoints".into())),
        },
        None => None,
    };
    let m = fam.dim();
    let report = match bound {
        BoundKind::Ricci => {
            let s0 = *required(&s0, "s0", sc.op)?;
            if k > m {
                return Err(Failure::Parameter(format!("k = {k} exceeds the family dimension {m}")));
            }
            let s = fam.riccati(0.0)?;
            let (_, vecs) = linalg::sym_eigen(&s.matrix);
            // eigenvectors with the k largest eigenvalues
            let w0 = vecs.columns(m - k, k).into_owned();
            let iv = interval.unwrap_or((0.0, b.min(PI - s0)));
            verify_ricci_comparison(&fam, &w0, s0, iv)?
        }
        BoundKind::Cot => {
            let iv = interval.unwrap_or((0.0, b));
            verify_cot_bound(&fam, &DMatrix::zeros(m, 0), iv, k)?
        }
    }
    .named(sc.id.clone());
    let verdict = report.verdict();
    let mut out = Output::new(Value::Null);
    out.text(
        "verdict",
        match verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inapplicable => "inapplicable",
        },
    );
    let applicable = report.status == Applicability::Applicable;
    if let Some(w) = report.worst_margin {
        if applicable {
            out.at_least("worst_margin", w, -COMPARISON_TOL);
        } else {
            out.num("worst_margin", w);
        }
    }
    if let Some(w) = report.max_abs_margin {
        out.num("max_abs_margin", w);
    }
    out.num("ric_k_min", report.ric_k_min).flag("applicable", applicable).num("samples", report.samples.len() as f64);
    if let Some(t) = report.full_index_until {
        out.num("full_index_until", t);
    }
    if let Some(s) = report.short_geodesic {
        out.must_hold("short_geodesic", s);
    }
    out.trace_csv = Some(report.to_csv());
    let mut d = details(&report);
    if let Value::Object(map) = &mut d {
        map.remove("samples");
        map.remove("excluded");
    }
    out.details = d;
    Ok(out)
}

fn run_frankel(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let names = required(&sc.patches, "patches", sc.op)?;
    let [a, b] = names.as_slice() else {
        return Err(Failure::Config("`patches` needs exactly two names".into()));
    };
    let first = zoo::patch(a)?;
    let second = zoo::patch(b)?;
    let k = k_of(sc)?;
    let grid = match sc.grid.as_deref() {
        None => 16,
        Some([g]) if *g >= 2 => *g,
        Some(_) => return Err(Failure::Parameter("`grid` must be a single size of at least 2".into())),
    };
    let rep = frankel_check(&first, &second, k, sc.sampling.unwrap_or_default(), grid, tol_of(sc, st))?;
    let mut out = Output::new(details(&rep));
    out.num("distance", rep.distance.value)
        .num("bound", rep.bound)
        .num("margin", rep.margin)
        .num("equality_gap", rep.equality_gap)
        .num("r", rep.r)
        .num("r_tilde", rep.r_tilde)
        .flag("dim_condition", rep.dim_condition)
        .flag("intersect", rep.distance.intersect);
    if rep.dim_condition {
        out.quantities.push(Quantity {
            name: "dist_le_bound",
            value: QValue::Bool(rep.pass),
            builtin: Some(Builtin {
                reference: "dist <= r + r_tilde".into(),
                tolerance: Some(FRANKEL_TOL),
                margin: Some(rep.margin + FRANKEL_TOL),
                pass: rep.pass,
            }),
        });
    }
    Ok(out)
}

fn lift_focal(sc: &ScenarioConfig, patch: &SubmanifoldPatch, tol: f64) -> Result<f64, Failure> {
    match num(&sc.focal_radius, "focal_radius")? {
        Some(f) if f > 0.0 => Ok(f),
        Some(f) => Err(Failure::Parameter(format!("`focal_radius` = {f} must be positive"))),
        None => Ok(focal_radius(patch, NormalSampling::default(), DEFAULT_HORIZON, tol)?.radius.value()),
    }
}

/// Homotopy in the unit 3-sphere from the normal great-circle arc joining
/// two points of the Clifford torus to a loop on the torus between them.
pub fn clifford_long_homotopy(nt: usize, ns: usize) -> Result<HomotopyGrid, Failure> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let p0 = [r, 0.0, r, 0.0];
    let p1 = [r, 0.0, -r, 0.0];
    let h = |t: f64, s: f64| {
        let (c, sn) = (t * PI / 2.0).sin_cos();
        let (ct, st) = (t * PI).sin_cos();
        let torus = [r, 0.0, r * st, r * ct];
        let x: [f64; 4] = std::array::from_fn(|i| (1.0 - s) * (sn * p0[i] + c * p1[i]) + s * torus[i]);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        DVector::from_vec(stereo::to_chart(&x.map(|v| v / n), 1.0))
    };
    Ok(HomotopyGrid::sample(1.0, nt, ns, h)?)
}

fn run_lift(sc: &ScenarioConfig, st: &Settings) -> Result<Output, Failure> {
    let tol = tol_of(sc, st);
    let patch = patch_of(sc)?;
    let mut out = Output::new(Value::Null);
    match parse_lift_mode(sc.mode.as_deref())? {
        LiftMode::Random => {
            let foc = lift_focal(sc, &patch, tol)?;
            let max_len = match num(&sc.max_length, "max_length")? {
                Some(l) if l > 0.0 && l < foc => l,
                Some(l) => return Err(Failure::Parameter(format!("`max_length` = {l} must lie in (0, {foc})"))),
                None => 0.9 * foc.min(PI),
            };
            let count = sc.count.unwrap_or(100);
            let curves = random_short_curves(&patch, count, seed_of(sc, st), max_len, sc.samples.unwrap_or(41))?;
            let lifts: Vec<Result<_, Failure>> = curves
                .par_iter()
                .map(|c| lift_curve(&patch, &c.curve, &c.start, Some(foc), tol).map_err(Failure::from))
                .collect();
            let mut round: f64 = 0.0;
            let mut excess = f64::NEG_INFINITY;
            let mut max_norm: f64 = 0.0;
            let mut rows = Vec::new();
            for l in lifts {
                let l = l?;
                round = round.max(l.round_trip);
                excess = excess.max(l.max_norm - l.source_length);
                max_norm = max_norm.max(l.max_norm);
                rows.push(json!({ "length": l.source_length, "max_norm": l.max_norm, "round_trip": l.round_trip, "halvings": l.halvings }));
            }
            out.num("curves", curves.len() as f64)
                .at_most("max_round_trip", round, LIFT_TOL)
                .at_most("max_tube_excess", excess, LIFT_TOL)
                .num("max_norm", max_norm);
            out.details = json!({ "focal_radius": foc, "max_length": max_len, "curves": rows });
        }
        LiftMode::Homotopy => {
            let foc = lift_focal(sc, &patch, tol)?;
            let (u0, c) = patch_params(sc, &patch)?;
            let d = vector(required(&sc.direction, "direction", sc.op)?, "direction", patch.dim_sub)?;
            let a = req_num(&sc.amplitude, "amplitude", sc.op)?;
            let b = positive(req_num(&sc.length, "length", sc.op)?, "length")?;
            let (nt, ns) = grid2(sc, [31, 7])?;
            let codim = patch.codim();
            let nu = DVector::from_fn(codim, |i, _| if i == 0 { 1.0 } else { 0.0 });
            let base = |t: f64| -> Vec<f64> { u0.iter().zip(d.iter()).map(|(u, v)| u + v * t).collect() };
            let eta = |t: f64, s: f64| s * a * (PI * t / b).sin();
            let mut pts = Vec::with_capacity(nt * ns);
            for j in 0..ns {
                let s = j as f64 / (ns - 1) as f64;
                for i in 0..nt {
                    let t = b * i as f64 / (nt - 1) as f64;
                    pts.push(exp_normal(&patch, &base(t), c, &(&nu * eta(t, s)), tol)?);
                }
            }
            let grid = HomotopyGrid::sample(b, nt, ns, |t, s| {
                let i = ((t / b) * (nt - 1) as f64).round() as usize;
                let j = (s * (ns - 1) as f64).round() as usize;
                pts[j * nt + i].clone()
            })?;
            let lift = lift_homotopy(&patch, &grid, foc, tol)?;
            let mut oracle: f64 = 0.0;
            for (s, row) in lift.s.iter().zip(&lift.rows) {
                for (t, p) in row.t.iter().zip(&row.samples) {
                    let ub = base(*t);
                    let mut e = (p.eta[0] - eta(*t, *s)).abs();
                    for (a, b) in p.param.iter().zip(&ub) {
                        e = e.max((a - b).abs());
                    }
                    for x in &p.eta[1..] {
                        e = e.max(x.abs());
                    }
                    oracle = oracle.max(e);
                }
            }
            let max_defect = lift.defects.iter().copied().fold(0.0, f64::max);
            out.at_most("max_defect", max_defect, MATCH_TOL)
                .at_most("max_adjacent", lift.max_adjacent, lift.continuity_tol)
                .num("continuity", lift.continuity_tol)
                .at_most("boundary_norm", lift.boundary_norm, ON_PATCH_TOL)
                .at_most("oracle_error", oracle, LIFT_TOL)
                .num("max_norm", lift.rows.iter().map(|r| r.max_norm).fold(0.0, f64::max));
            out.lift_csv = Some(lift.to_csv());
            let mut d = details(&lift);
            if let Value::Object(map) = &mut d {
                map.remove("rows");
            }
            out.details = json!({ "focal_radius": foc, "homotopy": d });
        }
        LiftMode::NoLift => {
            let foc = lift_focal(sc, &patch, tol)?;
            let (u, c) = patch_params(sc, &patch)?;
            let eta = unit_normal(sc, &patch)?;
            let b = positive(req_num(&sc.length, "length", sc.op)?, "length")?;
            let rep = no_lift_certificate(&patch, &u, c, &eta, b, foc, tol)?;
            if let Some(n) = rep.endpoint_norm {
                out.num("endpoint_norm", n);
            }
            if let Some(n) = rep.norm_at_c {
                out.num("norm_at_c", n);
            }
            if let Some(n) = rep.fiber_line_defect {
                out.num("fiber_line_defect", n);
            }
            out.flag("hypothesis", rep.hypothesis);
            if rep.hypothesis {
                out.must_hold("certified", rep.certified);
            } else {
                out.flag("certified", rep.certified);
            }
            out.details = details(&rep);
        }
        LiftMode::LongHomotopy => {
            if patch.name != "clifford_torus" {
                return Err(Failure::Parameter("the long homotopy construction is defined for `clifford_torus` only".into()));
            }
            let foc = lift_focal(sc, &patch, tol)?;
            let (nt, ns) = grid2(sc, [201, 21])?;
            let grid = clifford_long_homotopy(nt, ns)?;
            let rep = long_homotopy_scan(&patch, &grid, foc)?;
            let applicable = rep.status == ScanStatus::Applicable;
            out.num("max_length", rep.max_length)
                .num("bound", rep.bound)
                .num("slack", rep.slack)
                .num("first_row_length", rep.row_lengths[0])
                .flag("applicable", applicable)
                .must_hold("reaches_bound", rep.pass);
            out.details = details(&rep);
        }
    }
    Ok(out)
}

fn expectation_rows(sc: &ScenarioConfig, out: &Output) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for q in &out.quantities {
        if let Some(b) = &q.builtin {
            rows.push(CheckRow {
                scenario: sc.id.clone(),
                op: sc.op.name(),
                check: q.name.to_string(),
                value: q.value.display(),
                reference: b.reference.clone(),
                source: "built-in".into(),
                tolerance: b.tolerance.map(|t| format!("{t:e}")).unwrap_or_default(),
                margin: b.margin.map(fmt_num).unwrap_or_default(),
                pass: b.pass,
            });
        }
    }
    for (key, e) in &sc.expect {
        let source = e.source.clone().unwrap_or_default();
        let found = out.quantities.iter().find(|q| q.name == key);
        let mut row = CheckRow {
            scenario: sc.id.clone(),
            op: sc.op.name(),
            check: key.clone(),
            value: found.map(|q| q.value.display()).unwrap_or_else(|| "not reported".into()),
            reference: String::new(),
            source,
            tolerance: String::new(),
            margin: String::new(),
            pass: false,
        };
        match (&e.value, found.map(|q| &q.value)) {
            (ExpectValue::Bool(want), got) => {
                row.reference = want.to_string();
                row.pass = got == Some(&QValue::Bool(*want));
            }
            (ExpectValue::Num(n), got) => {
                let want = n.value(key).unwrap_or(f64::NAN);
                let tol = e.tol.unwrap_or(DEFAULT_EXPECT_TOL);
                row.reference = fmt_num(want);
                row.tolerance = format!("{tol:e}");
                if let Some(QValue::Num(v)) = got {
                    let margin = if want.is_infinite() && *v == want { tol } else { tol - (v - want).abs() };
                    row.margin = fmt_num(margin);
                    row.pass = margin >= 0.0;
                }
            }
        }
        rows.push(row);
    }
    rows
}

/// Run one scenario; failures are captured in the outcome.
pub fn run_scenario(sc: &ScenarioConfig, st: &Settings) -> Outcome {
    let result = validate(sc).and_then(|_| match sc.op {
        Op::Curvature => run_curvature(sc, st),
        Op::Focal => run_focal(sc, st),
        Op::Index => run_index(sc, st),
        Op::Compare => run_compare(sc, st),
        Op::Frankel => run_frankel(sc, st),
        Op::Lift => run_lift(sc, st),
    });
    match result {
        Ok(out) => {
            let checks = expectation_rows(sc, &out);
            let pass = checks.iter().all(|c| c.pass);
            Outcome {
                id: sc.id.clone(),
                op: sc.op.name(),
                status: if pass { "pass" } else { "fail" },
                error: None,
                checks,
                quantities: out.quantities,
                details: out.details,
                failure: None,
                trace_csv: out.trace_csv,
                lift_csv: out.lift_csv,
            }
        }
        Err(f) => Outcome {
            id: sc.id.clone(),
            op: sc.op.name(),
            status: "error",
            error: Some(json!({ "kind": f.kind(), "exit_code": f.exit_code(), "message": f.message() })),
            checks: vec![CheckRow {
                scenario: sc.id.clone(),
                op: sc.op.name(),
                check: "error".into(),
                value: f.message().to_string(),
                reference: String::new(),
                source: f.kind().into(),
                tolerance: String::new(),
                margin: String::new(),
                pass: false,
            }],
            quantities: Vec::new(),
            details: Value::Null,
            failure: Some(f),
            trace_csv: None,
            lift_csv: None,
        },
    }
}

/// Run scenarios in the rayon pool, keeping their order.
pub fn run_all(scenarios: &[ScenarioConfig], st: &Settings) -> Vec<Outcome> {
    scenarios.par_iter().map(|sc| run_scenario(sc, st)).collect()
}

/// Exit status of a finished batch: the first scenario error's code, else
/// 1 if any check failed, else 0.
pub fn exit_status(outcomes: &[Outcome]) -> i32 {
    if let Some(f) = outcomes.iter().find_map(|o| o.failure.as_ref()) {
        return f.exit_code();
    }
    if outcomes.iter().all(Outcome::passed) {
        crate::EXIT_PASS
    } else {
        crate::EXIT_CHECK_FAILED
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Expectation, ExpectValue};

    fn expect(value: ExpectValue, tol: Option<f64>) -> Expectation {
        Expectation { value, tol, source: Some("closed form".into()) }
    }

    #[test]
    fn numbers_format_compactly() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(2.5e-7), "2.5e-7");
        assert_eq!(fmt_num(-3e9), "-3e9");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn expectation_rows_compare_values() {
        let mut sc = ScenarioConfig::new("x", Op::Focal);
        sc.expect.insert("focal_radius".into(), expect(ExpectValue::Num(Number::Float(0.785)), Some(1e-3)));
        sc.expect.insert("condition".into(), expect(ExpectValue::Bool(true), None));
        sc.expect.insert("trace_sup".into(), expect(ExpectValue::Num(Number::Int(1)), None));
        let mut out = Output::new(Value::Null);
        out.num("focal_radius", std::f64::consts::FRAC_PI_4).flag("condition", false).at_most("principal_max", 2.0, 1.0);
        let rows = expectation_rows(&sc, &out);
        let get = |c: &str| rows.iter().find(|r| r.check == c).unwrap();
        assert!(!get("principal_max").pass);
        assert_eq!(get("principal_max").source, "built-in");
        assert!(get("focal_radius").pass);
        assert!(get("focal_radius").margin.parse::<f64>().unwrap() > 0.0);
        assert!(!get("condition").pass);
        assert_eq!(get("trace_sup").value, "not reported");
        assert!(!get("trace_sup").pass);
    }

    #[test]
    fn validation_rejects_bad_modes_and_keys() {
        let mut sc = ScenarioConfig::new("x", Op::Lift);
        sc.mode = Some("sideways".into());
        assert!(matches!(validate(&sc), Err(Failure::Config(_))));
        let mut sc = ScenarioConfig::new("x", Op::Frankel);
        sc.mode = Some("random".into());
        assert!(matches!(validate(&sc), Err(Failure::Config(_))));
        let mut sc = ScenarioConfig::new("x", Op::Index);
        sc.mode = Some("random".into());
        sc.expect.insert("index".into(), expect(ExpectValue::Num(Number::Int(1)), None));
        assert!(matches!(validate(&sc), Err(Failure::Config(_))));
        let mut sc = ScenarioConfig::new("x", Op::Focal);
        sc.patch = Some("clifford".into());
        assert!(matches!(validate(&sc), Err(Failure::UnknownName(_))));
    }

    #[test]
    fn exit_status_prefers_errors_over_failed_checks() {
        let st = Settings::default();
        let mut bad = ScenarioConfig::new("bad", Op::Curvature);
        bad.chart = Some("s3_unit".into());
        bad.k = Some(0);
        let mut missing = ScenarioConfig::new("missing", Op::Focal);
        missing.patch = None;
        let outs = run_all(&[bad, missing], &st);
        assert_eq!(outs[0].failure.as_ref().map(Failure::exit_code), Some(4));
        assert_eq!(outs[1].failure.as_ref().map(Failure::exit_code), Some(2));
        assert_eq!(exit_status(&outs), 4);
        assert_eq!(exit_status(&[]), crate::EXIT_PASS);
    }
}
