//! Scenario files: TOML with a versioned schema; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use riclab::submanifold::NormalSampling;
use serde::{Deserialize, Serialize};

use crate::expr;
use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// A number written either literally or as an expression such as `"3*pi/4"`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Expr(String),
}

impl Number {
    pub fn value(&self, field: &str) -> Result<f64, Failure> {
        match self {
            Number::Int(i) => Ok(*i as f64),
            Number::Float(f) => Ok(*f),
            Number::Expr(s) => expr::eval(s).map_err(|e| Failure::Config(format!("`{field}`: {e}"))),
        }
    }
}

pub fn values(v: &[Number], field: &str) -> Result<Vec<f64>, Failure> {
    v.iter().map(|n| n.value(field)).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ExpectValue {
    Bool(bool),
    Num(Number),
}

/// Reference value for one reported quantity.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub value: ExpectValue,
    /// Absolute tolerance for numeric values (default 1e-6).
    #[serde(default)]
    pub tol: Option<f64>,
    /// Where the reference comes from, e.g. "closed form".
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Curvature,
    Focal,
    Index,
    Compare,
    Frankel,
    Lift,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Curvature => "curvature",
            Op::Focal => "focal",
            Op::Index => "index",
            Op::Compare => "compare",
            Op::Frankel => "frankel",
            Op::Lift => "lift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Fields vanishing at the start point.
    Point,
    /// Λ of the distance sphere of radius `s0` about the start point.
    DistanceSphere,
    /// Λ_N of a registered patch.
    Submanifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `Tr S|_H ≤ k cot(t + s0)`.
    Ricci,
    /// `Tr S|_H ≤ k cot(t)`.
    Cot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Conjugate-point index of a geodesic between fixed endpoints.
    Endpoint,
    /// Seeded random endmanifold scenarios compared with the index-form oracle.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMode {
    /// Random short curves starting on the patch.
    Random,
    /// The homotopy `exp⊥(u(t), s·a·sin(πt/b)·ν)` lifted from both ends.
    Homotopy,
    /// A normal geodesic with both ends on the patch.
    NoLift,
    /// Clifford torus: great-circle connector deformed into a torus loop.
    LongHomotopy,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub op: Op,
    #[serde(default)]
    pub chart: Option<String>,
    #[serde(default)]
    pub patch: Option<String>,
    /// Two patches (frankel).
    #[serde(default)]
    pub patches: Option<Vec<String>>,
    #[serde(default)]
    pub k: Option<usize>,
    /// Chart coordinates of a start point (defaults to the chart's base point).
    #[serde(default)]
    pub point: Option<Vec<Number>>,
    /// Tangent direction at `point`, or a parameter velocity for lift homotopies.
    #[serde(default)]
    pub direction: Option<Vec<Number>>,
    /// Patch parameters.
    #[serde(default)]
    pub params: Option<Vec<Number>>,
    #[serde(default)]
    pub component: Option<usize>,
    /// Normal-frame components of a normal vector.
    #[serde(default)]
    pub normal: Option<Vec<Number>>,
    #[serde(default)]
    pub length: Option<Number>,
    #[serde(default)]
    pub s0: Option<Number>,
    #[serde(default)]
    pub interval: Option<Vec<Number>>,
    #[serde(default)]
    pub family: Option<FamilyKind>,
    #[serde(default)]
    pub bound: Option<BoundKind>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub sampling: Option<NormalSampling>,
    /// Quasi-uniform directions for conjugate-radius searches.
    #[serde(default)]
    pub directions: Option<usize>,
    /// Random (point, direction) draws for curvature sampling.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Half-width of the coordinate box around `point` for random draws.
    #[serde(default)]
    pub spread: Option<Number>,
    /// Coarse grid of the distance search, or `[n_t, n_s]` for homotopies.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub amplitude: Option<Number>,
    #[serde(default)]
    pub max_length: Option<Number>,
    #[serde(default)]
    pub focal_radius: Option<Number>,
    /// Curvature of the constant-curvature model used for closed-form comparisons.
    #[serde(default)]
    pub model_curvature: Option<Number>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
}

impl ScenarioConfig {
    /// A scenario with every optional field unset.
    pub fn new(id: impl Into<String>, op: Op) -> Self {
        ScenarioConfig {
            id: id.into(),
            op,
            chart: None,
            patch: None,
            patches: None,
            k: None,
            point: None,
            direction: None,
            params: None,
            component: None,
            normal: None,
            length: None,
            s0: None,
            interval: None,
            family: None,
            bound: None,
            mode: None,
            sampling: None,
            directions: None,
            samples: None,
            spread: None,
            grid: None,
            count: None,
            amplitude: None,
            max_length: None,
            focal_radius: None,
            model_curvature: None,
            tol: None,
            seed: None,
            expect: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Config = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Failure::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if let Some(t) = cfg.tol {
            if t.is_nan() || t <= 0.0 {
                return Err(Failure::Parameter(format!("tol = {t} must be positive")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &cfg.scenarios {
            if !seen.insert(s.id.as_str()) {
                return Err(Failure::Config(format!("duplicate scenario id `{}`", s.id)));
            }
            if s.id.is_empty() || s.id.contains(|c: char| c == ',' || c == '"' || c.is_whitespace()) {
                return Err(Failure::Config(format!("scenario id `{}` must be nonempty without commas, quotes or spaces", s.id)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_scenario() {
        let cfg = Config::parse(
            r#"
            schema_version = 1
            seed = 3
            [[scenario]]
            id = "focal"
            op = "focal"
            patch = "clifford_torus"
            sampling = { params = 8, directions = 4 }
            expect.focal_radius = { value = "pi/4", tol = 1e-4, source = "closed form" }
            expect.condition = { value = false }
            "#,
        )
        .unwrap();
        let s = &cfg.scenarios[0];
        assert_eq!(s.op, Op::Focal);
        let e = &s.expect["focal_radius"];
        match &e.value {
            ExpectValue::Num(n) => assert_eq!(n.value("x").unwrap(), std::f64::consts::FRAC_PI_4),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.expect["condition"].value, ExpectValue::Bool(false));
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let typo = "schema_version = 1\n[[scenario]]\nid = \"a\"\nop = \"focal\"\npatc = \"x\"\n";
        assert!(matches!(Config::parse(typo), Err(Failure::Config(_))));
        assert!(matches!(Config::parse("schema_version = 2\n"), Err(Failure::Config(_))));
        assert!(matches!(Config::parse("schema_version = 1\nextra = 1\n"), Err(Failure::Config(_))));
        let dup = "schema_version = 1\n[[scenario]]\nid = \"a\"\nop = \"focal\"\n[[scenario]]\nid = \"a\"\nop = \"lift\"\n";
        assert!(matches!(Config::parse(dup), Err(Failure::Config(_))));
    }

    #[test]
    fn numbers_accept_integers_floats_and_expressions() {
        assert_eq!(Number::Int(2).value("x").unwrap(), 2.0);
        assert_eq!(Number::Expr("pi/2".into()).value("x").unwrap(), std::f64::consts::FRAC_PI_2);
        assert!(matches!(Number::Expr("pi/".into()).value("x"), Err(Failure::Config(_))));
    }
}
