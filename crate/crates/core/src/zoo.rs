//! Named charts and patches with their known constants.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::manifold::{MetricChart, MetricFamily};
use crate::submanifold::{PatchShape, S3Model, SubmanifoldPatch};

/// A documented constant of a zoo entry.
#[derive(Debug, Clone, Serialize)]
pub struct Constant {
    pub quantity: &'static str,
    pub expression: &'static str,
    pub value: f64,
    /// How the value is known: "closed form" or "numerical".
    pub source: &'static str,
}

const fn closed(quantity: &'static str, expression: &'static str, value: f64) -> Constant {
    Constant {
        quantity,
        expression,
        value,
        source: "closed form",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub dim: usize,
    /// Default base point for point-based checks; its antipodal or cut
    /// locus points lie inside the chart.
    pub base_point: Vec<f64>,
    pub constants: Vec<Constant>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatchEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub chart: &'static str,
    pub dim: usize,
    pub constants: Vec<Constant>,
}

const S3_BOX: f64 = 40.0;

fn s3_family() -> MetricFamily {
    MetricFamily::SphereStereo { dim: 3, curvature: 1.0 }
}

fn build_chart(name: &str) -> Option<(MetricChart, ChartEntry)> {
    let sqrt3 = 3f64.sqrt();
    let (family, domain, description, base_point, constants): (MetricFamily, Vec<(f64, f64)>, &'static str, Vec<f64>, Vec<Constant>) =
        match name {
            "s3_unit" => (
                s3_family(),
                vec![(-S3_BOX, S3_BOX); 3],
                "unit 3-sphere, stereographic coordinates",
                vec![1.0, 0.0, 0.0],
                vec![
                    closed("sec", "1", 1.0),
                    closed("ric_k / k", "1", 1.0),
                    closed("conjugate radius", "pi", PI),
                ],
            ),
            "s2_unit" => (
                MetricFamily::SpherePolar { curvature: 1.0 },
                vec![(1e-3, PI - 1e-3), (-4.0 * PI, 4.0 * PI)],
                "unit 2-sphere, colatitude/longitude",
                vec![FRAC_PI_2, 0.0],
                vec![closed("sec", "1", 1.0), closed("conjugate radius", "pi", PI)],
            ),
            "s2x2_k3" => (
                MetricFamily::Product {
                    factors: vec![
                        MetricFamily::SphereStereo { dim: 2, curvature: 3.0 },
                        MetricFamily::SphereStereo { dim: 2, curvature: 3.0 },
                    ],
                },
                vec![(-S3_BOX, S3_BOX); 4],
                "product of two 2-spheres of curvature 3, stereographic coordinates",
                vec![1.0 / sqrt3, 0.0, 1.0 / sqrt3, 0.0],
                vec![
                    closed("ric_3", "3", 3.0),
                    closed("sec, same factor", "3", 3.0),
                    closed("sec, mixed factors", "0", 0.0),
                    closed("conjugate radius", "pi/sqrt(3)", PI / sqrt3),
                ],
            ),
            "cp2_fs" => (
                MetricFamily::FubiniStudy { complex_dim: 2 },
                vec![(-30.0, 30.0); 4],
                "complex projective plane, Fubini-Study metric with sec in [1, 4], affine chart",
                vec![1.0, 0.0, 0.0, 0.0],
                vec![
                    closed("sec min", "1", 1.0),
                    closed("sec max", "4", 4.0),
                    closed("ric_1", "1", 1.0),
                    closed("ric_2", "2", 2.0),
                    closed("ric_3", "6", 6.0),
                    closed("conjugate radius", "pi/2", FRAC_PI_2),
                ],
            ),
            "flat_rn" => (
                MetricFamily::Euclidean { dim: 3 },
                vec![(-1e3, 1e3); 3],
                "Euclidean 3-space",
                vec![0.0, 0.0, 0.0],
                vec![closed("sec", "0", 0.0)],
            ),
            "flat_cylinder" => (
                MetricFamily::Euclidean { dim: 2 },
                vec![(-1e3, 1e3); 2],
                "flat cylinder of circumference 2 pi, universal-cover coordinates (theta, z)",
                vec![0.0, 0.0],
                vec![closed("sec", "0", 0.0)],
            ),
            _ => return None,
        };
    let chart = MetricChart::new(name, family, domain);
    let entry = ChartEntry {
        name: CHART_NAMES.iter().find(|n| **n == name).copied().unwrap(),
        description,
        dim: chart.dim(),
        base_point,
        constants,
    };
    Some((chart, entry))
}

pub const CHART_NAMES: [&str; 6] = ["s3_unit", "s2_unit", "s2x2_k3", "cp2_fs", "flat_rn", "flat_cylinder"];

pub const PATCH_NAMES: [&str; 9] = [
    "clifford_torus",
    "coord_circle",
    "equator_s2_in_s3",
    "equator_tilted",
    "point",
    "antipode",
    "s2_factor",
    "point_s2x2",
    "two_circles",
];

fn unknown(kind: &'static str, name: &str, known: &[&str]) -> GeomError {
    let mut ranked: Vec<(f64, &str)> = known.iter().map(|k| (strsim::jaro_winkler(name, k), *k)).collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    GeomError::UnknownName {
        kind,
        name: name.to_string(),
        known: ranked.into_iter().map(|(_, k)| k.to_string()).collect(),
    }
}

/// Chart by registry name.
pub fn chart(name: &str) -> Result<MetricChart> {
    build_chart(name).map(|(c, _)| c).ok_or_else(|| unknown("chart", name, &CHART_NAMES))
}

pub fn chart_entry(name: &str) -> Result<ChartEntry> {
    build_chart(name).map(|(_, e)| e).ok_or_else(|| unknown("chart", name, &CHART_NAMES))
}

/// Rotation of `R^4` in the `(X_3, X_4)` plane.
fn tilt(angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    vec![
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, c, -s, //
        0.0, 0.0, s, c,
    ]
}

fn patch_info(name: &str) -> Option<(PatchEntry, &'static str, PatchShape)> {
    let sqrt3 = 3f64.sqrt();
    let (chart, description, shape, constants): (&'static str, &'static str, PatchShape, Vec<Constant>) = match name {
        "clifford_torus" => (
            "s3_unit",
            "Clifford torus |z1| = |z2| = 1/sqrt(2)",
            PatchShape::Sphere3 {
                model: S3Model::CliffordTorus,
                rotation: None,
            },
            vec![
                closed("principal curvatures", "+1, -1", 1.0),
                closed("focal radius", "pi/4", FRAC_PI_4),
                closed("second focal time", "3 pi/4", 3.0 * FRAC_PI_4),
                closed("min admissible r (k=1)", "pi/4", FRAC_PI_4),
                closed("distance to coord_circle", "pi/4", FRAC_PI_4),
            ],
        ),
        "coord_circle" => (
            "s3_unit",
            "great circle {(z, 0)}",
            PatchShape::Sphere3 {
                model: S3Model::GreatCircle,
                rotation: None,
            },
            vec![
                closed("shape operator", "0", 0.0),
                closed("focal radius", "pi/2", FRAC_PI_2),
                closed("min admissible r (k=1)", "0", 0.0),
            ],
        ),
        "equator_s2_in_s3" => (
            "s3_unit",
            "totally geodesic 2-sphere {X_4 = 0}",
            PatchShape::Sphere3 {
                model: S3Model::GreatSphere,
                rotation: None,
            },
            vec![closed("shape operator", "0", 0.0), closed("focal radius", "pi/2", FRAC_PI_2)],
        ),
        "equator_tilted" => (
            "s3_unit",
            "totally geodesic 2-sphere, the equator rotated by one radian in the (X_3, X_4) plane",
            PatchShape::Sphere3 {
                model: S3Model::GreatSphere,
                rotation: Some(tilt(1.0)),
            },
            vec![
                closed("focal radius", "pi/2", FRAC_PI_2),
                closed("distance to equator_s2_in_s3", "0", 0.0),
            ],
        ),
        "point" => (
            "s3_unit",
            "the point (1, 0, 0, 0)",
            PatchShape::Point {
                coords: vec![1.0, 0.0, 0.0],
            },
            vec![closed("focal radius", "pi", PI)],
        ),
        "antipode" => (
            "s3_unit",
            "the point (-1, 0, 0, 0)",
            PatchShape::Point {
                coords: vec![-1.0, 0.0, 0.0],
            },
            vec![closed("distance to point", "pi", PI)],
        ),
        "s2_factor" => (
            "s2x2_k3",
            "factor sphere {p} x S^2",
            PatchShape::ProductFactor {
                offset: 2,
                factor_dim: 2,
                base: vec![1.0 / sqrt3, 0.0, 0.0, 0.0],
            },
            vec![
                closed("shape operator", "0", 0.0),
                closed("focal radius", "pi/sqrt(3)", PI / sqrt3),
            ],
        ),
        "point_s2x2" => (
            "s2x2_k3",
            "base point of s2x2_k3",
            PatchShape::Point {
                coords: vec![1.0 / sqrt3, 0.0, 1.0 / sqrt3, 0.0],
            },
            vec![closed("conjugate radius", "pi/sqrt(3)", PI / sqrt3)],
        ),
        "two_circles" => (
            "flat_cylinder",
            "the circles z = 0 and z = 1",
            PatchShape::FlatLines {
                direction: vec![1.0, 0.0],
                offsets: vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            },
            vec![closed("distance between components", "1", 1.0)],
        ),
        _ => return None,
    };
    let entry = PatchEntry {
        name: PATCH_NAMES.iter().find(|n| **n == name).copied().unwrap(),
        description,
        chart,
        dim: match &shape {
            PatchShape::Sphere3 { model, .. } => model.dim(),
            PatchShape::Point { .. } => 0,
            PatchShape::ProductFactor { factor_dim, .. } => *factor_dim,
            PatchShape::FlatLines { .. } => 1,
        },
        constants,
    };
    Some((entry, chart, shape))
}

/// Patch by registry name.
pub fn patch(name: &str) -> Result<SubmanifoldPatch> {
    let (_, chart_name, shape) = patch_info(name).ok_or_else(|| unknown("patch", name, &PATCH_NAMES))?;
    SubmanifoldPatch::new(name, chart(chart_name)?, shape)
}

pub fn patch_entry(name: &str) -> Result<PatchEntry> {
    patch_info(name).map(|(e, _, _)| e).ok_or_else(|| unknown("patch", name, &PATCH_NAMES))
}

/// A chart or patch entry.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Chart(ChartEntry),
    Patch(PatchEntry),
}

/// Chart or patch by name; suggestions range over both registries.
pub fn entry(name: &str) -> Result<Entry> {
    if let Ok(c) = chart_entry(name) {
        return Ok(Entry::Chart(c));
    }
    if let Ok(p) = patch_entry(name) {
        return Ok(Entry::Patch(p));
    }
    let all: Vec<&str> = CHART_NAMES.iter().chain(PATCH_NAMES.iter()).copied().collect();
    Err(unknown("entry", name, &all))
}

/// Full registry listing.
#[derive(Debug, Clone, Serialize)]
pub struct ZooListing {
    pub charts: Vec<ChartEntry>,
    pub patches: Vec<PatchEntry>,
}

pub fn zoo_list() -> ZooListing {
    ZooListing {
        charts: CHART_NAMES.iter().map(|n| chart_entry(n).expect("registered")).collect(),
        patches: PATCH_NAMES.iter().map(|n| patch_entry(n).expect("registered")).collect(),
    }
}

/// S^3 model with a base parameter, its point, a unit normal there and a
/// completing tangent frame, all in `R^4`.
pub fn s3_model_base(model: S3Model) -> (Vec<f64>, [[f64; 4]; 4]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match model {
        S3Model::CliffordTorus => (
            vec![0.0, 0.0],
            [[s, 0.0, s, 0.0], [s, 0.0, -s, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
        ),
        S3Model::GreatCircle => (
            vec![0.0],
            [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
        ),
        S3Model::GreatSphere => (
            vec![FRAC_PI_2, 0.0],
            [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for n in CHART_NAMES {
            chart(n).unwrap();
        }
        for n in PATCH_NAMES {
            let p = patch(n).unwrap();
            assert_eq!(p.dim_sub, patch_entry(n).unwrap().dim);
        }
    }

    #[test]
    fn unknown_name_suggests() {
        match chart("s3_unti") {
            Err(GeomError::UnknownName { known, .. }) => assert_eq!(known[0], "s3_unit"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(patch("torus"), Err(GeomError::UnknownName { .. })));
    }

    #[test]
    fn listing_has_constants() {
        let z = zoo_list();
        assert!(z.charts.iter().all(|c| !c.constants.is_empty()));
        assert!(z.patches.iter().all(|p| !p.constants.is_empty()));
    }
}
