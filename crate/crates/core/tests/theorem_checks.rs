use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use riclab::comparison::{frankel_check, theorem_a_check, theorem_b_check};
use riclab::submanifold::NormalSampling;
use riclab::zoo;

fn base(name: &str) -> DVector<f64> {
    DVector::from_vec(zoo::chart_entry(name).unwrap().base_point)
}

#[test]
fn product_of_spheres_meets_conjugate_hypothesis() {
    let chart = zoo::chart("s2x2_k3").unwrap();
    let rep = theorem_a_check(&chart, &base("s2x2_k3"), 3, 16, 1e-8).unwrap();
    assert_abs_diff_eq!(rep.ric_k_min, 3.0, epsilon = 1e-6);
    assert_abs_diff_eq!(rep.conj_radius.value(), PI / 3f64.sqrt(), epsilon = 1e-4);
    assert!(rep.hypothesis);
    assert_eq!(rep.predicted.degree, 1);
}

#[test]
fn complex_projective_plane_fails_strictness() {
    let chart = zoo::chart("cp2_fs").unwrap();
    let rep = theorem_a_check(&chart, &base("cp2_fs"), 2, 16, 1e-8).unwrap();
    assert_abs_diff_eq!(rep.ric_k_min, 2.0, epsilon = 1e-5);
    assert_abs_diff_eq!(rep.conj_radius.value(), FRAC_PI_2, epsilon = 1e-4);
    assert!(!rep.hypothesis);
}

#[test]
fn round_sphere_conjugate_radius() {
    let chart = zoo::chart("s3_unit").unwrap();
    let rep = theorem_a_check(&chart, &base("s3_unit"), 1, 12, 1e-8).unwrap();
    assert_abs_diff_eq!(rep.ric_k_min, 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(rep.conj_radius.value(), PI, epsilon = 1e-4);
    assert!(rep.hypothesis);
    assert_eq!(rep.predicted.degree, 2);
}

#[test]
fn focal_condition_examples() {
    let s = NormalSampling::default();
    let cliff = theorem_b_check(&zoo::patch("clifford_torus").unwrap(), 1, s, 1e-8).unwrap();
    assert_abs_diff_eq!(cliff.admissible.r, FRAC_PI_4, epsilon = 1e-6);
    assert_abs_diff_eq!(cliff.focal_radius.value(), FRAC_PI_4, epsilon = 1e-4);
    assert!(!cliff.condition);

    let eq = theorem_b_check(&zoo::patch("equator_s2_in_s3").unwrap(), 1, s, 1e-8).unwrap();
    assert_abs_diff_eq!(eq.admissible.r, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(eq.focal_radius.value(), FRAC_PI_2, epsilon = 1e-4);
    assert!(eq.hypothesis);
    assert_eq!(eq.predicted.degree, 2);

    let circ = theorem_b_check(&zoo::patch("coord_circle").unwrap(), 1, s, 1e-8).unwrap();
    assert_abs_diff_eq!(circ.focal_radius.value(), FRAC_PI_2, epsilon = 1e-4);
    assert!(circ.condition);
    assert_eq!(circ.predicted.degree, 0);
    assert!(circ.predicted.vacuous);
}

#[test]
fn frankel_examples() {
    let s = NormalSampling::default();
    let cliff = zoo::patch("clifford_torus").unwrap();
    let circ = zoo::patch("coord_circle").unwrap();
    let rep = frankel_check(&cliff, &circ, 1, s, 16, 1e-8).unwrap();
    assert!(rep.dim_condition && rep.pass);
    assert_abs_diff_eq!(rep.distance.value, FRAC_PI_4, epsilon = 1e-4);
    assert!(rep.equality_gap <= 1e-4, "{}", rep.equality_gap);

    let eq = zoo::patch("equator_s2_in_s3").unwrap();
    let tilted = zoo::patch("equator_tilted").unwrap();
    let rep = frankel_check(&eq, &tilted, 1, s, 16, 1e-8).unwrap();
    assert!(rep.distance.intersect && rep.pass);
    assert_abs_diff_eq!(rep.distance.value, 0.0, epsilon = 1e-8);

    let rep = frankel_check(&cliff, &cliff, 1, s, 16, 1e-8).unwrap();
    assert!(rep.pass);
    assert_abs_diff_eq!(rep.bound, FRAC_PI_2, epsilon = 1e-6);
}
