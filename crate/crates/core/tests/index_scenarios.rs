use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DVector;
use riclab::index::{index_report, EndmanifoldSetup, IndexOptions};
use riclab::jacobi::JacobiPropagator;
use riclab::submanifold::normal_geodesic;
use riclab::zoo;

fn setup(start: &str, u: Vec<f64>, eta: f64, b: f64, end: &str, w: Vec<f64>) -> EndmanifoldSetup {
    let n = zoo::patch(start).unwrap();
    let m = zoo::patch(end).unwrap();
    let path = normal_geodesic(&n, &u, 0, &DVector::from_vec(vec![eta]), b, 1e-8).unwrap();
    EndmanifoldSetup::new(JacobiPropagator::new(path).unwrap(), n, u, 0, m, w, 0).unwrap()
}

fn degenerate() -> IndexOptions {
    IndexOptions {
        allow_degenerate: true,
        ..IndexOptions::default()
    }
}

#[test]
fn clifford_self_connector() {
    let s = setup("clifford_torus", vec![0.0, 0.0], 1.0, FRAC_PI_2, "clifford_torus", vec![0.0, PI]);
    let r = index_report(&s, IndexOptions::default()).unwrap();
    assert_eq!(r.focal_count, 1, "{r:#?}");
    assert_eq!(r.index_a, 0);
    assert_eq!(r.total_hk, 1);
    assert_eq!(r.agrees_with_oracle(), Some(true), "{r:#?}");
}

#[test]
fn clifford_to_core_circle_is_minimal() {
    let s = setup("clifford_torus", vec![0.0, 0.0], 1.0, FRAC_PI_4, "coord_circle", vec![0.0]);
    assert!(index_report(&s, IndexOptions::default()).is_err());
    let r = index_report(&s, degenerate()).unwrap();
    assert!(r.endpoint_focal);
    assert_eq!(r.index_a, 0);
    assert_eq!(r.dim_k_b, r.correction);
    assert_eq!(r.total_hk, 0, "{r:#?}");
    assert!(r.identity_holds, "{r:#?}");
    assert_eq!(r.agrees_with_oracle(), Some(true), "{r:#?}");
}

#[test]
fn equator_meridian_half_turn() {
    let s = setup("equator_s2_in_s3", vec![FRAC_PI_2, 0.0], 1.0, PI, "equator_s2_in_s3", vec![FRAC_PI_2, PI]);
    let r = index_report(&s, IndexOptions::default()).unwrap();
    assert_eq!(r.focal_count, 2, "{r:#?}");
    assert!(r.a_form.eigenvalues.iter().all(|e| e.abs() < 1e-6));
    assert_eq!(r.total_hk, 2);
    assert_eq!(r.agrees_with_oracle(), Some(true), "{r:#?}");
}

#[test]
fn point_to_antipode_is_degenerate_minimal() {
    let n = zoo::patch("point").unwrap();
    let m = zoo::patch("antipode").unwrap();
    let path = normal_geodesic(&n, &[], 0, &DVector::from_vec(vec![0.0, 1.0, 0.0]), PI, 1e-8).unwrap();
    let s = EndmanifoldSetup::new(JacobiPropagator::new(path).unwrap(), n, vec![], 0, m, vec![], 0).unwrap();
    let r = index_report(&s, degenerate()).unwrap();
    assert_eq!(r.focal_count, 2);
    assert_eq!(r.correction, 2);
    assert_eq!(r.total_hk, 0);
    assert!(r.identity_holds);
    assert_eq!(r.agrees_with_oracle(), Some(true), "{r:#?}");
}

#[test]
fn random_scenarios_agree_with_oracle() {
    use riclab::scenarios::{random_index_scenarios, Pairing};
    for (i, p) in Pairing::defaults().into_iter().enumerate() {
        let runs = random_index_scenarios(p, 10, 100 + i as u64, 1e-8).unwrap();
        for r in &runs {
            assert!(r.agrees(), "{} draw {}: {:#?}", r.pairing, r.draw, r.report);
        }
        let totals: Vec<usize> = runs.iter().map(|r| r.report.total_hk).collect();
        eprintln!("{}: {:?}", p.label(), totals);
    }
}

#[test]
fn focal_length_scenarios_satisfy_the_identity() {
    use riclab::scenarios::{focal_index_scenarios, Pairing};
    for (i, p) in Pairing::defaults().into_iter().enumerate() {
        let runs = focal_index_scenarios(p, 2, 300 + i as u64, 1e-8).unwrap();
        for r in &runs {
            assert!(r.report.endpoint_focal, "{} draw {}: {:#?}", r.pairing, r.draw, r.report);
            assert!(r.report.identity_holds, "{} draw {}: {:#?}", r.pairing, r.draw, r.report);
            assert!(r.agrees(), "{} draw {}: {:#?}", r.pairing, r.draw, r.report);
        }
    }
}
