use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use riclab::lifting::{
    lift_curve, lift_homotopy, long_homotopy_scan, no_lift_certificate, random_short_curves, HomotopyGrid, ScanStatus,
};
use riclab::submanifold::{exp_normal, stereo};
use riclab::zoo;

fn chart_point(x: [f64; 4]) -> DVector<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    DVector::from_vec(stereo::to_chart(&x.map(|v| v / n), 1.0))
}

#[test]
fn flat_cylinder_normal_segment_has_no_lift() {
    let n = zoo::patch("two_circles").unwrap();
    let u = [0.5];
    let fr = n.frame(&u, 0).unwrap();
    let up = if fr.normal[(1, 0)] > 0.0 { 1.0 } else { -1.0 };
    let rep = no_lift_certificate(&n, &u, 0, &DVector::from_vec(vec![up]), 1.0, f64::INFINITY, 1e-8).unwrap();
    assert!(rep.hypothesis && rep.certified);
    assert_abs_diff_eq!(rep.endpoint_norm.unwrap(), 1.0, epsilon = 1e-8);
    assert!(rep.fiber_line_defect.unwrap() < 1e-8);
}

#[test]
fn equator_half_circle_is_diagnostic_only() {
    // b = π equals 2·foc, so the hypothesis fails and nothing is certified
    let n = zoo::patch("equator_s2_in_s3").unwrap();
    let rep = no_lift_certificate(&n, &[0.9, 0.3], 0, &DVector::from_vec(vec![1.0]), PI, FRAC_PI_2, 1e-8).unwrap();
    assert!(!rep.hypothesis && !rep.certified);
}

#[test]
fn in_tube_homotopy_matches_closed_form_lift() {
    let n = zoo::patch("clifford_torus").unwrap();
    let (b, a) = (1.0, 0.3);
    let u0 = [0.4, 1.0];
    let d = [0.5, 0.4];
    let nu = DVector::from_vec(vec![1.0]);
    let base = |t: f64| vec![u0[0] + d[0] * t, u0[1] + d[1] * t];
    let eta = |t: f64, s: f64| s * a * (PI * t / b).sin();
    let grid = HomotopyGrid::sample(b, 31, 7, |t, s| exp_normal(&n, &base(t), 0, &(&nu * eta(t, s)), 1e-10).unwrap()).unwrap();
    let lift = lift_homotopy(&n, &grid, FRAC_PI_4, 1e-10).unwrap();
    assert!(lift.pass, "{:?} {} {}", lift.first_mismatch, lift.max_adjacent, lift.boundary_norm);
    for (s, row) in lift.s.iter().zip(&lift.rows) {
        for (t, p) in row.t.iter().zip(&row.samples) {
            let ub = base(*t);
            assert_abs_diff_eq!(p.eta[0], eta(*t, *s), epsilon = 1e-7);
            assert_abs_diff_eq!(p.param[0], ub[0], epsilon = 1e-7);
            assert_abs_diff_eq!(p.param[1], ub[1], epsilon = 1e-7);
        }
    }
    assert!(lift.defects.iter().all(|&e| e <= 1e-6));
}

#[test]
fn clifford_long_homotopy_reaches_twice_focal_radius() {
    let n = zoo::patch("clifford_torus").unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let p0 = [r, 0.0, r, 0.0];
    let p1 = [r, 0.0, -r, 0.0];
    let h = |t: f64, s: f64| {
        let (c, sn) = (t * FRAC_PI_2).sin_cos();
        let g: [f64; 4] = std::array::from_fn(|i| sn * p0[i] + c * p1[i]);
        let (ct, st) = (t * PI).sin_cos();
        let loop_pt = [r, 0.0, r * st, r * ct];
        chart_point(std::array::from_fn(|i| (1.0 - s) * g[i] + s * loop_pt[i]))
    };
    let grid = HomotopyGrid::sample(1.0, 201, 21, h).unwrap();
    let rep = long_homotopy_scan(&n, &grid, FRAC_PI_4).unwrap();
    assert_eq!(rep.status, ScanStatus::Applicable);
    assert!(rep.pass, "{} vs {}", rep.max_length, rep.bound);
    assert_abs_diff_eq!(rep.row_lengths[0], FRAC_PI_2, epsilon = 1e-4);
}

#[test]
fn homotopy_inside_n_is_inapplicable() {
    let n = zoo::patch("clifford_torus").unwrap();
    let grid = HomotopyGrid::sample(1.0, 21, 3, |t, _| n.embed(&[0.2 + t, 0.5], 0).unwrap()).unwrap();
    let rep = long_homotopy_scan(&n, &grid, FRAC_PI_4).unwrap();
    assert!(matches!(rep.status, ScanStatus::Inapplicable { .. }));
    assert!(!rep.pass);
}

#[test]
fn random_short_curves_lift_inside_the_tube() {
    for (name, foc, seed) in [("equator_s2_in_s3", FRAC_PI_2, 11), ("clifford_torus", FRAC_PI_4, 12)] {
        let n = zoo::patch(name).unwrap();
        for c in random_short_curves(&n, 50, seed, 0.9 * foc, 41).unwrap() {
            let lift = lift_curve(&n, &c.curve, &c.start, Some(foc), 1e-8).unwrap();
            assert!(lift.round_trip <= 1e-6, "{name}: round trip {}", lift.round_trip);
            assert!(lift.max_norm <= lift.source_length + 1e-6, "{name}: {} > {}", lift.max_norm, lift.source_length);
        }
    }
}

#[test]
fn equator_lift_matches_tube_coordinates() {
    // for the equator {X_4 = 0}, a point x of S^3 has tube coordinates
    // base = (x_1, x_2, x_3)/|.| and |η| = asin|x_4|
    let n = zoo::patch("equator_s2_in_s3").unwrap();
    let curves = random_short_curves(&n, 10, 5, 0.5, 41).unwrap();
    for c in &curves {
        let lift = lift_curve(&n, &c.curve, &c.start, Some(FRAC_PI_2), 1e-8).unwrap();
        assert!(lift.max_norm <= 0.5 + 1e-6);
        for (i, p) in lift.samples.iter().enumerate() {
            let x = stereo::from_chart(&c.curve.point(i), 1.0);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            assert_abs_diff_eq!(p.norm, x[3].abs().asin(), epsilon = 1e-7);
            let foot = stereo::from_chart(&n.embed(&p.param, 0).unwrap(), 1.0);
            for j in 0..3 {
                assert_abs_diff_eq!(foot[j], x[j] / r, epsilon = 1e-7);
            }
        }
    }
}

#[test]
fn lifts_are_unique_and_degenerate_homotopies_repeat_them() {
    let n = zoo::patch("clifford_torus").unwrap();
    let c = random_short_curves(&n, 1, 9, 0.6, 31).unwrap().remove(0);
    let a = lift_curve(&n, &c.curve, &c.start, Some(FRAC_PI_4), 1e-8).unwrap();
    let b = lift_curve(&n, &c.curve, &c.start, Some(FRAC_PI_4), 1e-8).unwrap();
    for (p, q) in a.samples.iter().zip(&b.samples) {
        assert!(riclab::lifting::bundle_distance(&n, p, q).unwrap() <= 1e-8);
    }

    // a loop on N, constant in s, lifts row by row to the zero section
    let grid = HomotopyGrid::sample(1.0, 21, 4, |t, _| n.embed(&[0.3 + 0.4 * t, 1.0 + 0.2 * (PI * t).sin()], 0).unwrap()).unwrap();
    let row = lift_curve(&n, &grid.rows[0], &riclab::lifting::NormalBundlePoint::zero(vec![0.3, 1.0], 0, 1), None, 1e-8).unwrap();
    let h = lift_homotopy(&n, &grid, FRAC_PI_4, 1e-8).unwrap();
    assert!(h.pass);
    for lifted in &h.rows {
        for (p, q) in lifted.samples.iter().zip(&row.samples) {
            assert!(riclab::lifting::bundle_distance(&n, p, q).unwrap() <= 1e-8);
        }
    }
}
