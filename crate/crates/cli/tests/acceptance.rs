//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riclab::comparison::{frankel_check, low_trace_subspace, sample_curvature, theorem_a_check, LowTrace};
use riclab::scenarios::{focal_index_scenarios, random_index_scenarios, Pairing};
use riclab::submanifold::{focal_radius, min_admissible_r, normal_samples, NormalSampling, DEFAULT_HORIZON};
use riclab::zoo;
use riclab_cli::config::{Config, ScenarioConfig};
use riclab_cli::run::{run_scenario, Outcome, QValue, Settings};

type Check = Result<String, String>;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(file: &str) -> Config {
    Config::load(&scenario_dir().join(file)).expect("shipped config parses")
}

fn settings(cfg: &Config) -> Settings {
    Settings {
        seed: cfg.seed.unwrap_or(0),
        tol: cfg.tol.unwrap_or(riclab_cli::run::DEFAULT_TOL),
    }
}

fn run_id(file: &str, id: &str) -> Outcome {
    let cfg = load(file);
    let sc: &ScenarioConfig = cfg.scenarios.iter().find(|s| s.id == id).unwrap_or_else(|| panic!("{file} lacks `{id}`"));
    let out = run_scenario(sc, &settings(&cfg));
    if let Some(f) = &out.failure {
        panic!("{file}/{id}: {f}");
    }
    out
}

fn q(out: &Outcome, name: &str) -> f64 {
    match out.quantities.iter().find(|q| q.name == name).map(|q| &q.value) {
        Some(QValue::Num(x)) => *x,
        other => panic!("{}: `{name}` is {other:?}", out.id),
    }
}

fn within(what: &str, got: f64, want: f64, tol: f64) -> Check {
    let err = (got - want).abs();
    if err <= tol {
        Ok(format!("{what} = {got:.10} (err {err:.1e})"))
    } else {
        Err(format!("{what} = {got:.10}, expected {want:.10} within {tol:e} (err {err:.1e})"))
    }
}

fn all(parts: Vec<Check>) -> Check {
    let mut ok = Vec::new();
    for p in parts {
        ok.push(p?);
    }
    Ok(ok.join("; "))
}

fn c1() -> Check {
    let patch = zoo::patch("clifford_torus").unwrap();
    let sampling = NormalSampling::default();
    let mut worst: f64 = 0.0;
    for s in normal_samples(&patch, sampling) {
        let fr = patch.frame(&s.param, s.component).unwrap();
        let nu = &fr.normal * DVector::from_vec(s.eta.clone());
        let mut e: Vec<f64> = patch.shape_operator_in(&s.param, s.component, &fr, &nu).unwrap().eigenvalues().to_vec();
        e.sort_by(f64::total_cmp);
        worst = worst.max((e[0] + 1.0).abs()).max((e[1] - 1.0).abs());
    }
    let adm = min_admissible_r(&patch, 1, sampling).unwrap();
    all(vec![
        within("max eigenvalue deviation from {-1, 1}", worst, 0.0, 1e-6),
        within("sup |Tr S|", adm.max_trace, 1.0 / (FRAC_PI_2 - FRAC_PI_4).tan(), 1e-6),
    ])
}

fn c2() -> Check {
    let patch = zoo::patch("clifford_torus").unwrap();
    let rep = focal_radius(&patch, NormalSampling::default(), DEFAULT_HORIZON, 1e-8).unwrap();
    let foc = rep.radius.value();
    let second = rep
        .focal_times_at_argmin
        .iter()
        .map(|(t, _)| *t)
        .find(|t| *t > foc + 1e-6)
        .ok_or("no second focal time")?;
    all(vec![within("foc", foc, FRAC_PI_4, 1e-4), within("second focal time", second, 3.0 * FRAC_PI_4, 1e-4)])
}

fn c3() -> Check {
    let n = zoo::patch("clifford_torus").unwrap();
    let m = zoo::patch("coord_circle").unwrap();
    let rep = frankel_check(&n, &m, 1, NormalSampling::default(), 16, 1e-8).unwrap();
    all(vec![
        within("dist", rep.distance.value, FRAC_PI_4, 1e-4),
        within("dist - (r + r~)", rep.distance.value - (rep.r + rep.r_tilde), 0.0, 1e-4),
        if rep.dim_condition && rep.pass { Ok("bound holds".into()) } else { Err(format!("{rep:?}")) },
    ])
}

fn c4() -> Check {
    let chart = zoo::chart("s2x2_k3").unwrap();
    let p = DVector::from_vec(zoo::chart_entry("s2x2_k3").unwrap().base_point);
    let s = sample_curvature(&chart, &p, 0.3, 3, 100, 4).unwrap();
    if s.draws != 100 {
        return Err(format!("only {} draws", s.draws));
    }
    let thm = theorem_a_check(&chart, &p, 3, 16, 1e-8).unwrap();
    let passes = thm.hypothesis && thm.predicted.degree == 1 && !thm.predicted.vacuous;
    all(vec![
        within("min ric_3", s.ric_k_min, 3.0, 1e-6),
        within("max ric_3", s.ric_k_max, 3.0, 1e-6),
        within("conj", thm.conj_radius.value(), PI / 3f64.sqrt(), 1e-4),
        if passes { Ok("theorem applies, 1-connected".into()) } else { Err(format!("{thm:?}")) },
    ])
}

fn c5() -> Check {
    let chart = zoo::chart("cp2_fs").unwrap();
    let p = DVector::from_vec(zoo::chart_entry("cp2_fs").unwrap().base_point);
    let s = sample_curvature(&chart, &p, 0.3, 2, 100, 5).unwrap();
    let thm = theorem_a_check(&chart, &p, 2, 16, 1e-8).unwrap();
    all(vec![
        within("min ric_2", s.ric_k_min, 2.0, 1e-5),
        within("conj", thm.conj_radius.value(), FRAC_PI_2, 1e-4),
        if thm.hypothesis { Err("hypothesis reported as holding".into()) } else { Ok("hypothesis fails".into()) },
    ])
}

fn c6() -> Check {
    let out = run_id("index.toml", "s3-three-half-pi");
    let index = q(&out, "index");
    all(vec![
        within("max |J - sin t I|", q(&out, "jacobi_model_error"), 0.0, 1e-6),
        within("max |S - cot t I| on [0.01, 3.1]", q(&out, "riccati_model_error"), 0.0, 1e-5),
        if index == 2.0 { Ok("index 2".into()) } else { Err(format!("index {index}")) },
    ])
}

fn c7() -> Check {
    let mut total = 0;
    let mut focal = 0;
    for (i, p) in Pairing::defaults().into_iter().enumerate() {
        let mut runs = random_index_scenarios(p, 1, 700 + i as u64, 1e-8).map_err(|e| e.to_string())?;
        runs.extend(focal_index_scenarios(p, 1, 800 + i as u64, 1e-8).map_err(|e| e.to_string())?);
        for r in &runs {
            total += 1;
            if !r.agrees() {
                return Err(format!("{} draw {}: HK {} vs oracle {:?}", r.pairing, r.draw, r.report.total_hk, r.report.total_oracle));
            }
            if r.report.endpoint_focal {
                focal += 1;
                if !r.report.identity_holds {
                    return Err(format!("{} draw {}: identity fails", r.pairing, r.draw));
                }
            }
        }
    }
    if total < 10 || focal == 0 {
        return Err(format!("{total} scenarios, {focal} focal"));
    }
    Ok(format!("{total} scenarios agree with the oracle, identity holds on {focal} focal endpoints"))
}

fn c8() -> Check {
    let cfg = load("compare.toml");
    let st = settings(&cfg);
    let mut parts = Vec::new();
    let mut worst = f64::INFINITY;
    for sc in &cfg.scenarios {
        let out = run_scenario(sc, &st);
        if let Some(f) = &out.failure {
            return Err(format!("{}: {f}", sc.id));
        }
        let applicable = out.quantities.iter().any(|q| q.name == "applicable" && q.value == QValue::Bool(true));
        if !applicable {
            continue;
        }
        let w = q(&out, "worst_margin");
        worst = worst.min(w);
        if w < -1e-5 {
            parts.push(Err(format!("{}: worst margin {w:e}", sc.id)));
        }
        let round = sc.chart.as_deref() == Some("s3_unit") || sc.patch.as_deref() == Some("clifford_torus");
        if round {
            let m = q(&out, "max_abs_margin");
            if m > 1e-4 {
                parts.push(Err(format!("{}: model equality margin {m:e}", sc.id)));
            }
        }
    }
    parts.push(Ok(format!("worst margin {worst:.2e}")));
    all(parts)
}

fn c9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut held, mut failed) = (0, 0);
    for case in 0..1000 {
        let l = rng.random_range(1..=6);
        let k = rng.random_range(1..=l);
        let m = DMatrix::from_fn(l, l, |_, _| rng.random_range(-2.0..2.0));
        let a = (&m + m.transpose()) * 0.5;
        let lambda = rng.random_range(-2.0..2.0);
        match low_trace_subspace(&a, k, lambda).map_err(|e| e.to_string())? {
            LowTrace::Subspace { basis, required_dim, .. } => {
                held += 1;
                let top = if basis.ncols() == 0 {
                    f64::NEG_INFINITY
                } else {
                    (basis.transpose() * &a * &basis).symmetric_eigen().eigenvalues.max()
                };
                if basis.ncols() < required_dim || top > lambda + 1e-9 {
                    return Err(format!("case {case}: Rayleigh {top} > {lambda}"));
                }
            }
            LowTrace::Violation { witness, bound, .. } => {
                failed += 1;
                let t = (witness.transpose() * &a * &witness).trace();
                if t <= bound || witness.ncols() != k {
                    return Err(format!("case {case}: witness trace {t} <= {bound}"));
                }
            }
        }
    }
    Ok(format!("{held} valid subspaces, {failed} violating witnesses"))
}

fn c10() -> Check {
    let mut parts = Vec::new();
    for id in ["equator-short-curves", "clifford-short-curves"] {
        let out = run_id("lift.toml", id);
        if q(&out, "curves") < 100.0 {
            parts.push(Err(format!("{id}: fewer than 100 curves")));
        }
        parts.push(within(&format!("{id} round trip"), q(&out, "max_round_trip"), 0.0, 1e-6));
        let excess = q(&out, "max_tube_excess");
        parts.push(if excess <= 1e-6 { Ok(format!("{id} tube excess {excess:.2e}")) } else { Err(format!("{id} tube excess {excess:e}")) });
    }
    let hom = run_id("lift.toml", "clifford-homotopy");
    parts.push(within("homotopy matching defect", q(&hom, "max_defect"), 0.0, 1e-6));
    let nl = run_id("lift.toml", "cylinder-no-lift");
    let n = q(&nl, "endpoint_norm");
    parts.push(if n > 0.1 { Ok(format!("no-lift endpoint norm {n:.6}")) } else { Err(format!("no-lift endpoint norm {n}")) });
    all(parts)
}

fn c11() -> Check {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for f in &files {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let dir = tmp.path().join(format!("{}-{run}", f.file_stem().unwrap().to_string_lossy()));
            let status = Command::new(env!("CARGO_BIN_EXE_riclab"))
                .arg("run")
                .arg("--config")
                .arg(f)
                .arg("--out")
                .arg(&dir)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{} exited with {:?}", f.display(), status.status.code()));
            }
            outputs.push(std::fs::read(dir.join("summary.csv")).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{} summaries differ", f.display()));
        }
    }
    Ok(format!("{} configs, identical summaries", files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check, Option<u64>); 11] = [
        ("Clifford torus shape operator", c1, Some(10)),
        ("Clifford torus focal times", c2, Some(60)),
        ("Clifford torus to great circle distance", c3, Some(60)),
        ("S2 x S2 intermediate Ricci and conjugate radius", c4, Some(60)),
        ("CP2 conjugate radius and failed hypothesis", c5, Some(60)),
        ("round-sphere closed forms", c6, None),
        ("index oracle equivalence", c7, Some(300)),
        ("comparison suite", c8, None),
        ("low-trace subspaces", c9, None),
        ("lifting suite", c10, None),
        ("determinism", c11, None),
    ];
    let mut failures = 0;
    for (i, (name, f, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > Duration::from_secs(l) => Err(format!("took {elapsed:.1?}, limit {l} s")),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {tag} [{:>7.2?}] {name}: {detail}", i + 1, elapsed);
        failures += result.is_err() as usize;
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
