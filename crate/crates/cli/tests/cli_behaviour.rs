use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn riclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riclab")).args(args).output().expect("binary runs")
}

fn with_config(body: &str, args: &[&str]) -> (Output, TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("schema_version = 1\n{body}")).unwrap();
    let out = dir.path().join("out");
    let mut full = vec![args[0], "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    full.extend_from_slice(&args[1..]);
    let o = riclab(&full);
    (o, dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const S3_CURVATURE: &str = r#"
[[scenario]]
id = "s3"
op = "curvature"
chart = "s3_unit"
k = 1
samples = 10
directions = 4
"#;

#[test]
fn unknown_zoo_name_suggests_alternatives() {
    let o = riclab(&["zoo", "clifort_torus"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("did you mean `clifford_torus`"), "{}", stderr(&o));
}

#[test]
fn zoo_lists_and_describes_entries() {
    let o = riclab(&["zoo"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("clifford_torus") && text.contains("cp2_fs"));
    let o = riclab(&["zoo", "s2x2_k3", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "chart");
    assert_eq!(v["dim"], 4);
}

#[test]
fn passing_checks_write_summary_and_report() {
    let body = format!("{S3_CURVATURE}expect.ric_k_min = {{ value = 1, tol = 1e-6, source = \"closed form\" }}\n");
    let (o, dir) = with_config(&body, &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("scenario,op,check,value,reference,source,tolerance,margin,pass"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("s3,curvature,ric_k_min,"), "{row}");
    assert!(row.contains(",closed form,1e-6,"), "{row}");
    assert!(row.ends_with("true"), "{row}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["scenarios"][0]["status"], "pass");
    assert!(!Path::new(&out.join("trace_vs_bound.csv")).exists());
}

#[test]
fn failed_expectation_exits_one() {
    let body = format!("{S3_CURVATURE}expect.ric_k_min = {{ value = 2, tol = 1e-6 }}\n");
    let (o, dir) = with_config(&body, &["curvature"]);
    assert_eq!(o.status.code(), Some(1));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",false"));
}

#[test]
fn configuration_errors_exit_two() {
    let (o, _d) = with_config("[[scenario]]\nid = \"a\"\nop = \"curvature\"\nchrt = \"s3_unit\"\n", &["run"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let bad_expr = S3_CURVATURE.replace("samples = 10", "spread = \"pi/\"");
    let (o, _d) = with_config(&bad_expr, &["run"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let bad_key = format!("{S3_CURVATURE}expect.focal_radius = {{ value = 1 }}\n");
    let (o, _d) = with_config(&bad_key, &["run"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("focal_radius"));
    let (o, _d) = with_config(S3_CURVATURE, &["focal"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = riclab(&["run", "--config", "/nonexistent/riclab.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_scenario_name_exits_three() {
    let (o, _d) = with_config(&S3_CURVATURE.replace("s3_unit", "s3_unti"), &["run"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("did you mean `s3_unit`"), "{}", stderr(&o));
}

#[test]
fn invalid_parameters_exit_four() {
    let (o, _d) = with_config(&S3_CURVATURE.replace("k = 1", "k = 0"), &["run"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let (o, _d) = with_config(S3_CURVATURE, &["run", "--tol", "-1"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let (o, _d) = with_config(&S3_CURVATURE.replace("k = 1", "k = 1\npoint = [0, 0]"), &["run"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn leaving_the_chart_exits_five() {
    let body = r#"
[[scenario]]
id = "escape"
op = "index"
chart = "s2x2_k3"
direction = [1, 0, 0, 0]
length = 2
"#;
    let (o, _d) = with_config(body, &["index"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn inline_arguments_run_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = riclab(&["frankel", "--patch", "clifford_torus", "--patch", "coord_circle", "--k", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("frankel,frankel,dist_le_bound,true"), "{summary}");
    let o = riclab(&["focal", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_changes_only_unseeded_scenarios() {
    let run = |seed: &str| {
        let (o, dir) = with_config(S3_CURVATURE, &["run", "--seed", seed]);
        assert!(o.status.success());
        std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()
    };
    let (a, b, c) = (run("1"), run("1"), run("2"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let cfg = riclab_cli::config::Config::load(&path).unwrap();
            for sc in &cfg.scenarios {
                riclab_cli::run::validate(sc).unwrap_or_else(|f| panic!("{}: {f}", path.display()));
                n += 1;
            }
        }
    }
    assert!(n >= 20, "{n}");
}
