//! Result files: `summary.csv`, `report.json`, and the optional traces.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::config::SCHEMA_VERSION;
use crate::run::{Outcome, Settings};
use crate::Failure;

pub const SUMMARY: &str = "summary.csv";
pub const REPORT: &str = "report.json";
pub const TRACE: &str = "trace_vs_bound.csv";

const SUMMARY_HEADER: [&str; 9] = ["scenario", "op", "check", "value", "reference", "source", "tolerance", "margin", "pass"];

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("cannot write {}: {e}", path.display()))
}

pub fn summary_csv(outcomes: &[Outcome]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Failure::Config(format!("summary: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for row in outcomes.iter().flat_map(|o| &o.checks) {
        w.write_record([
            row.scenario.as_str(),
            row.op,
            &row.check,
            &row.value,
            &row.reference,
            &row.source,
            &row.tolerance,
            &row.margin,
            if row.pass { "true" } else { "false" },
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Config(format!("summary: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_json(outcomes: &[Outcome], settings: &Settings) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": settings.seed,
        "tol": settings.tol,
        "scenarios": outcomes,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// Concatenate the comparison traces, each prefixed by its scenario id.
pub fn trace_csv(outcomes: &[Outcome]) -> Option<String> {
    let mut out = String::new();
    for o in outcomes {
        let Some(csv) = &o.trace_csv else { continue };
        let mut lines = csv.lines();
        let Some(header) = lines.next() else { continue };
        if out.is_empty() {
            out.push_str("scenario,");
            out.push_str(header);
            out.push('\n');
        }
        for l in lines {
            out.push_str(&o.id);
            out.push(',');
            out.push_str(l);
            out.push('\n');
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Write every output file under `dir` and return the names written.
pub fn write_all(dir: &Path, outcomes: &[Outcome], settings: &Settings) -> Result<Vec<String>, Failure> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut files = vec![
        (SUMMARY.to_string(), summary_csv(outcomes)?),
        (REPORT.to_string(), report_json(outcomes, settings)),
    ];
    if let Some(t) = trace_csv(outcomes) {
        files.push((TRACE.to_string(), t));
    }
    for o in outcomes {
        if let Some(l) = &o.lift_csv {
            files.push((format!("lift_{}.csv", o.id), l.clone()));
        }
    }
    for (name, text) in &files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io(&p, e))?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::CheckRow;

    fn outcome(id: &str, value: &str, trace: Option<&str>) -> Outcome {
        Outcome {
            id: id.into(),
            op: "compare",
            status: "pass",
            error: None,
            checks: vec![CheckRow {
                scenario: id.into(),
                op: "compare",
                check: "verdict".into(),
                value: value.into(),
                reference: String::new(),
                source: String::new(),
                tolerance: String::new(),
                margin: String::new(),
                pass: true,
            }],
            quantities: Vec::new(),
            details: serde_json::Value::Null,
            failure: None,
            trace_csv: trace.map(String::from),
            lift_csv: None,
        }
    }

    #[test]
    fn summary_quotes_fields_with_commas() {
        let csv = summary_csv(&[outcome("a", "x, y", None)]).unwrap();
        assert_eq!(csv.lines().nth(1), Some("a,compare,verdict,\"x, y\",,,,,true"));
    }

    #[test]
    fn traces_share_one_header() {
        let outs = [outcome("a", "", Some("t,m\n0,1\n")), outcome("b", "", None), outcome("c", "", Some("t,m\n2,3\n"))];
        assert_eq!(trace_csv(&outs).unwrap(), "scenario,t,m\na,0,1\nc,2,3\n");
        assert!(trace_csv(&outs[1..2]).is_none());
    }
}
