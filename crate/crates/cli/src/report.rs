//! Artifact writing and fixture checking. Outputs carry no timestamps, host
//! names, or map orderings that could vary between runs: reruns with the same
//! config and seed are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::CliError;

pub struct ExperimentOutput {
    pub header: &'static str,
    pub rows: Vec<String>,
    /// Full resolved parameter map, seed included.
    pub config: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, Value>,
    /// Subcommand-specific payload; Null is omitted from the summary.
    pub detail: Value,
}

#[derive(Serialize)]
struct Summary<'a> {
    subcommand: &'a str,
    config: &'a BTreeMap<String, Value>,
    metrics: &'a BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Value::is_null")]
    detail: &'a Value,
}

/// Writes `<out>/<sub>.csv` and `<out>/<sub>.json`.
pub fn write_artifacts(out_dir: &Path, sub: &str, out: &ExperimentOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::experiment(format!("output dir {}: {e}", out_dir.display())))?;
    let mut csv = String::with_capacity(out.rows.len() * 24 + 64);
    csv.push_str(out.header);
    csv.push('\n');
    for row in &out.rows {
        csv.push_str(row);
        csv.push('\n');
    }
    let summary = Summary {
        subcommand: sub,
        config: &out.config,
        metrics: &out.metrics,
        detail: &out.detail,
    };
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::experiment(format!("summary: {e}")))?;
    json.push('\n');
    let write = |ext: &str, body: &str| {
        let path = out_dir.join(format!("{sub}.{ext}"));
        std::fs::write(&path, body)
            .map_err(|e| CliError::experiment(format!("{}: {e}", path.display())))
    };
    write("csv", &csv)?;
    write("json", &json)
}

fn as_num(v: &Value) -> Option<f64> {
    v.as_f64()
}

/// Evaluates fixture rules against the metrics map. A rule is either a
/// literal (equality) or an object of `gte` / `lte` / `eq` bounds.
pub fn run_checks(
    sub: &str,
    metrics: &BTreeMap<String, Value>,
    expect: &BTreeMap<String, Value>,
) -> Result<(), CliError> {
    let mut failures = Vec::new();
    for (key, rule) in expect {
        let Some(got) = metrics.get(key) else {
            failures.push(format!("metric `{key}` missing from summary"));
            continue;
        };
        match rule {
            Value::Object(bounds) => {
                for (op, bound) in bounds {
                    let check = match op.as_str() {
                        "eq" => Ok(got == bound),
                        "gte" | "lte" => match (as_num(got), as_num(bound)) {
                            (Some(g), Some(b)) => {
                                Ok(if op == "gte" { g >= b } else { g <= b })
                            }
                            _ => Err(CliError::config(format!(
                                "rule `{key}.{op}` compares non-numbers"
                            ))),
                        },
                        other => Err(CliError::config(format!(
                            "unknown check op `{other}` for metric `{key}`"
                        ))),
                    }?;
                    if !check {
                        failures.push(format!("{key} = {got}, want {op} {bound}"));
                    }
                }
            }
            literal => {
                if got != literal {
                    failures.push(format!("{key} = {got}, want {literal}"));
                }
            }
        }
    }
    if failures.is_empty() {
        println!("check {sub}: {} rules ok", expect.len());
        Ok(())
    } else {
        for f in &failures {
            eprintln!("check {sub}: {f}");
        }
        Err(CliError::experiment(format!(
            "{} of {} check rules failed",
            failures.len(),
            expect.len()
        )))
    }
}
