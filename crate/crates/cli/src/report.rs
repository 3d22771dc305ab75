//! Side-by-side comparison of result files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub label: String,
    pub method: String,
    pub cost: Option<f64>,
    /// tag → R
    pub resistances: BTreeMap<i64, f64>,
    /// quantity → % deviation from the measurements
    pub errors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub entries: Vec<Entry>,
    /// one row per run: resistances, cost and deviations
    pub comparison_csv: String,
    /// one row per measured quantity, one column per run
    pub histogram_csv: String,
}

fn entry(name: &str, v: &Value) -> Result<Entry, CliError> {
    let bad = |what: &str| CliError::validation(format!("{name}: {what}"));
    let method = v.get("method").and_then(Value::as_str).unwrap_or("unknown").to_string();
    let tags = v
        .get("outlet_tags")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing outlet_tags"))?
        .iter()
        .map(|t| t.as_i64().ok_or_else(|| bad("outlet_tags must be integers")))
        .collect::<Result<Vec<_>, _>>()?;
    let r = v
        .get("R")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing R"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| bad("R must be numbers")))
        .collect::<Result<Vec<_>, _>>()?;
    if r.len() != tags.len() {
        return Err(bad("R and outlet_tags differ in length"));
    }
    let mut errors = BTreeMap::new();
    if let Some(obj) = v.get("errors_vs_measurements_percent").and_then(Value::as_object) {
        for (k, x) in obj {
            errors.insert(k.clone(), x.as_f64().ok_or_else(|| bad("deviations must be numbers"))?);
        }
    }
    Ok(Entry {
        label: method.clone(),
        method,
        cost: v.get("J").and_then(Value::as_f64),
        resistances: tags.into_iter().zip(r).collect(),
        errors,
    })
}

/// `pressure`, `inlet`, then outlet tags in numeric order.
fn quantity_order(keys: &BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = ["pressure", "inlet"]
        .into_iter()
        .filter(|k| keys.contains(*k))
        .map(str::to_string)
        .collect();
    let mut rest: Vec<&String> = keys.iter().filter(|k| !out.contains(k)).collect();
    rest.sort_by_key(|k| (k.parse::<i64>().unwrap_or(i64::MAX), k.to_string()));
    out.extend(rest.into_iter().cloned());
    out
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Builds the report from `(name, json)` pairs; `name` only appears in errors.
pub fn build(inputs: &[(String, Value)]) -> Result<Report, CliError> {
    if inputs.is_empty() {
        return Err(CliError::validation("report needs at least one result file"));
    }
    let mut entries = inputs.iter().map(|(n, v)| entry(n, v)).collect::<Result<Vec<_>, _>>()?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for e in &mut entries {
        let n = seen.entry(e.method.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            e.label = format!("{}#{n}", e.method);
        }
    }

    let tags: BTreeSet<i64> = entries.iter().flat_map(|e| e.resistances.keys().copied()).collect();
    let keys: BTreeSet<String> = entries.iter().flat_map(|e| e.errors.keys().cloned()).collect();
    let quantities = quantity_order(&keys);

    let mut cmp = String::from("label,method,J");
    for t in &tags {
        write!(cmp, ",R_{t}").unwrap();
    }
    for q in &quantities {
        write!(cmp, ",err_{q}_pct").unwrap();
    }
    cmp.push('\n');
    for e in &entries {
        write!(cmp, "{},{},{}", e.label, e.method, cell(e.cost)).unwrap();
        for t in &tags {
            write!(cmp, ",{}", cell(e.resistances.get(t).copied())).unwrap();
        }
        for q in &quantities {
            write!(cmp, ",{}", cell(e.errors.get(q).copied())).unwrap();
        }
        cmp.push('\n');
    }

    let mut hist = String::from("quantity");
    for e in &entries {
        write!(hist, ",{}", e.label).unwrap();
    }
    hist.push('\n');
    for q in &quantities {
        hist.push_str(q);
        for e in &entries {
            write!(hist, ",{}", cell(e.errors.get(q).copied())).unwrap();
        }
        hist.push('\n');
    }

    Ok(Report {
        entries,
        comparison_csv: cmp,
        histogram_csv: hist,
    })
}
