//! Record serialization and the terminal summary.

use serde_json::Value;

use crate::commands::{Body, Record};
use crate::config::Format;
use crate::CliError;

pub fn render(records: &[Record], format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(records).map_err(|e| CliError::Output(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => to_csv(records),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One row per record; the header is the union of the record fields in
/// order of first appearance. Missing values are empty cells.
fn to_csv(records: &[Record]) -> Result<String, CliError> {
    let err = |e: &dyn std::fmt::Display| CliError::Output(e.to_string());
    let rows: Vec<serde_json::Map<String, Value>> = records
        .iter()
        .map(|r| match serde_json::to_value(r) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => unreachable!("records serialize to objects"),
            Err(e) => Err(err(&e)),
        })
        .collect::<Result<_, _>>()?;
    let mut header: Vec<&str> = Vec::new();
    for row in &rows {
        for k in row.keys() {
            if !header.contains(&k.as_str()) {
                header.push(k);
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| err(&e))?;
    for row in &rows {
        w.write_record(header.iter().map(|k| row.get(*k).map(cell).unwrap_or_default()))
            .map_err(|e| err(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| err(&e))?;
    String::from_utf8(bytes).map_err(|e| err(&e))
}

fn energy(e: Option<f64>) -> String {
    e.map_or_else(|| "-".into(), |e| format!("{e:.5}"))
}

/// One line per record, energies in Hartree to five decimals.
pub fn summary(r: &Record) -> String {
    match &r.body {
        Body::Fci(f) => format!(
            "fci  E_FCI {:.5}  E_HF {:.5}  dim {}  HF weight {:.4}",
            f.fci_energy, f.hf_energy, f.space_dimension, f.hf_weight
        ),
        Body::Estimate(e) => format!(
            "{:<4} shots {:>8}  E {}  |dE| {}  subspace {}",
            e.method,
            e.shots,
            energy(e.energy),
            e.abs_error.map_or_else(|| "-".into(), |x| format!("{x:.2e}")),
            e.subspace_size.map_or_else(|| "-".into(), |x| x.to_string()),
        ),
        Body::Sample(s) => format!(
            "sample shots {:>8}  unique {}  valid {}  invalid {}",
            s.shots, s.n_unique, s.n_valid, s.n_invalid
        ),
        Body::Coupon(c) => format!(
            "coupon m {:>4}  p_max {:.4}  bound {:.1}  integral {:.1}  uniform {:.1}",
            c.m, c.p_max, c.lower_bound, c.integral, c.uniform
        ),
    }
}
