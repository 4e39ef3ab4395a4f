//! Run records and their canonical JSON form.
//!
//! Canonical JSON: object keys sorted, two-space indentation, integers as
//! written, every other number with 17 significant digits in exponent form
//! (`1.0000000000000000e-1`). Parsing a canonical document and writing it
//! again reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use partivae::ElboEstimate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: &str = concat!("partivae ", env!("CARGO_PKG_VERSION"));

/// Hard-sample bound of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimEstimate {
    pub latent_dim: usize,
    pub run_seed: u64,
    pub estimate: ElboEstimate,
}

/// Everything a train, sweep or estimate run reports.
///
/// Wall-clock time is written to a separate `timing.json` so that the record
/// itself depends only on the configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    /// Effective configuration, defaults filled in, output directory omitted.
    pub config: Value,
    pub estimates: Vec<DimEstimate>,
    pub best_latent_dim: usize,
    /// Target parameters after the run (`omega_in`/`omega_out` or `w`).
    pub target_params: BTreeMap<String, f64>,
    /// Per-step relaxed objective of the best model.
    pub trace: Vec<f64>,
}

impl RunRecord {
    pub fn to_canonical(&self) -> CliResult<String> {
        let value = serde_json::to_value(self).map_err(|e| CliError::Numeric(e.to_string()))?;
        Ok(canonical_json(&value))
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Canonical rendering of any JSON value, newline-terminated.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

/// Serializes `value` through [`canonical_json`].
pub fn to_canonical<T: Serialize>(value: &T) -> CliResult<String> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(canonical_json(&v))
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, level: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push_str(": ");
                write_value(out, &map[*key], level + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use partivae::vaecore::EstimateMode;

    fn record() -> RunRecord {
        RunRecord {
            artifact_version: ARTIFACT_VERSION.into(),
            command: "train".into(),
            seed: 7,
            config: serde_json::json!({"b": 1, "a": [0.1, -2.5e-300, 3.0], "c": {"z": null, "y": "s\"q"}}),
            estimates: vec![DimEstimate {
                latent_dim: 2,
                run_seed: u64::MAX,
                estimate: ElboEstimate {
                    mean: 11.090354888959125,
                    stderr: 1.0 / 3.0,
                    n_samples: 100,
                    mode: EstimateMode::Hard,
                },
            }],
            best_latent_dim: 2,
            target_params: BTreeMap::from([("w".to_string(), 0.75)]),
            trace: vec![1e-17, std::f64::consts::PI, -0.0, 1e300],
        }
    }

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(3.0), "3.0000000000000000e0");
    }

    #[test]
    fn keys_are_sorted() {
        let text = canonical_json(&serde_json::json!({"b": 1, "a": 2}));
        assert_eq!(text, "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
    }

    #[test]
    fn record_round_trips_byte_identically() {
        let r = record();
        let text = r.to_canonical().unwrap();
        let back = RunRecord::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_canonical().unwrap(), text);
        // also through an untyped parse
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(canonical_json(&v), text);
    }
}
