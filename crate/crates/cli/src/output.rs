use std::io::Write;
use std::path::Path;

use grw_core::qmath::{ExtReal, LogProb};
use serde_json::{json, Map, Value};

use crate::{CliError, RunConfig};

pub const SCHEMA_VERSION: u64 = 1;

/// Magnitudes outside `[TWIN_MIN, TWIN_MAX]` get a `<key>_log10` sibling.
pub const TWIN_MIN: f64 = 1e-300;
pub const TWIN_MAX: f64 = 1e300;

/// Rows of a plot-ready table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The outcome of one run: a results object, an optional table for CSV
/// output, and the computations that could not be completed.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub results: Value,
    pub table: Option<Table>,
    pub incomplete: Vec<String>,
}

impl Report {
    pub fn complete(&self) -> bool {
        self.incomplete.is_empty()
    }

    pub fn to_json(&self, cfg: &RunConfig) -> Value {
        let params: Map<String, Value> = cfg
            .params
            .iter()
            .map(|(k, p)| (k.clone(), Value::String(p.value.clone())))
            .collect();
        let mut results = self.results.clone();
        add_log10_twins(&mut results);
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": cfg.command.as_str(),
            "seed": cfg.seed,
            "parameters": params,
            "status": if self.complete() { "complete" } else { "partial" },
            "incomplete": self.incomplete,
            "results": results,
        })
    }

    /// The requested table, or the results flattened to `field,value`.
    pub fn to_table(&self) -> Table {
        if let Some(t) = &self.table {
            return t.clone();
        }
        let mut t = Table::new(&["field", "value"]);
        let mut results = self.results.clone();
        add_log10_twins(&mut results);
        flatten("", &results, &mut t);
        t
    }

    pub fn render(&self, cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
        match cfg.format {
            crate::Format::Json => {
                let mut out = serde_json::to_vec_pretty(&self.to_json(cfg))?;
                out.push(b'\n');
                Ok(out)
            }
            crate::Format::Csv => {
                let mut out = Vec::new();
                self.to_table().write(&mut out)?;
                Ok(out)
            }
        }
    }
}

fn flatten(prefix: &str, v: &Value, t: &mut Table) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&p, x, t);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), x, t);
            }
        }
        Value::String(s) => t.push(vec![prefix.to_string(), s.clone()]),
        other => t.push(vec![prefix.to_string(), other.to_string()]),
    }
}

/// Adds `<key>_log10 = log10 |x|` next to every nonzero numeric object
/// field with `|x|` outside `[1e-300, 1e300]`, unless that key exists.
pub fn add_log10_twins(v: &mut Value) {
    match v {
        Value::Object(map) => {
            let mut twins = Vec::new();
            for (k, x) in map.iter_mut() {
                if let Some(f) = x.as_f64() {
                    let a = f.abs();
                    if a != 0.0 && !(TWIN_MIN..=TWIN_MAX).contains(&a) {
                        twins.push((format!("{k}_log10"), a.log10()));
                    }
                } else {
                    add_log10_twins(x);
                }
            }
            for (k, l) in twins {
                map.entry(k).or_insert_with(|| json!(l));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(add_log10_twins),
        _ => {}
    }
}

/// `{"log10": .., "magnitude": ..}`, plus `value` when the probability is
/// an ordinary double.
pub fn prob_json(p: LogProb) -> Value {
    let mut m = Map::new();
    m.insert("log10".into(), p.log10().map_or(Value::Null, |l| json!(l)));
    let x = p.to_real();
    if p.is_zero() || x >= TWIN_MIN {
        m.insert("value".into(), json!(x));
    }
    m.insert("magnitude".into(), json!(p.order_of_magnitude()));
    Value::Object(m)
}

/// An [`ExtReal`] as `value` (a number when it fits a double, else its
/// decimal string) with its `log10`.
pub fn ext_json(x: ExtReal) -> Value {
    let value = if x.fits_f64() && (x.is_zero() || x.to_f64().abs() >= TWIN_MIN) {
        json!(x.to_f64())
    } else {
        json!(x.to_string())
    };
    let log10 = if x.is_zero() {
        Value::Null
    } else {
        json!(x.log10_abs())
    };
    json!({ "value": value, "log10": log10, "magnitude": x.to_string() })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twins_only_outside_the_double_comfort_range() {
        let mut v = json!({
            "tiny": 1e-310, "big": -2e301, "ok": 1e-300, "zero": 0.0,
            "nested": {"x": 1e-320}, "list": [{"y": 1e305}, 1e-310],
            "have": 1e-305, "have_log10": 7.0
        });
        add_log10_twins(&mut v);
        assert_eq!(v["big_log10"], json!(2e301f64.log10()));
        assert!(v["tiny_log10"].as_f64().unwrap() < -309.0);
        assert!(v.get("ok_log10").is_none() && v.get("zero_log10").is_none());
        assert!(v["nested"].get("x_log10").is_some());
        assert!(v["list"][0].get("y_log10").is_some());
        assert_eq!(v["have_log10"], json!(7.0));
    }

    #[test]
    fn probabilities_keep_the_log_when_the_value_underflows() {
        let p = LogProb::from_log10(-1e15).unwrap();
        let j = prob_json(p);
        assert_eq!(j["log10"], json!(-1e15));
        assert!(j.get("value").is_none());
        assert_eq!(prob_json(LogProb::ZERO)["value"], json!(0.0));
        assert_eq!(prob_json(LogProb::ZERO)["log10"], Value::Null);
    }

    #[test]
    fn atomic_write_replaces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
