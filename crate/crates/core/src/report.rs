//! Plot-ready result tables, serialized as JSON or CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::Result;

/// Rounds to 12 significant digits so that outputs diff cleanly across platforms.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn ser_round<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

fn ser_round_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&round_sig(*v)),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    #[serde(serialize_with = "ser_round")]
    pub value: f64,
    #[serde(serialize_with = "ser_round_opt")]
    pub stderr: Option<f64>,
    #[serde(serialize_with = "ser_round_opt")]
    pub bound: Option<f64>,
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Row {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Row {
            name: name.into(),
            value,
            stderr: None,
            bound: None,
            pass: None,
            method: None,
            trials: None,
            violations: None,
            note: None,
        }
    }

    pub fn stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }

    pub fn bound(mut self, b: f64) -> Self {
        self.bound = Some(b);
        self
    }

    pub fn pass(mut self, ok: bool) -> Self {
        self.pass = Some(ok);
        self
    }

    pub fn method(mut self, m: impl Into<String>) -> Self {
        self.method = Some(m.into());
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
}

impl Report {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Report { experiment: experiment.into(), params: BTreeMap::new(), seed, rows: Vec::new(), generated_unix: None }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// True unless some row failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn stamp_now(&mut self) {
        self.generated_unix =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs());
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per row; every row has the same columns.
    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        fn quote(s: &str) -> String {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::from("name,value,stderr,bound,pass,method,trials,violations,note\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                quote(&r.name),
                round_sig(r.value),
                opt(&r.stderr.map(round_sig)),
                opt(&r.bound.map(round_sig)),
                opt(&r.pass),
                quote(&opt(&r.method)),
                opt(&r.trials),
                opt(&r.violations),
                quote(&opt(&r.note)),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(2.0), 2.0);
        assert_eq!(round_sig(-123456.7890123456), -123456.789012);
        assert!(round_sig(f64::NAN).is_nan());
    }

    #[test]
    fn json_and_csv_share_columns() {
        let mut r = Report::new("demo", 7).param("k", 2);
        r.push(Row::new("a", 1.0 / 3.0).stderr(0.01).bound(0.5).pass(true));
        r.push(Row::new("b, quoted", 2.0).note("x"));
        let json: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["rows"][0]["value"], 0.333333333333);
        assert_eq!(json["rows"][1]["stderr"], Value::Null);
        assert_eq!(json["seed"], 7);
        assert!(json.get("generated_unix").is_none());
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "a,0.333333333333,0.01,0.5,true,,,,");
        assert_eq!(lines[2], "\"b, quoted\",2,,,,,,,x");
        assert!(r.passed());
    }
}
