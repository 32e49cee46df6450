//! Output formats. JSON numbers are wrapped as `{"value": …, "provenance": …}`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use ltv_es_core::simulate::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Computed,
    PaperExpected,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Computed => "computed",
            Provenance::PaperExpected => "paper-expected",
        }
    }
}

/// Wraps every number in `value` with `provenance`. Already wrapped numbers are left alone.
pub fn tag(value: Value, provenance: Provenance) -> Value {
    match value {
        Value::Number(n) => json!({"value": n, "provenance": provenance.name()}),
        Value::Array(items) => Value::Array(items.into_iter().map(|v| tag(v, provenance)).collect()),
        Value::Object(map) if is_tagged(&map) => Value::Object(map),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, tag(v, provenance)))
                .collect(),
        ),
        other => other,
    }
}

fn is_tagged(map: &Map<String, Value>) -> bool {
    map.len() == 2 && map.contains_key("value") && map.contains_key("provenance")
}

/// Serializes `value` and tags all its numbers as computed.
pub fn computed<T: Serialize>(value: &T) -> Value {
    tag(
        serde_json::to_value(value).expect("report types serialize"),
        Provenance::Computed,
    )
}

/// Everything a command produces; the caller picks one rendering.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub json: Value,
    pub text: String,
    pub csv: String,
}

impl Artifact {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("valid JSON");
                s.push('\n');
                s
            }
            Format::Csv => self.csv.clone(),
            Format::Text => self.text.clone(),
        }
    }
}

pub fn write_output(out: Option<&Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()
        }
    }
}

/// Formats a float for CSV so that it round-trips.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

/// `t,x1..xn,u,envelope`, plus `zeta1..zetan` after the state when `zeta` is given.
pub fn trajectory_csv(traj: &Trajectory, zeta: Option<&Trajectory>) -> String {
    let n = traj.n;
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    if zeta.is_some() {
        for i in 1..=n {
            let _ = write!(out, ",zeta{i}");
        }
    }
    out.push_str(",u,envelope\n");
    for i in 0..traj.len() {
        out.push_str(&num(traj.times[i]));
        for v in traj.state(i) {
            out.push(',');
            out.push_str(&num(*v));
        }
        if let Some(z) = zeta {
            for v in z.state(i) {
                out.push(',');
                out.push_str(&num(*v));
            }
        }
        out.push(',');
        out.push_str(&num(traj.controls[i]));
        out.push(',');
        if let Some(env) = &traj.envelope {
            out.push_str(&num(env[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_number_is_tagged() {
        let v = tag(json!({"a": 1.5, "b": [2, {"c": 3}], "d": "x", "e": null}), Provenance::Computed);
        assert_eq!(v["a"], json!({"value": 1.5, "provenance": "computed"}));
        assert_eq!(v["b"][1]["c"]["provenance"], "computed");
        assert_eq!(v["d"], "x");
        let expected = tag(json!(0.0474304), Provenance::PaperExpected);
        let outer = tag(json!({"expected": expected}), Provenance::Computed);
        assert_eq!(outer["expected"]["provenance"], "paper-expected");
    }
}
