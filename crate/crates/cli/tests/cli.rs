use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ltv_es(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltv-es"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("stdout is JSON")
}

fn value(v: &Value) -> f64 {
    v["value"].as_f64().expect("tagged number")
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

/// Checks that no bare number survives anywhere in a JSON report.
fn assert_all_tagged(v: &Value, at: &str) {
    match v {
        Value::Number(_) => panic!("untagged number at {at}"),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                assert_all_tagged(item, &format!("{at}[{i}]"));
            }
        }
        Value::Object(map) if map.contains_key("provenance") => {
            let p = map["provenance"].as_str().unwrap();
            assert!(p == "computed" || p == "paper-expected", "{at}: {p}");
            assert!(map["value"].is_number(), "{at}");
        }
        Value::Object(map) => {
            for (k, item) in map {
                assert_all_tagged(item, &format!("{at}.{k}"));
            }
        }
        _ => {}
    }
}

#[test]
fn check_robot2d_is_feasible() {
    let out = ltv_es(&["check", "--builtin", "robot2d", "--epsilon", "1e-7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("feasible: true"));
}

#[test]
fn check_json_is_fully_tagged() {
    let out = ltv_es(&[
        "check", "--builtin", "robot2d", "--epsilon", "1e-7", "--format", "json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_all_tagged(&v, "");
    assert_eq!(v["feasible"], true);
    let b = value(&v["analysis"]["ultimate_bound"]);
    assert!((b / 0.0474304 - 1.0).abs() < 0.01, "{b}");
}

#[test]
fn table_one_reproduces() {
    let out = ltv_es(&["tables", "--id", "T1", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_all_tagged(&v, "");
    let rows = v["tables"][0]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["pass"], true);
        assert_eq!(row["expected"]["provenance"], "paper-expected");
        assert_eq!(row["computed"]["provenance"], "computed");
        assert!(value(&row["rel_error"]).abs() < 0.01);
    }
}

#[test]
fn unknown_table_is_a_usage_error() {
    let out = ltv_es(&["tables", "--id", "T99"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("T99"));
}

#[test]
fn integrator_simulation_stays_inside_envelope() {
    let out = ltv_es(&[
        "simulate", "--builtin", "integrator", "--epsilon", "1e-2", "--horizon", "20",
        "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let traj = &json(&out)["trajectory"];
    assert_eq!(value(&traj["violations"]), 0.0);
    assert_eq!(value(&traj["steps"]), 100_000.0);
    assert_eq!(traj["blew_up"], false);
}

#[test]
fn simulation_csv_has_trajectory_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let out = ltv_es(&[
        "simulate", "--builtin", "robot2d", "--epsilon", "1e-7", "--horizon", "1e-4",
        "--x0", "-0.5,0.5", "--format", "csv", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u,envelope"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    assert_eq!(first.len(), 5);
    assert_eq!(&first[..3], &[0.0, -0.5, 0.5]);
    assert!(first[4] >= (0.5f64).hypot(0.5));
}

#[test]
fn wrong_x0_length_is_rejected() {
    let out = ltv_es(&["simulate", "--builtin", "robot2d", "--x0", "1,2,3", "--horizon", "0.001"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--x0"));
}

#[test]
fn indefinite_gain_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "bad_k.json",
        r#"{
          "n": 2,
          "A": [[0, 0], [0, 0]],
          "B": [[1], [1]],
          "bounds": {"A_bar": 0, "B_bar": 1, "DB_bar": 0},
          "K": [[1, 0], [0, -1]],
          "es": {"epsilon": 1e-4, "sigma0": 1}
        }"#,
    );
    let out = ltv_es(&["check", "--scenario", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("K not positive definite"), "{}", stderr(&out));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "typo.json",
        r#"{"builtin": "robot2d", "es": {"epsilon": "small"}}"#,
    );
    let out = ltv_es(&["check", "--scenario", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("es.epsilon"), "{}", stderr(&out));

    let path = write_scenario(dir.path(), "extra.json", r#"{"builtin": "robot2d", "colour": 1}"#);
    let out = ltv_es(&["check", "--scenario", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("colour"));

    let out = ltv_es(&["check", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn negative_epsilon_is_a_schema_error() {
    let out = ltv_es(&["check", "--builtin", "scalar1d", "--epsilon=-1e-3"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn fast_dither_violation_is_infeasible() {
    let out = ltv_es(&["check", "--builtin", "robot2d", "--epsilon", "0.1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("dither rate"));
}

#[test]
fn failing_condition_is_reported_with_exit_one() {
    // Start far outside the region of attraction of the comparison system.
    let out = ltv_es(&["check", "--builtin", "integrator", "--epsilon", "1e-2", "--sigma0", "1e3"]);
    assert_eq!(code(&out), 1, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("FAILS"));
}

#[test]
fn floquet_scenario_document() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "scalar.json",
        r#"{
          "n": 1,
          "A": [[0.0]],
          "B": {"type": "cos", "beta": 500},
          "bounds": {"A_bar": 0.0, "B_bar": 1.0, "DB_bar": 500},
          "K": [[20.0]],
          "es": {"epsilon": 1e-5, "sigma0": 1.0, "a": 0.1, "b": 1.0},
          "certificate": {"type": "floquet"}
        }"#,
    );
    let out = ltv_es(&["check", "--scenario", &path, "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert!(value(&v["analysis"]["certificate"]["verification"]["max_lmi_eig"]) <= 1e-8);

    let out = ltv_es(&["bound", "--scenario", &path, "--points", "11", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,envelope,envelope_simplified"));
    let env: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(env.len(), 11);
    assert!(env.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn measurement_delay_budget() {
    let out = ltv_es(&[
        "delay", "--builtin", "integrator", "--epsilon", "1e-2", "--delay-kind", "measurement",
        "--tau", "1e-6", "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let d = &v["delay"];
    assert_eq!(d["kind"], "measurement");
    let gain = value(&d["budget"]["gain"]);
    assert!((value(&d["delta_bar_added"]) - gain * 1e-6).abs() < 1e-15 * gain);
    let undelayed = value(&v["undelayed"]["ultimate_bound"]);
    assert!(value(&d["delayed"]["ultimate_bound"]) > undelayed);

    let out = ltv_es(&[
        "delay", "--builtin", "integrator", "--epsilon", "1e-2", "--delay-kind", "measurement",
        "--tau", "1e-3",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn input_delay_predictor_run() {
    let out = ltv_es(&[
        "delay", "--builtin", "integrator", "--epsilon", "1e-2", "--delay-kind", "input",
        "--tau", "1e-2", "--horizon", "2", "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sim = &json(&out)["simulation"];
    assert_eq!(value(&sim["delay_steps"]), 50.0);
    assert_eq!(value(&sim["x"]["violations"]), 0.0);
    assert_eq!(value(&sim["zeta"]["violations"]), 0.0);
    assert!(value(&sim["identity_residual"]) < 1e-10);
}

#[test]
fn input_delay_with_time_varying_drift_skips_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "ltv.json",
        r#"{
          "n": 1,
          "A": {"type": "tabulated", "times": [0, 0.5], "values": [[[0.1]], [[-0.1]]], "period": 1},
          "B": [[1.0]],
          "bounds": {"A_bar": 0.1, "B_bar": 1.0, "DB_bar": 0.0},
          "K": [[1.0]],
          "es": {"epsilon": 1e-2, "sigma0": 1.0},
          "certificate": {"type": "user", "p": {"type": "constant", "value": [[1.0]]}, "q": 1.5, "p_lo": 1.0, "p_hi": 1.0, "pdot_bar": 0.0},
          "delay": {"kind": "input", "tau": 0.01}
        }"#,
    );
    let out = ltv_es(&["delay", "--scenario", &path]);
    assert!(stdout(&out).contains("simulation skipped"), "{}{}", stdout(&out), stderr(&out));
}

#[test]
fn delay_command_needs_a_delay() {
    let out = ltv_es(&["delay", "--builtin", "integrator"]);
    assert_eq!(code(&out), 2);
}
