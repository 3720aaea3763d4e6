//! End-to-end tests of the binary: exit codes, file outputs, config
//! round-trips, and the determinism contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_crn-queues")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "crn-queues-cli-{}-{tag}",
        std::process::id()
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_MODEL: &str = r#"{
  "model": {
    "n_servers": 3,
    "pu": { "lambda": 1.2, "mu": 1.0 },
    "su": { "lambda": 0.9, "mu": 1.0 }
  },
  "truncation": { "tail_tolerance": 1e-9 },
  "thresholds": { "th_pu": 0.6, "th_su": 1.2 },
  "target": { "w_pu": 0.3, "w_su": 0.4 },
  "simulation": { "seed": 7, "measured_departures": 2000, "replications": 3 }
}"#;

#[test]
fn analyze_writes_all_outputs_and_echoes_the_config() {
    let dir = temp_dir("analyze");
    let config_path = write_config(&dir, "config.json", SMALL_MODEL);
    let out = dir.join("out");
    let output = run(&[
        "analyze",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for file in [
        "joint_pmf.csv",
        "joint_pmf.json",
        "pu_marginal.csv",
        "su_marginal.csv",
        "report.json",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let report = read_json(&out.join("report.json"));
    // Config round-trip: the echo reparses to an identical config.
    let echoed: crn_queues_cli::config::RunConfig =
        serde_json::from_value(report["config"].clone()).unwrap();
    let original: crn_queues_cli::config::RunConfig =
        serde_json::from_str(SMALL_MODEL).unwrap();
    assert_eq!(echoed, original);
    // The law and the chain agree tightly at this light load.
    let rel = report["conservation"]["relative_error"].as_f64().unwrap();
    assert!(rel < 5e-3, "conservation relative error {rel}");
    let csv = std::fs::read_to_string(out.join("joint_pmf.csv")).unwrap();
    assert!(csv.starts_with("# crn-queues v1\ni,j,p\n"));
}

#[test]
fn analyze_rejects_unstable_models_with_exit_2() {
    let dir = temp_dir("unstable");
    let config_path = write_config(
        &dir,
        "config.json",
        r#"{ "model": { "n_servers": 2, "pu": { "lambda": 3.0, "mu": 1.0 }, "su": { "lambda": 0.5, "mu": 1.0 } } }"#,
    );
    let output = run(&["analyze", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unstable"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_exit_1() {
    let dir = temp_dir("unknown-key");
    let config_path = write_config(
        &dir,
        "config.json",
        r#"{ "model": { "n_servers": 2, "pu": { "lambda": 0.5, "mu": 1.0 }, "su": { "lambda": 0.5, "mu": 1.0 } }, "surprise": 1 }"#,
    );
    let output = run(&["analyze", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
}

#[test]
fn undersized_truncation_exits_3() {
    let dir = temp_dir("truncation");
    let config_path = write_config(
        &dir,
        "config.json",
        r#"{
          "model": { "n_servers": 10, "pu": { "lambda": 2.7e4, "mu": 5e3 }, "su": { "lambda": 4e4, "mu": 1e4 } },
          "truncation": { "i_max": 10, "j_max": 10, "tail_tolerance": 1e-9 }
        }"#,
    );
    let out = dir.join("out");
    let output = run(&[
        "analyze",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 3);
}

#[test]
fn exhausted_event_budget_exits_4() {
    let dir = temp_dir("budget");
    let config_path = write_config(
        &dir,
        "config.json",
        r#"{
          "model": { "n_servers": 2, "pu": { "lambda": 0.5, "mu": 1.0 }, "su": { "lambda": 0.5, "mu": 1.0 } },
          "simulation": { "seed": 1, "measured_departures": 5000, "replications": 2, "max_events": 64 }
        }"#,
    );
    let out = dir.join("out");
    let output = run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 4);
}

#[test]
fn simulate_is_byte_deterministic_for_a_seed() {
    let dir = temp_dir("determinism");
    let config_path = write_config(&dir, "config.json", SMALL_MODEL);
    let (out_a, out_b, out_c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    for out in [&out_a, &out_b] {
        let output = run(&[
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    let bytes_a = std::fs::read(out_a.join("simulate.json")).unwrap();
    let bytes_b = std::fs::read(out_b.join("simulate.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);

    // A different seed (via the flag override) changes the estimate.
    let output = run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
        "--seed",
        "991",
    ]);
    assert_eq!(code(&output), 0);
    let report_a = read_json(&out_a.join("simulate.json"));
    let report_c = read_json(&out_c.join("simulate.json"));
    assert_ne!(report_a["estimate"]["d_pu"], report_c["estimate"]["d_pu"]);
    assert_eq!(report_c["config"]["simulation"]["seed"], 991);
}

#[test]
fn simulate_emits_an_event_log_on_request() {
    let dir = temp_dir("event-log");
    let config_path = write_config(&dir, "config.json", SMALL_MODEL);
    let out = dir.join("out");
    let output = run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--emit-event-log",
    ]);
    assert_eq!(code(&output), 0);
    let log = std::fs::read_to_string(out.join("events.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("# crn-queues v1"));
    assert_eq!(
        lines.next(),
        Some("time,event,class,channel,pu_total,su_total,pu_in_service,su_in_service")
    );
    assert!(lines.count() > 2000);
}

#[test]
fn synthesize_answers_feasibility_without_failing() {
    let dir = temp_dir("synthesize");
    let config_path = write_config(&dir, "config.json", SMALL_MODEL);
    let out = dir.join("out");
    let output = run(&[
        "synthesize",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&out.join("synthesis.json"));
    assert!(report["feasible"].is_boolean());
    let vertices = &report["vertices"];
    assert!(vertices["a"].as_f64().unwrap() < vertices["b"].as_f64().unwrap());
    assert!(vertices["d"].as_f64().unwrap() < vertices["c"].as_f64().unwrap());
    assert!(out.join("region.csv").exists());
    // The target vector is answered with a unique alpha or an off-segment
    // diagnosis carrying both per-coordinate alphas.
    let alpha_answer = &report["alpha_for_target"];
    assert!(
        alpha_answer["OnSegment"].is_object() || alpha_answer["OffSegment"].is_object(),
        "unexpected alpha answer: {alpha_answer}"
    );

    // An unreachable secondary target keeps exit 0 and suggests the only
    // way out.
    let tight = SMALL_MODEL.replace(
        r#""thresholds": { "th_pu": 0.6, "th_su": 1.2 }"#,
        r#""thresholds": { "th_pu": 0.6, "th_su": 1e-9 }"#,
    );
    let config_path = write_config(&dir, "tight.json", &tight);
    let output = run(&[
        "synthesize",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let report = read_json(&out.join("synthesis.json"));
    assert_eq!(report["feasible"], serde_json::Value::Bool(false));
    assert_eq!(report["suggestion"], "relax th_pu");
}

#[test]
fn optimize_emits_curve_bracketing_the_minimum() {
    let dir = temp_dir("optimize");
    let config_path = write_config(&dir, "config.json", SMALL_MODEL);
    let out = dir.join("out");
    let output = run(&[
        "optimize",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&out.join("optimize.json"));
    assert_eq!(report["feasible"], serde_json::Value::Bool(true));
    let cost_at_min = report["optimum"]["cost_at_min"].as_f64().unwrap();
    let curve = std::fs::read_to_string(out.join("cost_curve.csv")).unwrap();
    let mut samples = 0usize;
    let mut grid_min = f64::INFINITY;
    for line in curve.lines().skip(2) {
        let cost: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        grid_min = grid_min.min(cost);
        samples += 1;
    }
    assert_eq!(samples, 512);
    assert!(grid_min >= cost_at_min - 1e-12 * cost_at_min);

    // Infeasible thresholds: exit 0, optimization skipped with explanation.
    let infeasible = SMALL_MODEL.replace(
        r#""thresholds": { "th_pu": 0.6, "th_su": 1.2 }"#,
        r#""thresholds": { "th_pu": 1e-9, "th_su": 1e-9 }"#,
    );
    let config_path = write_config(&dir, "infeasible.json", &infeasible);
    let output = run(&[
        "optimize",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let report = read_json(&out.join("optimize.json"));
    assert_eq!(report["feasible"], serde_json::Value::Bool(false));
    assert!(report["explanation"].is_string());
}

#[test]
fn single_point_sweep_matches_analyze() {
    let dir = temp_dir("sweep");
    let sweep_config = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 1.2, "mu": 1.0 }, "su": { "lambda": 0.9, "mu": 1.0 } },
      "sweep": { "rho_pu_start": 1.2, "rho_pu_end": 1.2, "points": 1 }
    }"#;
    let config_path = write_config(&dir, "sweep.json", sweep_config);
    let out = dir.join("out");
    let output = run(&[
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-sim",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let sweep_report = read_json(&out.join("sweep.json"));
    let row = &sweep_report["rows"][0];
    assert_eq!(row["status"], "ok");

    let analyze_config = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 1.2, "mu": 1.0 }, "su": { "lambda": 0.9, "mu": 1.0 } }
    }"#;
    let config_path = write_config(&dir, "analyze.json", analyze_config);
    let out2 = dir.join("out2");
    let output = run(&[
        "analyze",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let analyze_report = read_json(&out2.join("report.json"));
    for (sweep_key, analyze_key) in [
        ("d_pu_ctmc", "d_pu_ctmc"),
        ("d_su_ctmc", "d_su_ctmc"),
        ("d_pu_law", "d_pu_mmn"),
        ("d_su_law", "d_su_law"),
    ] {
        assert_eq!(
            row[sweep_key], analyze_report["delays"][analyze_key],
            "{sweep_key} differs between sweep and analyze"
        );
    }
}

#[test]
fn heavier_primary_load_fattens_the_secondary_marginal_tail() {
    let dir = temp_dir("marginal-tail");
    let light = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 0.3, "mu": 1.0 }, "su": { "lambda": 1.2, "mu": 1.0 } }
    }"#;
    let heavy = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 1.6, "mu": 1.0 }, "su": { "lambda": 1.2, "mu": 1.0 } }
    }"#;

    // Index below which 99.9% of the secondary marginal's mass sits.
    let percentile_index = |out: &Path| -> usize {
        let csv = std::fs::read_to_string(out.join("su_marginal.csv")).unwrap();
        let mut cumulative = 0.0;
        for (idx, line) in csv.lines().skip(2).enumerate() {
            cumulative += line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
            if cumulative >= 0.999 {
                return idx;
            }
        }
        panic!("marginal never reached the percentile");
    };

    let mut indices = Vec::new();
    for (name, config) in [("light", light), ("heavy", heavy)] {
        let config_path = write_config(&dir, &format!("{name}.json"), config);
        let out = dir.join(name);
        let output = run(&[
            "analyze",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
        indices.push(percentile_index(&out));
    }
    assert!(
        indices[1] > indices[0],
        "99.9th percentile index should grow with primary load: {indices:?}"
    );
}

#[test]
fn sweep_flags_unstable_points_but_continues() {
    let dir = temp_dir("sweep-unstable");
    // The last point reaches rho_pu = 2.6 on top of rho_su = 0.9: unstable
    // on 3 servers.
    let config = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 1.0, "mu": 1.0 }, "su": { "lambda": 0.9, "mu": 1.0 } },
      "sweep": { "rho_pu_start": 1.0, "rho_pu_end": 2.6, "points": 3 }
    }"#;
    let config_path = write_config(&dir, "config.json", config);
    let out = dir.join("out");
    let output = run(&[
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-sim",
    ]);
    assert_eq!(code(&output), 2, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&out.join("sweep.json"));
    assert_eq!(report["rows"][0]["status"], "ok");
    assert_eq!(report["rows"][1]["status"], "ok");
    assert!(report["rows"][2]["status"]
        .as_str()
        .unwrap()
        .starts_with("error:"));
    // All rows present in the CSV as well.
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
}

#[test]
fn coupled_simulation_reports_the_paired_decoupled_run() {
    let dir = temp_dir("coupled");
    let config = r#"{
      "model": { "n_servers": 3, "pu": { "lambda": 1.2, "mu": 1.0 }, "su": { "lambda": 0.9, "mu": 1.0 } },
      "coupled": {
        "per_channel_pu_lambda": [0.4, 0.4, 0.4],
        "mu_pu": 1.0,
        "su_stations": [ { "lambda": 0.9, "mu": 1.0 } ]
      },
      "simulation": { "seed": 5, "topology": "coupled", "measured_departures": 3000, "replications": 3 }
    }"#;
    let config_path = write_config(&dir, "config.json", config);
    let out = dir.join("out");
    let output = run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&out.join("simulate.json"));
    assert_eq!(report["topology"], "coupled");
    assert!(report["estimate"]["d_su"].as_f64().unwrap() > 0.0);
    let paired = &report["decoupled_equivalent"];
    let aggregate_lambda = paired["aggregate_model"]["pu"]["lambda"].as_f64().unwrap();
    assert!((aggregate_lambda - 1.2).abs() < 1e-12);
    assert!(paired["rel_diff_d_su"].as_f64().unwrap() >= 0.0);
}
