//! Binary-level pipeline tests: exit codes, file outputs, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lmirnn")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, kind: &str, epochs: usize, extra_gamma: Option<f64>) -> PathBuf {
    let gamma = extra_gamma
        .map(|g| format!("\"gamma_sq\": {g},"))
        .unwrap_or_default();
    let cfg = format!(
        r#"{{
  "kind": "{kind}",
  "dims": {{ "n_u": 2, "n_y": 2, "n_z": 4 }},
  {gamma}
  "train": {{ "epochs": {epochs}, "init_epochs": 10, "batch_size": 32 }},
  "dataset": {{ "source": "synthetic", "profile": {{
      "epsilon": 0.2, "excitation_amplitude": 1.0, "ood_amplitude_factor": 2.0,
      "duration_train": 1500, "duration_val": 1100, "duration_test": 1100,
      "duration_ood": 1100, "seed": 5 }} }},
  "eval": {{ "horizon": 200, "t_init": 50 }},
  "output_dir": "{name}_out",
  "seed": 11
}}"#
    );
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn full_pipeline_with_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "run", "constrained", 15, Some(20.0));
    let cfg = cfg.to_str().unwrap();

    // generate
    let out = run(&["generate", "--config", cfg, "--output-dir", "data"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.csv", "val.csv", "test.csv", "ood.csv", "manifest.json"] {
        assert!(dir.join("data").join(f).exists(), "missing {f}");
    }

    // train
    let out = run(&["train", "--config", cfg], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = dir.join("run_out/checkpoint.json");
    assert!(ckpt.exists());
    assert!(dir.join("run_out/train_log.jsonl").exists());
    // every log line parses and carries the schema fields
    let log = std::fs::read_to_string(dir.join("run_out/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 15);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "mse", "barrier", "nu", "feasibility_margin", "grad_norm", "backtrack_count"] {
            assert!(v.get(key).is_some(), "log line missing {key}: {line}");
        }
    }

    // evaluate (truncation expected: horizon 2000 > data)
    let ckpt_s = ckpt.to_str().unwrap();
    let out = run(
        &["evaluate", "--checkpoint", ckpt_s, "--config", cfg, "--split", "test", "--horizon", "2000"],
        dir,
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("truncated"),
        "expected truncation warning"
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run_out/metrics_test.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["truncated"], serde_json::Value::Bool(true));
    assert!(dir.join("run_out/metrics_test.csv").exists());

    // gain search, both modes
    for (mode, file) in [("gain", "gain_val.json"), ("incremental", "gain_incremental_val.json")] {
        let out = run(
            &[
                "gain-search", "--checkpoint", ckpt_s, "--config", cfg, "--split", "val",
                "--mode", mode, "--steps", "40", "--horizon", "200",
            ],
            dir,
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.join("run_out").join(file).exists());
    }
    // invalid mode is a usage error
    let out = run(
        &["gain-search", "--checkpoint", ckpt_s, "--config", cfg, "--mode", "sideways"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));

    // certify passes on the constrained checkpoint
    let out = run(&["certify", "--checkpoint", ckpt_s], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // bit-rot guard: a reloaded-and-resaved checkpoint certifies identically
    let reloaded = dir.join("run_out/ckpt_resaved.json");
    std::fs::copy(&ckpt, &reloaded).unwrap();
    let out1 = run(&["certify", "--checkpoint", ckpt_s, "--output", "cert1.json"], dir);
    let out2 = run(
        &["certify", "--checkpoint", reloaded.to_str().unwrap(), "--output", "cert2.json"],
        dir,
    );
    assert_eq!(out1.status.code(), Some(0));
    assert_eq!(out2.status.code(), Some(0));
    let c1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("cert1.json")).unwrap()).unwrap();
    let c2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("cert2.json")).unwrap()).unwrap();
    assert_eq!(c1["feasibility_margin"], c2["feasibility_margin"]);
    assert_eq!(c1["passed"], c2["passed"]);

    // compare merges what exists
    let out = run(
        &["compare", "run_out", "--split", "test", "--output", "cmp.json", "--csv", "cmp.csv",
          "--emit-plot-data", "plot.csv"],
        dir,
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("cmp.json").exists());
    assert!(dir.join("plot.csv").exists());
}

#[test]
fn certify_on_unconstrained_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "lti", "lti_rnn", 3, None);
    let out = run(&["train", "--config", cfg.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(0));
    let out = run(
        &["certify", "--checkpoint", dir.join("lti_out/checkpoint.json").to_str().unwrap()],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("constrained"));
}

#[test]
fn certify_fails_on_corrupted_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "c", "constrained", 5, Some(20.0));
    let out = run(&["train", "--config", cfg.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(0));
    // scale a_t by 100: the constraint must no longer be negative definite
    let ckpt_path = dir.join("c_out/checkpoint.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ckpt_path).unwrap()).unwrap();
    let data = doc["predictor"]["a_t"]["data"].as_array_mut().unwrap();
    for v in data.iter_mut() {
        *v = serde_json::json!(v.as_f64().unwrap() * 100.0 + 50.0);
    }
    let corrupted = dir.join("c_out/corrupted.json");
    std::fs::write(&corrupted, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(&["certify", "--checkpoint", corrupted.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED"));
}

#[test]
fn train_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "det", "constrained", 8, Some(20.0));
    let cfg = cfg.to_str().unwrap();
    let out = run(&["train", "--config", cfg, "--output-dir", "a"], dir);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["train", "--config", cfg, "--output-dir", "b"], dir);
    assert_eq!(out.status.code(), Some(0));
    for f in ["checkpoint.json", "train_log.jsonl", "init_log.jsonl"] {
        let a = std::fs::read(dir.join("a").join(f)).unwrap();
        let b = std::fs::read(dir.join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn generate_validates_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{
  "kind": "lti_rnn",
  "dims": { "n_u": 2, "n_y": 2, "n_z": 4 },
  "dataset": { "source": "synthetic", "profile": {
      "epsilon": 0.2, "excitation_amplitude": 1.0, "ood_amplitude_factor": 2.0,
      "duration_train": 50, "duration_val": 50, "duration_test": 50,
      "duration_ood": 50, "seed": 5 } },
  "output_dir": "gen_out",
  "seed": 1
}"#;
    std::fs::write(dir.join("bad.json"), cfg).unwrap();
    let out = run(&["generate", "--config", "bad.json"], dir);
    assert_eq!(out.status.code(), Some(1));
    // nothing was written
    assert!(!dir.join("gen_out").exists());
}

#[test]
fn config_roundtrip_json_and_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // a JSON config parses, re-serializes and re-parses to the same value
    let cfg_path = write_config(dir, "rt", "constrained", 5, Some(10.0));
    let original = std::fs::read_to_string(&cfg_path).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&original).unwrap();
    // run the binary's own round-trip: train writes config_used.json
    let out = run(&["train", "--config", cfg_path.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(0));
    let reserialized: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("rt_out/config_used.json")).unwrap(),
    )
    .unwrap();
    for key in ["kind", "dataset", "output_dir", "seed"] {
        assert_eq!(parsed[key], reserialized[key], "field {key} did not round-trip");
    }
    assert_eq!(
        parsed["gamma_sq"].as_f64(),
        reserialized["gamma_sq"].as_f64(),
        "gamma_sq did not round-trip"
    );
    // and a TOML config is accepted
    let toml_cfg = r#"
format_version = 1
kind = "lti_rnn"
output_dir = "toml_out"
seed = 2

[dims]
n_u = 2
n_y = 2
n_z = 3

[train]
epochs = 3
init_epochs = 3
batch_size = 32

[dataset]
source = "synthetic"

[dataset.profile]
epsilon = 0.2
excitation_amplitude = 1.0
ood_amplitude_factor = 2.0
duration_train = 1200
duration_val = 1100
duration_test = 1100
duration_ood = 0
seed = 5
"#;
    std::fs::write(dir.join("run.toml"), toml_cfg).unwrap();
    let out = run(&["train", "--config", "run.toml"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_from_generated_csv_matches_synthetic_source() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "syn", "lti_rnn", 6, None);
    let cfg_s = cfg.to_str().unwrap();
    let out = run(&["generate", "--config", cfg_s, "--output-dir", "data"], dir);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["train", "--config", cfg_s, "--output-dir", "from_syn"], dir);
    assert_eq!(out.status.code(), Some(0));
    // identical training over the CSV round-trip of the same data
    let csv_cfg = r#"{
  "kind": "lti_rnn",
  "dims": { "n_u": 2, "n_y": 2, "n_z": 4 },
  "train": { "epochs": 6, "init_epochs": 10, "batch_size": 32 },
  "dataset": { "source": "csv",
    "schema": { "inputs": ["u0","u1"], "outputs": ["y0","y1"], "sample_period": 1.0 },
    "train": ["data/train.csv"], "val": ["data/val.csv"], "test": ["data/test.csv"],
    "ood": ["data/ood.csv"] },
  "output_dir": "from_csv",
  "seed": 11
}"#;
    std::fs::write(dir.join("csv.json"), csv_cfg).unwrap();
    let out = run(&["train", "--config", "csv.json"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.join("from_syn/checkpoint.json")).unwrap();
    let b = std::fs::read(dir.join("from_csv/checkpoint.json")).unwrap();
    assert_eq!(a, b, "CSV round-trip changed the training outcome");
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("broken.csv"), "u0,y0\n1,2\n").unwrap();
    let cfg = r#"{
  "kind": "lti_rnn",
  "dims": { "n_u": 2, "n_y": 2, "n_z": 3 },
  "train": { "epochs": 3, "init_epochs": 3 },
  "dataset": { "source": "csv",
    "schema": { "inputs": ["u0","u1"], "outputs": ["y0","y1"], "sample_period": 1.0 },
    "train": ["broken.csv"], "val": ["broken.csv"], "test": ["broken.csv"] },
  "output_dir": "d_out",
  "seed": 1
}"#;
    std::fs::write(dir.join("d.json"), cfg).unwrap();
    let out = run(&["train", "--config", "d.json"], dir);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("u1"));
}

#[test]
fn grid_emits_sorted_leaderboard() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{
  "kind": "constrained",
  "dims": { "n_u": 2, "n_y": 2, "n_z": 3 },
  "gamma_sq": 20.0,
  "train": { "epochs": 4, "init_epochs": 4, "batch_size": 32 },
  "dataset": { "source": "synthetic", "profile": {
      "epsilon": 0.2, "excitation_amplitude": 1.0, "ood_amplitude_factor": 2.0,
      "duration_train": 1500, "duration_val": 1100, "duration_test": 1100,
      "duration_ood": 0, "seed": 5 } },
  "eval": { "horizon": 200, "t_init": 50 },
  "output_dir": "grid_out",
  "seed": 11,
  "grid": { "n_z": [2, 3], "gamma_sq": [20.0] }
}"#;
    std::fs::write(dir.join("g.json"), cfg).unwrap();
    let out = run(&["grid", "--config", "g.json"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(dir.join("grid_out/leaderboard.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    let r0 = rows[0]["val_mean_rmse"].as_f64().unwrap();
    let r1 = rows[1]["val_mean_rmse"].as_f64().unwrap();
    assert!(r0 <= r1, "leaderboard not ascending: {r0} then {r1}");
    assert!(dir.join("grid_out/leaderboard.csv").exists());
    for row in &rows {
        let run_dir = dir.join("grid_out").join(row["run"].as_str().unwrap());
        assert!(run_dir.join("checkpoint.json").exists());
        assert!(run_dir.join("metrics_val.json").exists());
    }
}

#[test]
fn stopped_by_line_search_exits_4_and_keeps_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{
  "kind": "constrained",
  "dims": { "n_u": 2, "n_y": 2, "n_z": 4 },
  "gamma_sq": 5.0,
  "train": { "epochs": 50, "init_epochs": 5, "batch_size": 32, "learning_rate": 1e40 },
  "dataset": { "source": "synthetic", "profile": {
      "epsilon": 0.2, "excitation_amplitude": 1.0, "ood_amplitude_factor": 2.0,
      "duration_train": 1500, "duration_val": 1100, "duration_test": 1100,
      "duration_ood": 0, "seed": 5 } },
  "output_dir": "stop_out",
  "seed": 11
}"#;
    std::fs::write(dir.join("stop.json"), cfg).unwrap();
    let out = run(&["train", "--config", "stop.json"], dir);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    // the last feasible checkpoint is still written and certifies
    let ckpt = dir.join("stop_out/checkpoint.json");
    assert!(ckpt.exists());
    let out = run(&["certify", "--checkpoint", ckpt.to_str().unwrap()], dir);
    assert_eq!(out.status.code(), Some(0));
}
