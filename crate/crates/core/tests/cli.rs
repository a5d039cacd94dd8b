use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_carnot-homog"));
    c.env_remove("CARNOT_HOMOG_SEED").env_remove("CARNOT_HOMOG_WORKERS");
    c
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(task: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(task).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn action_config() -> Value {
    json!({
        "group": "heisenberg1",
        "environment": {"kind": "product", "seed": 5},
        "model": {"beta": 2.0},
        "task": {"type": "action", "epsilon": 0.5, "start": [0.0, 0.0, 0.0], "target": [0.4, 0.2, -0.1], "horizon": 1.0, "n_pieces": 6}
    })
}

/// Data rows of a stamped CSV.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn verify_passes_on_heisenberg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        &json!({"group": "heisenberg1", "environment": {"kind": "product"}, "model": {"beta": 2.0}}),
    );
    let o = run("verify", &cfg, &dir.path().join("out"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    let rows = csv_rows(&dir.path().join("out/verify.csv"));
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r[2] == "true"), "{rows:?}");
    let scopes: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(scopes.into_iter().collect::<Vec<_>>(), ["env", "group", "homog", "paths", "solver"]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["task"], "verify");
    assert!(m["config"]["solver"]["max_iters"].is_number(), "defaults are written out");
}

#[test]
fn missing_beta_is_a_schema_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = action_config();
    v["model"] = json!({});
    let cfg = write_config(dir.path(), "a.json", &v);
    let o = run("action", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.beta"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn other_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases: Vec<(Value, &str)> = vec![
        ({ let mut v = action_config(); v["solver"] = json!({"max_itres": 3}); v }, "solver"),
        ({ let mut v = action_config(); v["model"]["beta"] = json!(0.5); v }, "model.beta"),
        ({ let mut v = action_config(); v["group"] = json!("sl2"); v }, "group"),
        ({ let mut v = action_config(); v["task"]["target"] = json!([1.0, 2.0]); v }, "target"),
    ];
    for (v, needle) in cases {
        let cfg = write_config(dir.path(), "bad.json", &v);
        let o = run("action", &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{needle}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{needle}: {}", stderr(&o));
    }
    let cfg = write_config(dir.path(), "a.json", &action_config());
    let o = run("mu", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task.type"));
}

#[test]
fn infeasible_and_io_failures_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = action_config();
    v["environment"] = json!({"kind": "constant", "v_amplitude": 0.0});
    v["solver"] = json!({"control_cap": 0.5});
    v["task"]["target"] = json!([3.0, 0.0, 0.0]);
    let cfg = write_config(dir.path(), "a.json", &v);
    let o = run("action", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = run("action", &dir.path().join("missing.json"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = write_config(dir.path(), "b.json", &action_config());
    let o = run("action", &cfg, &blocker.join("out"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn constant_environment_table_has_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.json",
        &json!({
            "group": "heisenberg1",
            "environment": {"kind": "constant", "v_amplitude": 0.0},
            "model": {"beta": 2.0},
            "task": {"type": "effective-lagrangian", "lbar": {"q_nodes": 5, "t_ladder": [2.0, 4.0], "n_seeds": 2}}
        }),
    );
    let out = dir.path().join("out");
    let o = run("effective-lagrangian", &cfg, &out, &["--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("lbar.csv"));
    assert_eq!(rows.len(), 25);
    for r in &rows {
        let q: Vec<f64> = r[0].split(';').map(|s| s.parse().unwrap()).collect();
        let v: f64 = r[1].parse().unwrap();
        assert!((v - 0.5 * (q[0] * q[0] + q[1] * q[1])).abs() < 1e-6, "{r:?}");
    }
    let svg = std::fs::read_to_string(out.join("lbar_sections.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("config_hash="));
    assert!(out.join("lbar_table.json").exists());
}

#[test]
fn outputs_do_not_depend_on_worker_count_and_follow_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", &action_config());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run("action", &cfg, &a, &["--workers", "1"]).status.success());
    let o = bin().args(["action", "--config"]).arg(&cfg).arg("--out").arg(&b).env("CARNOT_HOMOG_WORKERS", "3").output().unwrap();
    assert!(o.status.success());
    for f in ["action.csv", "action_control.csv", "action_path.csv", "action_diagnostics.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = bin().args(["action", "--config"]).arg(&cfg).arg("--out").arg(&c).env("CARNOT_HOMOG_SEED", "77").output().unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(c.join("action.csv")).unwrap();
    assert!(text.contains("# master_seed=77"));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["workers"], 3);
}
