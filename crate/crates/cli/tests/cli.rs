use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pannbeam")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// Value printed after `key` on its own output line.
fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no `{key}` in {stdout}"))
        .parse()
        .unwrap()
}

fn small_dataset(dir: &Path, seed: &str) -> std::path::PathBuf {
    let out = dir.join(format!("data_{seed}.csv"));
    ok(&[
        "gendata", "--paths", "6", "--amplitudes", "0.05:0.25:4", "--elements", "120", "--seed", seed, "--out", p(&out),
    ]);
    out
}

#[test]
fn single_zero_state_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one.csv");
    ok(&["gendata", "--paths", "1", "--amplitudes", "0", "--perturb", "0", "--elements", "120", "--out", p(&out)]);
    let lines = data_lines(&out);
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert!(lines[0].starts_with("path_id,step_id,R,P"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(&format!("# pannbeam {}", env!("CARGO_PKG_VERSION"))));
    assert!(text.contains("# command: ") && text.contains("# seed: 0"));
}

#[test]
fn gendata_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_dataset(dir.path(), "4");
    let b = dir.path().join("again.csv");
    ok(&["gendata", "--paths", "6", "--amplitudes", "0.05:0.25:4", "--elements", "120", "--seed", "4", "--out", p(&b)]);
    assert_eq!(data_lines(&a), data_lines(&b));
    assert!(data_lines(&a).len() > 10);
}

#[test]
fn eval_reproduces_training_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "1");
    let model = dir.path().join("m.json");
    let report = dir.path().join("hist.csv");
    let tr = ok(&[
        "train", "--data", p(&data), "--variant", "sym", "--epochs", "200", "--seed", "2", "--out-model", p(&model),
        "--report", p(&report),
    ]);
    let ev = ok(&["eval", "--model", p(&model), "--data", p(&data)]);
    let (a, b) = (value(&tr, "train_loss"), value(&ev, "loss"));
    assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.with_extension("json")).unwrap()).unwrap();
    assert_eq!(metrics["final_train_loss"].as_f64(), Some(a));
    assert_eq!(data_lines(&report).len(), 201);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "5");
    let run_once = |name: &str| {
        let m = dir.path().join(name);
        ok(&[
            "train", "--data", p(&data), "--variant", "plain", "--epochs", "80", "--val-paths", "1", "--test-paths", "1",
            "--out-model", p(&m),
        ]);
        std::fs::read_to_string(m).unwrap()
    };
    assert_eq!(run_once("a.json"), run_once("b.json"));
}

#[test]
fn predict_at_zero_strain_gives_zero_stress() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "3");
    for variant in ["plain", "sym", "ti"] {
        let model = dir.path().join(format!("{variant}.json"));
        ok(&["train", "--data", p(&data), "--variant", variant, "--epochs", "5", "--out-model", p(&model)]);
        let out = ok(&["predict", "--model", p(&model), "--strain", "0,0,0,0,0,0"]);
        assert!(out.lines().any(|l| l == "q 0.0 0.0 0.0 0.0 0.0 0.0"), "{out}");
        assert_eq!(value(&out, "psi"), 0.0);
        let scaled = ok(&["predict", "--model", p(&model), "--strain", "-0.1,0,0.02,0.1,0,0", "--scale", "0.5"]);
        assert_eq!(scaled.lines().filter(|l| l.starts_with('C')).count(), 6);
    }
}

#[test]
fn ensemble_eval_writes_per_path_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "6");
    let models: Vec<_> = (0..2)
        .map(|s| {
            let m = dir.path().join(format!("m{s}.json"));
            ok(&["train", "--data", p(&data), "--epochs", "20", "--seed", &s.to_string(), "--out-model", p(&m)]);
            m
        })
        .collect();
    let table = dir.path().join("paths.csv");
    let out = ok(&["eval", "--model", p(&models[0]), p(&models[1]), "--data", p(&data), "--out", p(&table)]);
    let min = value(&out, "ensemble min");
    let losses: Vec<f64> = out.lines().filter_map(|l| l.strip_prefix("loss ")).map(|l| l.split(' ').next().unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 2);
    assert_eq!(min, losses[0].min(losses[1]));
    let lines = data_lines(&table);
    assert_eq!(lines[0], "radius,ratio,path_id,rows,loss_0,loss_1,min,max,mean");
    assert_eq!(lines.len(), 7);
}

#[test]
fn bending_simulation_with_linear_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["simulate", "--scenario", "bend", "--out", p(dir.path())]);
    assert!((value(&out, "tip_rotation_deg") - 180.0).abs() < 1e-6);
    for f in ["history.csv", "state.csv", "strains.csv"] {
        assert!(dir.path().join(f).is_file());
    }
    assert_eq!(data_lines(&dir.path().join("history.csv")).len(), 22);
}

#[test]
fn sweep_over_path_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "7");
    let out = dir.path().join("sweep.csv");
    ok(&[
        "sweep", "--axis", "paths", "--grid", "2,4", "--runs", "2", "--data", p(&data), "--test-paths", "1", "--epochs", "10",
        "--out", p(&out),
    ]);
    let lines = data_lines(&out);
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2,0,") && lines[4].starts_with("4,1,"));
}

#[test]
fn mesh_command_writes_a_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ring.mesh");
    let msg = ok(&["mesh", "--radius", "1", "--inner-radius", "0.5", "--elements", "200", "--out", p(&out)]);
    assert!(msg.contains("triangles"));
    assert!(out.is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(2));
    let missing = run(&["predict", "--model", "/nonexistent/model.json", "--strain", "0,0,0,0,0,0"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/model.json"));
    let diverged = run(&["simulate", "--scenario", "bend", "--moment", "1e4", "--steps", "1", "--out", p(dir.path())]);
    assert_eq!(diverged.status.code(), Some(3));
    assert!(!diverged.stderr.is_empty());
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
