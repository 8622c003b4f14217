use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alpha-ilc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_nominal_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nominal");
    let o = run(&[
        "run",
        config("nominal.json").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "run.json",
        "convergence.csv",
        "iter_0_error.csv",
        "iter_23_waveforms.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(stdout(&o).contains("iterations: 24"));
}

#[test]
fn seed_flag_changes_noisy_runs_only_through_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("paper_like.json");
    let mut csvs = Vec::new();
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = dir.path().join(name);
        let o = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(fs::read(out.join("convergence.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_ne!(csvs[0], csvs[2]);
}

#[test]
fn matrices_for_deadbeat_report_zero_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "matrices",
        config("deadbeat.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("contraction_factor: 0.000000"),
        "{}",
        stdout(&o)
    );
    let q = fs::read_to_string(dir.path().join("Q.csv")).unwrap();
    assert_eq!(q.lines().count(), 30);
    assert_eq!(q.lines().next().unwrap().split(',').count(), 30);
}

#[test]
fn matrices_do_not_depend_on_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["nominal.json", "paper_like.json"] {
        let out = dir.path().join(name);
        let o = run(&[
            "matrices",
            config(name).to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        outputs.push((
            fs::read(out.join("Q.csv")).unwrap(),
            fs::read(out.join("L.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn quad_panels_flag_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "matrices",
        config("nominal.json").to_str().unwrap(),
        "--quad-panels",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
}

#[test]
fn fit_compares_dense_and_sparse_samplings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = config("nominal.json");
    let o = run(&[
        "synth-error",
        cfg.to_str().unwrap(),
        "--noise-sigma-m",
        "2.4e-9",
        "--sparse",
        "50",
        "--out-dir",
        d,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dense = dir.path().join("error_1000.csv");
    let sparse = dir.path().join("error_50.csv");
    let o = run(&[
        "fit",
        dense.to_str().unwrap(),
        cfg.to_str().unwrap(),
        "--compare",
        sparse.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("difference_over_residual: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ratio < 1.0, "{text}");
}

#[test]
fn waveforms_standard_and_enhanced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("deadbeat.json");
    let run_dir = dir.path().join("run");
    assert!(run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        run_dir.to_str().unwrap()
    ])
    .status
    .success());
    let wf = dir.path().join("wf");
    let o = run(&[
        "waveforms",
        cfg.to_str().unwrap(),
        "--out-dir",
        wf.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "waveforms",
        cfg.to_str().unwrap(),
        "--run",
        run_dir.to_str().unwrap(),
        "--out-dir",
        wf.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let std = fs::read_to_string(wf.join("standard_waveforms.csv")).unwrap();
    let enh = fs::read_to_string(wf.join("enhanced_waveforms.csv")).unwrap();
    assert_eq!(std.lines().count(), enh.lines().count());
    assert_ne!(std, enh);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config("nominal.json")).unwrap()).unwrap();
    v["weights"]["W_dU"] = serde_json::json!(0.0);
    fs::write(&path, v.to_string()).unwrap();
    let o = run(&["run", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[config]") && err.contains("W_dU"), "{err}");
}

#[test]
fn inadmissible_weights_fail_preflight() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config("nominal.json")).unwrap()).unwrap();
    v["weights"] = serde_json::json!({"W_e": 0.0, "W_u": 0.0, "W_du": 0.0});
    fs::write(&path, v.to_string()).unwrap();
    let o = run(&[
        "run",
        path.to_str().unwrap(),
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[preflight]"), "{}", stderr(&o));
}

#[test]
fn failing_run_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sat.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config("nominal.json")).unwrap()).unwrap();
    // grows past the shear limit after a few iterations
    v["weights"] = serde_json::json!({"W_e": 1.0, "W_u": 0.0, "W_du": 1e-15});
    v["plant"]["disturbance"]["harmonics"] = serde_json::json!([{"order": 1, "amplitude_m": 1.2e-6}]);
    fs::write(&path, v.to_string()).unwrap();
    let out = dir.path().join("o");
    let o = run(&["run", path.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[split] iteration"), "{err}");
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(log["failure"]["stage"], "split");
    let kept = log["iterations"].as_array().unwrap().len();
    assert!(kept >= 1);
    assert!(out.join(format!("iter_{}_error.csv", kept - 1)).exists());
}

#[test]
fn sweep_runs_each_config_into_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        config("nominal.json").to_str().unwrap(),
        config("deadbeat.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("nominal/run.json").exists());
    assert!(dir.path().join("deadbeat/run.json").exists());
}
