use std::fs;
use std::path::Path;

use alpha_ilc::harness::{export_run, read_run_log, replay_mismatch, Experiment, ExperimentConfig};

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name),
    )
    .unwrap()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn shipped_configs_parse_and_validate() {
    for name in ["nominal.json", "deadbeat.json", "paper_like.json"] {
        let cfg = config(name);
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.expanded_schedule().len() >= cfg.iterations);
    }
    let walking = config("paper_like.json");
    let hz: Vec<f64> = walking
        .schedule
        .iter()
        .map(|e| e.profile.effective_hz().unwrap())
        .collect();
    assert_eq!(hz, [30.0, 35.0, 25.0, 28.0, 22.0, 20.0]);
    assert_eq!(walking.iterations, 24);
}

#[test]
fn documented_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example-config.json");
    ExperimentConfig::load(&path).unwrap().validate().unwrap();
}

#[test]
fn one_iteration_run_writes_four_files() {
    let mut cfg = config("nominal.json");
    cfg.iterations = 1;
    let exp = Experiment::prepare(&cfg).unwrap();
    let recs = exp.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_run(dir.path(), &exp, &recs).unwrap();
    assert_eq!(
        file_names(dir.path()),
        [
            "convergence.csv",
            "iter_0_error.csv",
            "iter_0_waveforms.csv",
            "run.json"
        ]
    );
    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().next().unwrap(), "j,f_alpha_hz,rms_m,fit_residual_m");
    let err = fs::read_to_string(dir.path().join("iter_0_error.csv")).unwrap();
    assert_eq!(err.lines().next().unwrap(), "alpha_rad,e_m,e_fit_m");
    assert_eq!(err.lines().count(), 1 + 49);
    let wf = fs::read_to_string(dir.path().join("iter_0_waveforms.csv")).unwrap();
    assert_eq!(wf.lines().count(), 1 + cfg.waveform.resolution);
}

#[test]
fn nominal_convergence_csv_shows_reduction_by_row_15() {
    let cfg = config("nominal.json");
    let exp = Experiment::prepare(&cfg).unwrap();
    let recs = exp.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_run(dir.path(), &exp, &recs).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("convergence.csv")).unwrap();
    let rms: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[2].parse::<f64>().unwrap())
        .collect();
    assert_eq!(rms.len(), 24);
    assert!(rms[0] / rms[15] >= 30.0);
    // the CSV holds the same numbers as the records
    for (r, v) in recs.iter().zip(&rms) {
        assert_eq!(r.rms_m, *v);
    }
}

#[test]
fn replay_detects_tampering() {
    let cfg = config("deadbeat.json");
    let exp = Experiment::prepare(&cfg).unwrap();
    let recs = exp.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_run(dir.path(), &exp, &recs).unwrap();
    let (logged, mut log) = read_run_log(&dir.path().join("run.json")).unwrap();
    assert_eq!(logged, cfg);
    assert_eq!(replay_mismatch(&exp.learning, &log).unwrap(), None);
    log[2].theta_u_next[7] = f64::from_bits(log[2].theta_u_next[7].to_bits() ^ 1);
    assert_eq!(replay_mismatch(&exp.learning, &log).unwrap(), Some(2));
}

#[test]
fn export_needs_records() {
    let cfg = config("deadbeat.json");
    let exp = Experiment::prepare(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(export_run(dir.path(), &exp, &[]).is_err());
}
