//! Experiment configuration, the learning loop and result export.
//!
//! One iteration builds the sample grid for the scheduled drive profile,
//! simulates a step with the current input, fits the sampled error, updates
//! the input coefficients and splits the new input over the shear groups.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::basis::{
    BasisSet, BasisSpec, IndependenceCertificate, ParamVector, Role, DEFAULT_MIN_SIGMA_RATIO,
};
use crate::commutation::{build_sample_grid, DriveProfile, SampleGrid};
use crate::error::{Error, Result};
use crate::ilc::{
    compute_learning_matrices, contraction_factor, fit_error, ilc_update, rms_alpha, IlcWeights,
    LearningMatrices, ScalarWeights,
};
use crate::plant::{
    make_disturbance, simulate_step, DisturbanceSpec, PlantModel, RatePerturbation, StepConditions,
};
use crate::quadrature::{CompositeRule, QuadratureSpec};
use crate::waveform::{
    combined_shear_input, split_compensating_fn, standard_waveforms, write_waveforms_csv, ShearSplit,
    StandardWaveforms, Waveform, WaveformConfig,
};

pub const DEFAULT_FS_HZ: f64 = 1500.0;
pub const DEFAULT_REFERENCE_SLOPE_M_PER_RAD: f64 = 3e-7;

fn default_fs() -> f64 {
    DEFAULT_FS_HZ
}

fn default_reference_slope() -> f64 {
    DEFAULT_REFERENCE_SLOPE_M_PER_RAD
}

fn default_min_sigma_ratio() -> f64 {
    DEFAULT_MIN_SIGMA_RATIO
}

fn default_repeat() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Simulated plant as written in the experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// True piezo gain. When absent it follows from the reference slope and
    /// the standard shear slope so that y_d(α) = slope·α.
    #[serde(rename = "h0_m_per_V", default, skip_serializing_if = "Option::is_none")]
    pub h0_m_per_v: Option<f64>,
    #[serde(default = "default_reference_slope")]
    pub reference_slope_m_per_rad: f64,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub noise_sigma_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_perturbation: Option<RatePerturbation>,
}

/// A drive profile used for `repeat` consecutive iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub profile: DriveProfile,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub basis: BasisSpec,
    pub plant: PlantSpec,
    /// Gain assumed by the learning law; defaults to the plant gain.
    #[serde(rename = "model_h0_m_per_V", default, skip_serializing_if = "Option::is_none")]
    pub model_h0_m_per_v: Option<f64>,
    pub weights: ScalarWeights,
    #[serde(default = "default_fs")]
    pub fs_hz: f64,
    pub schedule: Vec<ScheduleEntry>,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_min_sigma_ratio")]
    pub min_sigma_ratio: f64,
    /// Minimum samples per step; defaults to the basis size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<usize>,
    /// Run even if the contraction factor is ≥ 1.
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_nonconvergent: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// One drive profile per iteration, in order.
    pub fn expanded_schedule(&self) -> Vec<&DriveProfile> {
        self.schedule
            .iter()
            .flat_map(|e| std::iter::repeat_n(&e.profile, e.repeat))
            .collect()
    }

    pub fn plant_h0(&self) -> f64 {
        self.plant
            .h0_m_per_v
            .unwrap_or(self.plant.reference_slope_m_per_rad / self.waveform.shear_slope())
    }

    pub fn model_h0(&self) -> f64 {
        self.model_h0_m_per_v.unwrap_or_else(|| self.plant_h0())
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.basis.m)
    }

    /// Static checks that need no matrices.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be ≥ 1".into()));
        }
        let schedule = self.expanded_schedule();
        if schedule.len() < self.iterations {
            return Err(Error::Config(format!(
                "schedule covers {} iterations, {} requested",
                schedule.len(),
                self.iterations
            )));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::Domain {
                what: "fs_hz",
                value: self.fs_hz,
                expected: "finite and > 0",
            });
        }
        let f_max = schedule[..self.iterations]
            .iter()
            .map(|p| p.max_hz())
            .fold(0.0, f64::max);
        if self.fs_hz < self.basis.m as f64 * f_max {
            return Err(Error::Config(format!(
                "fs_hz = {} is below M·max f_alpha = {}·{f_max}; steps would have fewer samples than basis functions",
                self.fs_hz, self.basis.m
            )));
        }
        if !(self.plant.reference_slope_m_per_rad.is_finite() && self.plant.reference_slope_m_per_rad > 0.0) {
            return Err(Error::Domain {
                what: "reference_slope_m_per_rad",
                value: self.plant.reference_slope_m_per_rad,
                expected: "finite and > 0",
            });
        }
        for (what, v) in [
            ("plant h0_m_per_V", self.plant_h0()),
            ("model_h0_m_per_V", self.model_h0()),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain {
                    what,
                    value: v,
                    expected: "finite and > 0",
                });
            }
        }
        if !(self.min_sigma_ratio > 0.0 && self.min_sigma_ratio < 1.0) {
            return Err(Error::Domain {
                what: "min_sigma_ratio",
                value: self.min_sigma_ratio,
                expected: "in (0, 1)",
            });
        }
        self.quadrature.validate()?;
        self.waveform.validate()
    }
}

/// Where in the loop something went wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Preflight,
    Grid,
    Simulate,
    Fit,
    Update,
    Split,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Preflight => "preflight",
            Stage::Grid => "grid",
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Update => "update",
            Stage::Split => "split",
            Stage::Export => "export",
        };
        f.write_str(s)
    }
}

/// A failed run. `partial` holds every iteration completed before the failure.
#[derive(Debug, Clone)]
pub struct RunError {
    pub stage: Stage,
    pub iteration: Option<usize>,
    pub source: Error,
    pub partial: Vec<IterationRecord>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.iteration {
            Some(j) => write!(f, "[{}] iteration {j}: {}", self.stage, self.source),
            None => write!(f, "[{}] {}", self.stage, self.source),
        }
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at(stage: Stage, iteration: Option<usize>) -> impl FnOnce(Error) -> RunError {
    move |source| RunError {
        stage,
        iteration,
        source,
        partial: Vec::new(),
    }
}

/// Everything logged for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub j: usize,
    pub f_alpha_hz: f64,
    pub theta_u: ParamVector,
    pub theta_e: ParamVector,
    /// Coefficients computed from this iteration for the next one.
    pub theta_u_next: ParamVector,
    pub alphas: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub rms_m: f64,
    pub fit_residual_m: f64,
    pub certificate: IndependenceCertificate,
    pub disturbance_scale: f64,
    /// Shear waveforms applied during this iteration.
    pub shears: ShearSplit,
}

impl IterationRecord {
    pub fn n_samples(&self) -> usize {
        self.alphas.len()
    }
}

/// Derived quantities that stay fixed over a run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub basis: BasisSet,
    pub learning: LearningMatrices,
    pub plant: PlantModel,
    pub standard: StandardWaveforms,
    pub u_s: Waveform,
    pub contraction: f64,
}

impl Experiment {
    /// Validates the configuration, builds the learning matrices and runs the
    /// contraction pre-flight check.
    pub fn prepare(config: &ExperimentConfig) -> std::result::Result<Self, RunError> {
        config.validate().map_err(at(Stage::Config, None))?;
        let basis = config.basis.build().map_err(at(Stage::Config, None))?;
        let standard = standard_waveforms(&config.waveform).map_err(at(Stage::Config, None))?;
        let u_s = combined_shear_input(&standard.shears).map_err(at(Stage::Config, None))?;
        let disturbance =
            make_disturbance(&config.plant.disturbance, &basis).map_err(at(Stage::Config, None))?;
        let plant = PlantModel {
            h0_m_per_v: config.plant_h0(),
            disturbance,
            noise_sigma_m: config.plant.noise_sigma_m,
            rate_perturbation: config.plant.rate_perturbation.clone(),
        };
        plant.validate().map_err(at(Stage::Config, None))?;

        let weights = IlcWeights::from(config.weights);
        let rule = CompositeRule::new(config.quadrature).map_err(at(Stage::Preflight, None))?;
        weights
            .check_convergence_admissible(&rule)
            .map_err(at(Stage::Preflight, None))?;
        let learning = compute_learning_matrices(&basis, &weights, config.model_h0(), config.quadrature)
            .map_err(at(Stage::Preflight, None))?;
        let contraction = contraction_factor(&learning, plant.h0_m_per_v);
        if contraction.is_nan() || (contraction >= 1.0 && !config.allow_nonconvergent) {
            return Err(RunError {
                stage: Stage::Preflight,
                iteration: None,
                source: Error::InadmissibleWeights(format!(
                    "contraction factor ‖Q − h0·L‖₂ = {contraction} ≥ 1; monotonic convergence is not certified \
                     (set allow_nonconvergent to run anyway)"
                )),
                partial: Vec::new(),
            });
        }
        Ok(Self {
            config: config.clone(),
            basis,
            learning,
            plant,
            standard,
            u_s,
            contraction,
        })
    }

    /// Per-iteration noise seed.
    pub fn step_seed(&self, j: usize) -> u64 {
        let mut z = self.config.seed ^ (j as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn run(&self) -> std::result::Result<Vec<IterationRecord>, RunError> {
        self.run_with(|_| Ok(()))
    }

    /// Runs all iterations, handing every finished record to `on_record`
    /// before the next iteration starts.
    pub fn run_with(
        &self,
        mut on_record: impl FnMut(&IterationRecord) -> Result<()>,
    ) -> std::result::Result<Vec<IterationRecord>, RunError> {
        let cfg = &self.config;
        let m = self.basis.len();
        let schedule = cfg.expanded_schedule();
        let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.iterations);
        let mut theta_u = ParamVector::zeros(m, Role::Input).at_iteration(0);
        let mut shears = self.standard.shears.clone();
        let mut previous_hz = None;

        for (j, profile) in schedule.into_iter().take(cfg.iterations).enumerate() {
            let fail = |stage: Stage, records: &Vec<IterationRecord>| {
                let partial = records.clone();
                move |source| RunError {
                    stage,
                    iteration: Some(j),
                    source,
                    partial,
                }
            };

            let grid = build_sample_grid(profile, j, cfg.fs_hz, cfg.min_samples())
                .map_err(fail(Stage::Grid, &records))?;
            let f_alpha_hz = profile.effective_hz().map_err(fail(Stage::Grid, &records))?;
            let cond = StepConditions {
                iteration: j,
                drive_hz: f_alpha_hz,
                previous_drive_hz: previous_hz,
            };
            let tu = theta_u.theta.as_slice();
            let meas = simulate_step(
                &self.plant,
                &self.u_s,
                |a| self.basis.combine(tu, a),
                &grid,
                &cond,
                self.step_seed(j),
            )
            .map_err(fail(Stage::Simulate, &records))?;

            let fit = fit_error(&meas.e_m, &grid, &self.basis, cfg.min_sigma_ratio)
                .map_err(fail(Stage::Fit, &records))?;
            let rms_m =
                rms_alpha(&fit.theta, &self.basis, cfg.quadrature).map_err(fail(Stage::Fit, &records))?;

            let theta_u_next =
                ilc_update(&theta_u, &fit.theta, &self.learning).map_err(fail(Stage::Update, &records))?;
            let tn = theta_u_next.theta.as_slice();
            let next_shears = split_compensating_fn(|a| self.basis.combine(tn, a), &self.standard.shears)
                .map_err(fail(Stage::Split, &records))?;

            let record = IterationRecord {
                j,
                f_alpha_hz,
                theta_u: theta_u.clone(),
                theta_e: fit.theta,
                theta_u_next: theta_u_next.clone(),
                alphas: grid.alphas,
                e_bar: meas.e_m,
                rms_m,
                fit_residual_m: fit.residual_rms_m,
                certificate: fit.certificate,
                disturbance_scale: meas.disturbance_scale,
                shears,
            };
            on_record(&record).map_err(fail(Stage::Export, &records))?;
            records.push(record);

            theta_u = theta_u_next;
            shears = next_shears;
            previous_hz = Some(f_alpha_hz);
        }
        Ok(records)
    }
}

/// Prepares and runs an experiment.
pub fn run_experiment(config: &ExperimentConfig) -> std::result::Result<Vec<IterationRecord>, RunError> {
    Experiment::prepare(config)?.run()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Config(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes `iter_<j>_error.csv` and `iter_<j>_waveforms.csv`.
pub fn write_iteration_files(dir: &Path, exp: &Experiment, rec: &IterationRecord) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("iter_{}_error.csv", rec.j));
    let mut out = create(&path)?;
    let theta = rec.theta_e.theta.as_slice();
    let mut body = String::from("alpha_rad,e_m,e_fit_m\n");
    for (a, e) in rec.alphas.iter().zip(&rec.e_bar) {
        body.push_str(&format!("{a:e},{e:e},{:e}\n", exp.basis.combine(theta, *a)));
    }
    out.write_all(body.as_bytes()).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))?;

    let path = dir.join(format!("iter_{}_waveforms.csv", rec.j));
    let mut out = create(&path)?;
    write_waveforms_csv(&mut out, &exp.standard.clamp1, &exp.standard.clamp2, &rec.shears)
        .and_then(|_| out.flush())
        .map_err(io_err(&path))
}

/// Summary numbers of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub initial_rms_m: f64,
    pub final_rms_m: f64,
    pub reduction_factor: f64,
    pub contraction_factor: f64,
    pub damping_ratio: Option<f64>,
    #[serde(rename = "plant_h0_m_per_V")]
    pub plant_h0_m_per_v: f64,
    #[serde(rename = "model_h0_m_per_V")]
    pub model_h0_m_per_v: f64,
}

pub fn summarize(exp: &Experiment, records: &[IterationRecord]) -> RunSummary {
    let first = records.first().map_or(f64::NAN, |r| r.rms_m);
    let last = records.last().map_or(f64::NAN, |r| r.rms_m);
    RunSummary {
        iterations: records.len(),
        initial_rms_m: first,
        final_rms_m: last,
        reduction_factor: first / last,
        contraction_factor: exp.contraction,
        damping_ratio: IlcWeights::from(exp.config.weights).damping_ratio(exp.config.model_h0()),
        plant_h0_m_per_v: exp.plant.h0_m_per_v,
        model_h0_m_per_v: exp.config.model_h0(),
    }
}

/// Writes `run.json` and `convergence.csv`. `failure` is recorded in run.json
/// when the run stopped early.
pub fn write_summary_files(
    dir: &Path,
    exp: &Experiment,
    records: &[IterationRecord],
    failure: Option<&RunError>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("convergence.csv");
    let mut body = String::from("j,f_alpha_hz,rms_m,fit_residual_m\n");
    for r in records {
        body.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.j, r.f_alpha_hz, r.rms_m, r.fit_residual_m
        ));
    }
    let mut out = create(&path)?;
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(io_err(&path))?;

    let iterations: Vec<_> = records
        .iter()
        .map(|r| {
            json!({
                "j": r.j,
                "f_alpha_hz": r.f_alpha_hz,
                "n_samples": r.n_samples(),
                "rms_m": r.rms_m,
                "fit_residual_m": r.fit_residual_m,
                "sigma_min": r.certificate.sigma_min,
                "sigma_max": r.certificate.sigma_max,
                "condition_number": r.certificate.condition_number,
                "disturbance_scale": r.disturbance_scale,
                "theta_u": r.theta_u.theta.as_slice(),
                "theta_e": r.theta_e.theta.as_slice(),
                "theta_u_next": r.theta_u_next.theta.as_slice(),
            })
        })
        .collect();
    let mut doc = json!({
        "config": exp.config,
        "summary": summarize(exp, records),
        "iterations": iterations,
    });
    if let Some(f) = failure {
        doc["failure"] = json!({
            "stage": f.stage,
            "iteration": f.iteration,
            "message": f.source.to_string(),
        });
    }
    let path = dir.join("run.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("run log serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Writes the full result set of a run into `dir`.
pub fn export_run(dir: &Path, exp: &Experiment, records: &[IterationRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("nothing to export: no iterations recorded".into()));
    }
    for r in records {
        write_iteration_files(dir, exp, r)?;
    }
    write_summary_files(dir, exp, records, None)
}

/// Logged coefficient vectors of one iteration, read back from run.json.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LoggedIteration {
    pub j: usize,
    pub theta_u: Vec<f64>,
    pub theta_e: Vec<f64>,
    pub theta_u_next: Vec<f64>,
}

/// Reads the configuration and coefficient log of an exported run.
pub fn read_run_log(path: &Path) -> Result<(ExperimentConfig, Vec<LoggedIteration>)> {
    #[derive(Deserialize)]
    struct Log {
        config: ExperimentConfig,
        iterations: Vec<LoggedIteration>,
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let log: Log =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("malformed run log: {e}")))?;
    Ok((log.config, log.iterations))
}

/// Offline replay of the update law. Returns the index of the first iteration
/// whose logged θᵘ_{j+1} differs from Q θᵘ_j + L θᵉ_j in any bit, or whose
/// θᵘ_j differs from the previous θᵘ_{j+1}.
pub fn replay_mismatch(learning: &LearningMatrices, log: &[LoggedIteration]) -> Result<Option<usize>> {
    for (i, it) in log.iter().enumerate() {
        let tu = ParamVector::from_slice(&it.theta_u, Role::Input);
        let te = ParamVector::from_slice(&it.theta_e, Role::Error);
        let next = ilc_update(&tu, &te, learning)?;
        if next.theta.as_slice() != it.theta_u_next.as_slice() {
            return Ok(Some(it.j));
        }
        if i > 0 && log[i - 1].theta_u_next != it.theta_u {
            return Ok(Some(it.j));
        }
    }
    Ok(None)
}

/// Writes a matrix as plain comma-separated rows.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut body = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    fs::write(path, body).map_err(io_err(path))
}

/// A sampled error signal as read from `alpha_rad,e_m` CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledError {
    pub grid: SampleGrid,
    pub e_m: Vec<f64>,
}

/// Reads a CSV with at least the columns `alpha_rad` and `e_m`.
pub fn read_error_csv(path: &Path) -> Result<SampledError> {
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ia, ie) = (col("alpha_rad")?, col("e_m")?);
    let mut alphas = Vec::new();
    let mut e_m = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: unreadable number", line + 2)))
        };
        alphas.push(parse(ia)?);
        e_m.push(parse(ie)?);
    }
    Ok(SampledError {
        grid: SampleGrid::from_alphas(alphas)?,
        e_m,
    })
}

pub fn write_error_csv(path: &Path, err: &SampledError) -> Result<()> {
    let mut body = String::from("alpha_rad,e_m\n");
    for (a, e) in err.grid.alphas.iter().zip(&err.e_m) {
        body.push_str(&format!("{a:e},{e:e}\n"));
    }
    fs::write(path, body).map_err(io_err(path))
}

/// Two fits of the same error at different sample densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitComparison {
    /// RMS of the dense samples minus the dense fit [m].
    pub residual_dense_m: f64,
    /// RMS of the dense samples minus the sparse fit [m].
    pub residual_sparse_m: f64,
    /// RMS in α of the difference between both fits [m].
    pub difference_rms_m: f64,
}

impl FitComparison {
    /// Difference divided by the smaller residual.
    pub fn ratio(&self) -> f64 {
        self.difference_rms_m / self.residual_dense_m.min(self.residual_sparse_m)
    }
}

/// Fits `dense` and `sparse` separately and compares both fits against the
/// dense samples.
pub fn compare_fits(
    basis: &BasisSet,
    dense: &SampledError,
    sparse: &SampledError,
    min_sigma_ratio: f64,
    quad: QuadratureSpec,
) -> Result<FitComparison> {
    let fd = fit_error(&dense.e_m, &dense.grid, basis, min_sigma_ratio)?;
    let fs = fit_error(&sparse.e_m, &sparse.grid, basis, min_sigma_ratio)?;
    let residual_against = |theta: &ParamVector| {
        let t = theta.theta.as_slice();
        let ss: f64 = dense
            .grid
            .alphas
            .iter()
            .zip(&dense.e_m)
            .map(|(&a, &e)| (e - basis.combine(t, a)).powi(2))
            .sum();
        (ss / dense.e_m.len() as f64).sqrt()
    };
    let diff = ParamVector::new(&fd.theta.theta - &fs.theta.theta, Role::Error);
    Ok(FitComparison {
        residual_dense_m: residual_against(&fd.theta),
        residual_sparse_m: residual_against(&fs.theta),
        difference_rms_m: rms_alpha(&diff, basis, quad)?,
    })
}
