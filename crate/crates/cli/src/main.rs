//! `alpha-ilc`: run commutation-angle ILC experiments against the simulated
//! piezo-stepper and inspect their pieces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alpha_ilc::basis::{ParamVector, Role};
use alpha_ilc::commutation::SampleGrid;
use alpha_ilc::harness::{
    compare_fits, read_error_csv, read_run_log, write_error_csv, write_iteration_files, write_matrix_csv,
    write_summary_files, Experiment, ExperimentConfig, SampledError,
};
use alpha_ilc::ilc::{fit_error, rms_alpha, IlcWeights};
use alpha_ilc::plant::make_disturbance;
use alpha_ilc::waveform::{split_compensating_fn, write_waveforms_csv};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(
    name = "alpha-ilc",
    version,
    about = "Commutation-angle ILC for a simulated piezo-stepper"
)]
struct Cli {
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the configuration's output_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides the number of quadrature panels.
    #[arg(long, global = true)]
    quad_panels: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a full experiment and export its results.
    Run { config: PathBuf },
    /// Fit a sampled error (columns alpha_rad, e_m) with the configured basis.
    Fit {
        error_csv: PathBuf,
        config: PathBuf,
        /// A sparser sampling of the same error to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Write Q and L and print the contraction factor.
    Matrices { config: PathBuf },
    /// Write the standard waveforms, or the enhanced ones of a finished run.
    Waveforms {
        config: PathBuf,
        /// Directory of a finished run; its last input is split over the shears.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Run several experiments in parallel, each into its own directory.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Write a synthetic sampled error from the configured disturbance.
    SynthError {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma_m: f64,
        /// Also write every k-th sample so that this many remain.
        #[arg(long)]
        sparse: Option<usize>,
    },
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| anyhow!("[config] {e}"))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.quad_panels {
        cfg.quadrature.panels = p;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| {
            let stem = config_path
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned());
            Path::new("out").join(stem)
        })
}

fn prepare(cfg: &ExperimentConfig) -> Result<Experiment> {
    Experiment::prepare(cfg).map_err(|e| anyhow!("{e}"))
}

/// Runs one experiment into `dir`, persisting every iteration as it finishes.
fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<(usize, f64, f64)> {
    let exp = prepare(cfg)?;
    match exp.run_with(|rec| write_iteration_files(dir, &exp, rec)) {
        Ok(recs) => {
            write_summary_files(dir, &exp, &recs, None).map_err(|e| anyhow!("[export] {e}"))?;
            Ok((recs.len(), recs[0].rms_m, recs[recs.len() - 1].rms_m))
        }
        Err(err) => {
            write_summary_files(dir, &exp, &err.partial, Some(&err)).map_err(|e| anyhow!("[export] {e}"))?;
            Err(anyhow!(
                "{err} ({} iterations kept in {})",
                err.partial.len(),
                dir.display()
            ))
        }
    }
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(config, cli)?;
    let dir = out_dir(cli, &cfg, config);
    let (n, first, last) = run_into(&cfg, &dir)?;
    println!("iterations: {n}");
    println!("rms_first_m: {first:e}");
    println!("rms_last_m: {last:e}");
    println!("reduction: {:.3}", first / last);
    println!("output: {}", dir.display());
    Ok(())
}

fn cmd_fit(cli: &Cli, error_csv: &Path, config: &Path, compare: Option<&Path>) -> Result<()> {
    let cfg = load_config(config, cli)?;
    let basis = cfg.basis.build().map_err(|e| anyhow!("[config] {e}"))?;
    let dense = read_error_csv(error_csv).map_err(|e| anyhow!("[input] {e}"))?;
    let fit =
        fit_error(&dense.e_m, &dense.grid, &basis, cfg.min_sigma_ratio).map_err(|e| anyhow!("[fit] {e}"))?;
    let rms = rms_alpha(&fit.theta, &basis, cfg.quadrature).map_err(|e| anyhow!("[fit] {e}"))?;
    println!("samples: {}", dense.grid.len());
    println!("fit_rms_m: {rms:e}");
    println!("residual_rms_m: {:e}", fit.residual_rms_m);
    println!("sigma_ratio: {:e}", fit.certificate.ratio());
    println!("theta_e: {}", serde_json::to_string(fit.theta.theta.as_slice())?);

    if let Some(other) = compare {
        let sparse = read_error_csv(other).map_err(|e| anyhow!("[input] {e}"))?;
        let cmp = compare_fits(&basis, &dense, &sparse, cfg.min_sigma_ratio, cfg.quadrature)
            .map_err(|e| anyhow!("[fit] {e}"))?;
        println!("compare_samples: {}", sparse.grid.len());
        println!("residual_dense_fit_m: {:e}", cmp.residual_dense_m);
        println!("residual_sparse_fit_m: {:e}", cmp.residual_sparse_m);
        println!("fit_difference_rms_m: {:e}", cmp.difference_rms_m);
        println!("difference_over_residual: {:.4}", cmp.ratio());
    }
    Ok(())
}

fn cmd_matrices(cli: &Cli, config: &Path) -> Result<()> {
    let mut cfg = load_config(config, cli)?;
    // the matrices are wanted even when the run itself would be refused
    cfg.allow_nonconvergent = true;
    let exp = prepare(&cfg)?;
    let dir = out_dir(cli, &cfg, config);
    std::fs::create_dir_all(&dir).with_context(|| format!("[export] cannot create {}", dir.display()))?;
    write_matrix_csv(&dir.join("Q.csv"), &exp.learning.q).map_err(|e| anyhow!("[export] {e}"))?;
    write_matrix_csv(&dir.join("L.csv"), &exp.learning.l).map_err(|e| anyhow!("[export] {e}"))?;
    println!(
        "contraction_factor: {:.6} ({:e})",
        exp.contraction, exp.contraction
    );
    if let Some(r) = IlcWeights::from(cfg.weights).damping_ratio(cfg.model_h0()) {
        println!("damping_ratio: {r:.6}");
    }
    println!("monotonic: {}", exp.contraction < 1.0);
    println!("output: {}", dir.display());
    Ok(())
}

fn cmd_waveforms(cli: &Cli, config: &Path, run: Option<&Path>) -> Result<()> {
    let cfg = load_config(config, cli)?;
    let mut relaxed = cfg.clone();
    relaxed.allow_nonconvergent = true;
    let exp = prepare(&relaxed)?;
    let dir = out_dir(cli, &cfg, config);
    std::fs::create_dir_all(&dir).with_context(|| format!("[export] cannot create {}", dir.display()))?;

    let (name, shears) = match run {
        None => ("standard_waveforms.csv", exp.standard.shears.clone()),
        Some(run_dir) => {
            let (_, log) = read_run_log(&run_dir.join("run.json")).map_err(|e| anyhow!("[input] {e}"))?;
            let last = log
                .last()
                .ok_or_else(|| anyhow!("[input] run log has no iterations"))?;
            let theta = ParamVector::from_slice(&last.theta_u_next, Role::Input);
            theta
                .check_len(exp.basis.len())
                .map_err(|e| anyhow!("[input] {e}"))?;
            let t = theta.theta.as_slice();
            let split = split_compensating_fn(|a| exp.basis.combine(t, a), &exp.standard.shears)
                .map_err(|e| anyhow!("[split] {e}"))?;
            ("enhanced_waveforms.csv", split)
        }
    };
    let path = dir.join(name);
    let file =
        std::fs::File::create(&path).with_context(|| format!("[export] cannot write {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    write_waveforms_csv(&mut out, &exp.standard.clamp1, &exp.standard.clamp2, &shears)
        .and_then(|_| std::io::Write::flush(&mut out))
        .with_context(|| format!("[export] cannot write {}", path.display()))?;
    println!("output: {}", path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, configs: &[PathBuf]) -> Result<()> {
    let jobs: Vec<(PathBuf, ExperimentConfig, PathBuf)> = configs
        .iter()
        .map(|p| {
            let cfg = load_config(p, cli)?;
            let dir = match &cli.out_dir {
                Some(root) => root.join(p.file_stem().unwrap_or_default()),
                None => out_dir(cli, &cfg, p),
            };
            Ok((p.clone(), cfg, dir))
        })
        .collect::<Result<_>>()?;
    let mut dirs: Vec<&PathBuf> = jobs.iter().map(|j| &j.2).collect();
    dirs.sort();
    dirs.dedup();
    if dirs.len() != jobs.len() {
        bail!("[config] sweep members must write to distinct output directories");
    }

    let results: Vec<_> = jobs
        .par_iter()
        .map(|(p, cfg, dir)| (p, dir, run_into(cfg, dir)))
        .collect();
    let mut failed = 0;
    for (p, dir, r) in results {
        match r {
            Ok((n, first, last)) => println!(
                "{}: ok, {n} iterations, reduction {:.3}, output {}",
                p.display(),
                first / last,
                dir.display()
            ),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", p.display());
            }
        }
    }
    if failed > 0 {
        bail!("[sweep] {failed} of {} experiments failed", jobs.len());
    }
    Ok(())
}

fn cmd_synth_error(
    cli: &Cli,
    config: &Path,
    samples: usize,
    sigma: f64,
    sparse: Option<usize>,
) -> Result<()> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let cfg = load_config(config, cli)?;
    let basis = cfg.basis.build().map_err(|e| anyhow!("[config] {e}"))?;
    let d = make_disturbance(&cfg.plant.disturbance, &basis).map_err(|e| anyhow!("[config] {e}"))?;
    let noise = Normal::new(0.0, sigma).map_err(|e| anyhow!("[config] noise: {e}"))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    if samples == 0 {
        bail!("[config] samples must be ≥ 1");
    }
    let grid = SampleGrid::equidistant(samples);
    let e_m: Vec<f64> = grid
        .alphas
        .iter()
        .map(|&a| -d.eval(a) + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 })
        .collect();
    let dir = out_dir(cli, &cfg, config);
    std::fs::create_dir_all(&dir).with_context(|| format!("[export] cannot create {}", dir.display()))?;
    let dense = SampledError { grid, e_m };
    let path = dir.join(format!("error_{samples}.csv"));
    write_error_csv(&path, &dense).map_err(|e| anyhow!("[export] {e}"))?;
    println!("output: {}", path.display());

    if let Some(k) = sparse {
        if k == 0 || !samples.is_multiple_of(k) {
            bail!("[config] --sparse must divide --samples");
        }
        let step = samples / k;
        let alphas = dense.grid.alphas.iter().step_by(step).copied().collect();
        let sub = SampledError {
            grid: SampleGrid::from_alphas(alphas).map_err(|e| anyhow!("[config] {e}"))?,
            e_m: dense.e_m.iter().step_by(step).copied().collect(),
        };
        let path = dir.join(format!("error_{k}.csv"));
        write_error_csv(&path, &sub).map_err(|e| anyhow!("[export] {e}"))?;
        println!("output: {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Fit {
            error_csv,
            config,
            compare,
        } => cmd_fit(cli, error_csv, config, compare.as_deref()),
        Command::Matrices { config } => cmd_matrices(cli, config),
        Command::Waveforms { config, run } => cmd_waveforms(cli, config, run.as_deref()),
        Command::Sweep { configs } => cmd_sweep(cli, configs),
        Command::SynthError {
            config,
            samples,
            noise_sigma_m,
            sparse,
        } => cmd_synth_error(cli, config, *samples, *noise_sigma_m, *sparse),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
