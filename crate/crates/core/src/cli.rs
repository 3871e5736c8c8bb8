//! The `psfa` command line: `generate`, `fit`, `eval` and `rerun`.
//!
//! Each subcommand's flags are turned into the matching [`RunConfig`], which
//! is validated (including every path) before any computation starts and
//! echoed next to the outputs. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::baselines::group_pca;
use crate::engine::{fit_resumable, AlphaRate, FitControl, FitOutcome, MeanCovariance};
use crate::io::report::{
    config_from_report, write_json, EvalReportDocument, FitReportDocument, GenerateReport,
    NoiseRecovery, PcaSummary, AMARI_DEFINITION,
};
use crate::io::{
    read_checkpoint, read_dataset, read_matrix, write_checkpoint, write_dataset, write_matrix,
    EvalConfig, FitConfig, FitModel, GenerateConfig, RunConfig,
};
use crate::metrics::{compare_maps, empirical_kurtosis, mean_log_precision_map, pearson, spearman};
use crate::model::generate_synthetic;
use crate::numerics::{Matrix, SeededRng};
use crate::{Error, Result};

/// Name of the checkpoint file inside a fit's output directory.
pub const CHECKPOINT_FILE: &str = "checkpoint.psfc";

#[derive(Debug, Parser)]
#[command(name = "psfa", version, about = "Group-level probabilistic sparse factor analysis")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic benchmark dataset and its ground truth.
    Generate(GenerateArgs),
    /// Fit psFA, pFA or group PCA to a dataset.
    Fit(FitArgs),
    /// Compare estimated maps with reference maps.
    Eval(EvalArgs),
    /// Replay a config file or the config echo of a report.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub voxels: usize,
    #[arg(long, default_value_t = 25)]
    pub timepoints: usize,
    #[arg(long, default_value_t = 3)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Probability that a map entry is zero.
    #[arg(long, default_value_t = 0.5)]
    pub sparsity: f64,
    /// Mean of the per-voxel noise variance distribution.
    #[arg(long, default_value_t = 0.009)]
    pub noise_mean: f64,
    /// Standard deviation of the per-voxel noise variance distribution.
    #[arg(long, default_value_t = 0.002)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "psfa")]
    pub model: FitModel,
    #[arg(long, default_value_t = 6)]
    pub components: usize,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative ELBO change that counts as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model per-voxel subject means.
    #[arg(long, overrides_with = "no_mean")]
    pub mean: bool,
    #[arg(long, overrides_with = "mean")]
    pub no_mean: bool,
    /// Dataset file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write a checkpoint every N iterations.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written with the same options.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after N iterations in this invocation, leaving a checkpoint.
    #[arg(long)]
    pub halt_after: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Evaluate the ELBO every N iterations.
    #[arg(long)]
    pub elbo_every: Option<usize>,
    /// Fail a restart whose ELBO decreases.
    #[arg(long)]
    pub check_monotone: bool,
    #[arg(long, value_enum)]
    pub alpha_rate: Option<AlphaRateArg>,
    #[arg(long, value_enum)]
    pub mean_covariance: Option<AlphaRateArg>,
}

/// Formula variant selector shared by `--alpha-rate` and `--mean-covariance`.
#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AlphaRateArg {
    Corrected,
    Verbatim,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated maps (`V × D_e`, binary or CSV).
    #[arg(long)]
    pub est: PathBuf,
    /// Reference maps (`V × D_r`, binary or CSV).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// True `V × B` noise variances.
    #[arg(long, requires = "est_noise")]
    pub truth_noise: Option<PathBuf>,
    /// Estimated `V × B` noise variances.
    #[arg(long, requires = "truth_noise")]
    pub est_noise: Option<PathBuf>,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// A TOML run config or a JSON report containing a config echo.
    pub config: PathBuf,
}

impl From<GenerateArgs> for GenerateConfig {
    fn from(a: GenerateArgs) -> Self {
        GenerateConfig {
            voxels: a.voxels,
            timepoints: a.timepoints,
            subjects: a.subjects,
            components: a.components,
            sparsity: a.sparsity,
            noise_mean: a.noise_mean,
            noise_sd: a.noise_sd,
            seed: a.seed,
            out: a.out,
        }
    }
}

impl FitArgs {
    fn into_config(self) -> FitConfig {
        if self.model == FitModel::Pca {
            let ignored = [
                ("--max-iters", self.max_iters.is_some()),
                ("--tol", self.tol.is_some()),
                ("--restarts", self.restarts.is_some()),
                ("--seed", self.seed.is_some()),
                ("--mean", self.mean || self.no_mean),
                ("--checkpoint-every", self.checkpoint_every.is_some()),
                ("--resume", self.resume.is_some()),
                ("--halt-after", self.halt_after.is_some()),
                ("--elbo-every", self.elbo_every.is_some()),
                ("--check-monotone", self.check_monotone),
                ("--alpha-rate", self.alpha_rate.is_some()),
                ("--mean-covariance", self.mean_covariance.is_some()),
            ];
            for (flag, given) in ignored {
                if given {
                    warn!("{flag} has no effect with --model pca and is ignored");
                }
            }
            return FitConfig {
                model: FitModel::Pca,
                components: self.components,
                input: self.input,
                out: self.out,
                threads: self.threads,
                ..FitConfig::default()
            };
        }
        let d = FitConfig::default();
        let variant = |a: Option<AlphaRateArg>| matches!(a, Some(AlphaRateArg::Verbatim));
        FitConfig {
            model: self.model,
            components: self.components,
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed: self.seed.unwrap_or(d.seed),
            mean: self.mean,
            input: self.input,
            out: self.out,
            checkpoint_every: self.checkpoint_every,
            resume: self.resume,
            halt_after: self.halt_after,
            threads: self.threads,
            elbo_every: self.elbo_every.unwrap_or(d.elbo_every),
            check_monotone: self.check_monotone,
            alpha_rate: if variant(self.alpha_rate) {
                AlphaRate::Verbatim
            } else {
                AlphaRate::Corrected
            },
            mean_covariance: if variant(self.mean_covariance) {
                MeanCovariance::Verbatim
            } else {
                MeanCovariance::Corrected
            },
            ..d
        }
    }
}

impl From<EvalArgs> for EvalConfig {
    fn from(a: EvalArgs) -> Self {
        EvalConfig {
            est: a.est,
            reference: a.reference,
            truth_noise: a.truth_noise,
            est_noise: a.est_noise,
            out: a.out,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    let cfg = match command {
        Command::Generate(a) => RunConfig::Generate(a.into()),
        Command::Fit(a) => RunConfig::Fit(a.into_config()),
        Command::Eval(a) => RunConfig::Eval(a.into()),
        Command::Rerun(a) => load_config(&a.config)?,
    };
    execute(&cfg)
}

/// Reads a TOML config, or the echo inside a JSON report.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        config_from_report(&text)
    } else {
        RunConfig::from_toml(&text)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    match cfg {
        RunConfig::Generate(c) => run_generate(c),
        RunConfig::Fit(c) => run_fit(c),
        RunConfig::Eval(c) => run_eval(c),
    }
}

fn save(m: &Matrix, dir: &Path, name: &str, files: &mut Vec<String>) -> Result<()> {
    write_matrix(m, &dir.join(name))?;
    files.push(name.to_string());
    Ok(())
}

fn run_generate(c: &GenerateConfig) -> Result<()> {
    let (ds, truth) = generate_synthetic(&mut SeededRng::new(c.seed), &c.synthetic())?;
    let mut files = Vec::new();
    write_dataset(&ds, &c.out.join("data.psfa"))?;
    files.push("data.psfa".to_string());
    save(&truth.a_true, &c.out, "a_true.psfm", &mut files)?;
    save(&truth.mask, &c.out, "mask.psfm", &mut files)?;
    save(&truth.noise_variance, &c.out, "noise_variance.psfm", &mut files)?;
    for (b, s) in truth.s_true.iter().enumerate() {
        save(s, &c.out, &format!("s_true_b{b}.psfm"), &mut files)?;
    }
    let toml = RunConfig::Generate(c.clone()).to_toml();
    std::fs::write(c.out.join("config.toml"), &toml)?;
    files.push("config.toml".to_string());
    let report = GenerateReport {
        command: "generate".into(),
        config: c.clone(),
        config_toml: toml,
        seed: c.seed,
        noise_model: "per-voxel, per-subject noise variance ~ Normal(noise_mean, noise_sd^2), \
                      redrawn while at or below 1e-8"
            .into(),
        files,
    };
    write_json(&report, &c.out.join("generate.json"))?;
    info!("wrote synthetic dataset to {}", c.out.display());
    Ok(())
}

fn run_fit(c: &FitConfig) -> Result<()> {
    let started = Instant::now();
    let ds = read_dataset(&c.input)?;
    let out = &c.out;
    let mut files = Vec::new();
    let echo = RunConfig::Fit(c.echo()).to_toml();
    let threads = if c.threads == 0 {
        rayon::current_num_threads()
    } else {
        c.threads
    };

    let Some(opts) = c.options() else {
        let pca = group_pca(&ds, c.components)?;
        save(&pca.spatial_maps, out, "a_mean.psfm", &mut files)?;
        for (b, s) in pca.timecourses.iter().enumerate() {
            save(s, out, &format!("s_mean_b{b}.psfm"), &mut files)?;
        }
        std::fs::write(out.join("config.toml"), &echo)?;
        files.push("config.toml".into());
        let doc = FitReportDocument {
            command: "fit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: c.echo(),
            config_toml: echo,
            seeds: vec![],
            threads,
            deterministic_reduction: true,
            fit: None,
            pca: Some(PcaSummary {
                singular_values: pca.singular_values,
                explained_variance_ratio: pca.explained_variance_ratio,
            }),
            wall_seconds: started.elapsed().as_secs_f64(),
            files,
        };
        return write_json(&doc, &out.join("report.json"));
    };

    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let resume = c.resume.as_deref().map(read_checkpoint).transpose()?;
    let mut on_checkpoint = |cp: &crate::engine::Checkpoint| {
        info!(
            "checkpoint at restart {}, iteration {}",
            cp.restart, cp.iteration
        );
        write_checkpoint(cp, &checkpoint_path)
    };
    let control = FitControl {
        resume,
        checkpoint_every: c.checkpoint_every,
        halt_after: c.halt_after,
        on_checkpoint: Some(&mut on_checkpoint),
    };
    let (state, report) = match fit_resumable(&ds, &opts, control)? {
        FitOutcome::Halted(cp) => {
            eprintln!(
                "halted at restart {}, iteration {}; resume with --resume {}",
                cp.restart,
                cp.iteration,
                checkpoint_path.display()
            );
            return Ok(());
        }
        FitOutcome::Completed { state, report } => (*state, report),
    };
    for r in report.restarts.iter().filter(|r| r.error.is_some()) {
        warn!(
            "restart {} failed: {}",
            r.index,
            r.error.as_deref().unwrap_or_default()
        );
    }

    save(&state.mu_a, out, "a_mean.psfm", &mut files)?;
    for (b, s) in state.mu_s.iter().enumerate() {
        save(s, out, &format!("s_mean_b{b}.psfm"), &mut files)?;
    }
    let tau_shape = Matrix::from_col_major(state.n_subjects(), 1, state.tau_shape.clone())?;
    save(&tau_shape, out, "tau_shape.psfm", &mut files)?;
    save(&state.tau_rate, out, "tau_rate.psfm", &mut files)?;
    save(&state.noise_variance(), out, "noise_variance.psfm", &mut files)?;
    let mlp = mean_log_precision_map(&state);
    let mlp = Matrix::from_col_major(mlp.len(), 1, mlp)?;
    save(&mlp, out, "mean_log_precision.psfm", &mut files)?;
    if let Some(means) = &state.means {
        save(&means.mean, out, "mu_mean.psfm", &mut files)?;
    }
    std::fs::write(out.join("config.toml"), &echo)?;
    files.push("config.toml".into());

    info!(
        "best restart {} (seed {}): ELBO {} after {} iterations, {} effective components",
        report.restart_index,
        report.seed,
        report.final_elbo(),
        report.iterations_run,
        report.effective_components
    );
    let doc = FitReportDocument {
        command: "fit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: c.echo(),
        config_toml: echo,
        seeds: (0..opts.restarts as u64).map(|i| opts.seed.wrapping_add(i)).collect(),
        threads,
        deterministic_reduction: true,
        wall_seconds: report.wall_seconds,
        fit: Some(report),
        pca: None,
        files,
    };
    write_json(&doc, &out.join("report.json"))
}

fn run_eval(c: &EvalConfig) -> Result<()> {
    let est = read_matrix(&c.est)?;
    let reference = read_matrix(&c.reference)?;
    let cmp = compare_maps(&est, &reference)?;
    let aligned = cmp.matching.aligned(&est);
    let kurtosis = (0..aligned.cols())
        .map(|k| empirical_kurtosis(aligned.col(k)))
        .collect::<Result<Vec<_>>>()?;

    let noise_recovery = match (&c.truth_noise, &c.est_noise) {
        (Some(t), Some(e)) => {
            let truth = read_matrix(t)?;
            let estimate = read_matrix(e)?;
            if truth.shape() != estimate.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "true noise is {}x{}, estimated noise is {}x{}",
                    truth.rows(),
                    truth.cols(),
                    estimate.rows(),
                    estimate.cols()
                )));
            }
            Some(NoiseRecovery {
                pearson: pearson(truth.as_slice(), estimate.as_slice()),
                spearman: spearman(truth.as_slice(), estimate.as_slice()),
            })
        }
        _ => None,
    };

    println!(
        "avg |corr| {:.4}  Amari {:.4}",
        cmp.avg_abs_correlation, cmp.amari_index
    );
    let doc = EvalReportDocument {
        command: "eval".into(),
        config: c.clone(),
        config_toml: RunConfig::Eval(c.clone()).to_toml(),
        est_shape: est.shape(),
        ref_shape: reference.shape(),
        avg_abs_correlation: cmp.avg_abs_correlation,
        amari_index: cmp.amari_index,
        matching: cmp.matching,
        amari_definition: AMARI_DEFINITION.into(),
        kurtosis,
        noise_recovery,
    };
    write_json(&doc, &c.out)
}
