use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::updates::{
    update_alpha, update_gamma, update_noise, update_spatial_maps, update_subject_means,
    update_time_courses,
};
use super::{
    elbo, initialize, AlphaRate, ElboTerms, FitOptions, MeanCovariance, ModelKind, MONOTONE_TOL,
};
use crate::model::{Dataset, VariationalState};
use crate::numerics::{Matrix, SeededRng};
use crate::{Error, Result};

/// Variance share a component needs to count as effective in reports.
pub const EFFECTIVE_COMPONENT_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub seed: u64,
    pub final_elbo: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Outcome of the best restart.
///
/// In pFA mode `Q(α)` is frozen at its prior but its ELBO terms are still
/// included, so psFA and pFA bounds are not comparable with each other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub alpha_rate: AlphaRate,
    pub mean_covariance: MeanCovariance,
    /// ELBO of the initial state of the selected restart.
    pub initial_elbo: f64,
    pub elbo_trace: Vec<f64>,
    /// Iteration (1-based) at which each trace entry was evaluated.
    pub elbo_iterations: Vec<usize>,
    /// Breakdown at the final iteration.
    pub elbo_terms: ElboTerms,
    pub converged: bool,
    pub iterations_run: usize,
    pub restart_index: usize,
    pub seed: u64,
    pub effective_components: usize,
    /// Trace decreases larger than the monotonicity tolerance.
    pub monotone_violations: usize,
    pub restarts: Vec<RestartSummary>,
    pub wall_seconds: f64,
}

impl FitReport {
    pub fn final_elbo(&self) -> f64 {
        *self.elbo_trace.last().unwrap_or(&self.initial_elbo)
    }
}

/// Snapshot of a fit in progress; resuming from it reproduces the
/// uninterrupted run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub options: FitOptions,
    /// Restart currently running.
    pub restart: usize,
    /// Iterations completed in that restart.
    pub iteration: usize,
    pub initial_elbo: f64,
    pub trace: Vec<f64>,
    pub trace_iterations: Vec<usize>,
    pub violations: usize,
    pub state: VariationalState,
    pub last_terms: ElboTerms,
    /// Restarts finished (or failed) before this one.
    pub completed: Vec<RestartSummary>,
    pub best: Option<(VariationalState, FitReport)>,
    pub elapsed_seconds: f64,
}

#[derive(Default)]
pub struct FitControl<'a> {
    pub resume: Option<Checkpoint>,
    /// Emit a checkpoint every this many iterations within a restart.
    pub checkpoint_every: Option<usize>,
    /// Stop (returning a checkpoint) after this many iterations in this call.
    pub halt_after: Option<usize>,
    pub on_checkpoint: Option<&'a mut (dyn FnMut(&Checkpoint) -> Result<()> + Send)>,
}

#[derive(Debug)]
pub enum FitOutcome {
    Completed {
        state: Box<VariationalState>,
        report: FitReport,
    },
    Halted(Box<Checkpoint>),
}

/// Runs `opts.restarts` independent fits and returns the one with the
/// highest final ELBO.
pub fn fit(ds: &Dataset, opts: &FitOptions) -> Result<(VariationalState, FitReport)> {
    match fit_resumable(ds, opts, FitControl::default())? {
        FitOutcome::Completed { state, report } => Ok((*state, report)),
        FitOutcome::Halted(_) => unreachable!("no halt requested"),
    }
}

/// [`fit`] with checkpointing, early halting and resumption.
pub fn fit_resumable(
    ds: &Dataset,
    opts: &FitOptions,
    control: FitControl<'_>,
) -> Result<FitOutcome> {
    opts.validate()?;
    if let Some(cp) = &control.resume {
        check_resume_compatible(cp, opts, ds)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| Driver::new(ds, opts, control).run())
}

fn check_resume_compatible(cp: &Checkpoint, opts: &FitOptions, ds: &Dataset) -> Result<()> {
    let normalize = |o: &FitOptions| FitOptions {
        threads: 0,
        ..o.clone()
    };
    if normalize(&cp.options) != normalize(opts) {
        return Err(Error::Config(
            "checkpoint was written with different fit options".into(),
        ));
    }
    cp.state.validate(ds)
}

/// One restart in progress.
struct Run {
    index: usize,
    seed: u64,
    iteration: usize,
    initial_elbo: f64,
    trace: Vec<f64>,
    trace_iterations: Vec<usize>,
    violations: usize,
    converged: bool,
    state: VariationalState,
    last_terms: ElboTerms,
}

struct Driver<'a, 'c> {
    ds: &'a Dataset,
    opts: &'a FitOptions,
    control: FitControl<'c>,
    completed: Vec<RestartSummary>,
    best: Option<(VariationalState, FitReport)>,
    started: Instant,
    elapsed_before: f64,
    steps: usize,
}

impl<'a, 'c> Driver<'a, 'c> {
    fn new(ds: &'a Dataset, opts: &'a FitOptions, mut control: FitControl<'c>) -> Self {
        let resume = control.resume.take();
        let mut driver = Driver {
            ds,
            opts,
            control,
            completed: Vec::new(),
            best: None,
            started: Instant::now(),
            elapsed_before: 0.0,
            steps: 0,
        };
        if let Some(cp) = resume {
            driver.completed = cp.completed.clone();
            driver.best = cp.best.clone();
            driver.elapsed_before = cp.elapsed_seconds;
            driver.control.resume = Some(cp);
        }
        driver
    }

    fn elapsed(&self) -> f64 {
        self.elapsed_before + self.started.elapsed().as_secs_f64()
    }

    fn run(mut self) -> Result<FitOutcome> {
        let first = self.control.resume.as_ref().map_or(0, |cp| cp.restart);
        for r in first..self.opts.restarts {
            let run = match self.control.resume.take() {
                Some(cp) => Ok(Run {
                    index: cp.restart,
                    seed: self.opts.seed.wrapping_add(cp.restart as u64),
                    iteration: cp.iteration,
                    initial_elbo: cp.initial_elbo,
                    trace: cp.trace,
                    trace_iterations: cp.trace_iterations,
                    violations: cp.violations,
                    converged: false,
                    state: cp.state,
                    last_terms: cp.last_terms,
                }),
                None => self.start(r),
            };
            let mut run = match run {
                Ok(run) => run,
                Err(e) => {
                    self.record_failure(r, 0, e);
                    continue;
                }
            };
            let mut failed = false;
            loop {
                if run.converged || run.iteration >= self.opts.max_iters {
                    break;
                }
                if self.control.halt_after.is_some_and(|h| self.steps >= h) {
                    let cp = self.checkpoint(&run);
                    if let Some(cb) = self.control.on_checkpoint.as_mut() {
                        cb(&cp)?;
                    }
                    return Ok(FitOutcome::Halted(Box::new(cp)));
                }
                if let Err(e) = self.step(&mut run) {
                    warn!("restart {r} failed at iteration {}: {e}", run.iteration);
                    self.record_failure(r, run.iteration, e);
                    failed = true;
                    break;
                }
                self.steps += 1;
                let finished = run.converged || run.iteration >= self.opts.max_iters;
                if let (false, Some(every)) = (finished, self.control.checkpoint_every) {
                    if every > 0 && run.iteration % every == 0 {
                        let cp = self.checkpoint(&run);
                        if let Some(cb) = self.control.on_checkpoint.as_mut() {
                            cb(&cp)?;
                        }
                    }
                }
            }
            if !failed {
                self.finish(run);
            }
        }

        let restarts = self.completed.clone();
        let wall = self.elapsed();
        match self.best {
            Some((state, mut report)) => {
                report.restarts = restarts;
                report.wall_seconds = wall;
                Ok(FitOutcome::Completed {
                    state: Box::new(state),
                    report,
                })
            }
            None => Err(Error::AllRestartsFailed(self.opts.restarts)),
        }
    }

    fn start(&self, r: usize) -> Result<Run> {
        let seed = self.opts.seed.wrapping_add(r as u64);
        let mut rng = SeededRng::new(seed);
        let state = initialize(self.ds, self.opts, &mut rng)?;
        let terms = elbo(&state, self.ds, &self.opts.hyper)?;
        debug!("restart {r} (seed {seed}): initial ELBO {}", terms.total());
        Ok(Run {
            index: r,
            seed,
            iteration: 0,
            initial_elbo: terms.total(),
            trace: Vec::new(),
            trace_iterations: Vec::new(),
            violations: 0,
            converged: false,
            state,
            last_terms: terms,
        })
    }

    fn step(&self, run: &mut Run) -> Result<()> {
        let (ds, opts) = (self.ds, self.opts);
        let state = &mut run.state;
        update_spatial_maps(state, ds)?;
        update_time_courses(state, ds)?;
        update_subject_means(state, ds, &opts.hyper, opts.mean_covariance)?;
        if opts.model == ModelKind::Psfa {
            update_alpha(state, &opts.hyper, opts.alpha_rate);
        }
        update_gamma(state, &opts.hyper);
        update_noise(state, ds, &opts.hyper)?;
        run.iteration += 1;

        if run.iteration % opts.elbo_every != 0 && run.iteration != opts.max_iters {
            return Ok(());
        }
        let terms = elbo(state, ds, &opts.hyper)?;
        let current = terms.total();
        let previous = run.trace.last().copied().unwrap_or(run.initial_elbo);
        if current < previous - MONOTONE_TOL * previous.abs() {
            run.violations += 1;
            if opts.check_monotone {
                return Err(Error::ElboDecrease {
                    iteration: run.iteration,
                    previous,
                    current,
                });
            }
            warn!(
                "ELBO decreased at iteration {}: {previous} -> {current}",
                run.iteration
            );
        }
        run.trace.push(current);
        run.trace_iterations.push(run.iteration);
        run.last_terms = terms;
        if (current - previous).abs() <= opts.rel_tol * previous.abs() {
            run.converged = true;
        }
        Ok(())
    }

    fn checkpoint(&self, run: &Run) -> Checkpoint {
        Checkpoint {
            options: self.opts.clone(),
            restart: run.index,
            iteration: run.iteration,
            initial_elbo: run.initial_elbo,
            trace: run.trace.clone(),
            trace_iterations: run.trace_iterations.clone(),
            violations: run.violations,
            state: run.state.clone(),
            last_terms: run.last_terms.clone(),
            completed: self.completed.clone(),
            best: self.best.clone(),
            elapsed_seconds: self.elapsed(),
        }
    }

    fn record_failure(&mut self, r: usize, iterations: usize, e: Error) {
        self.completed.push(RestartSummary {
            index: r,
            seed: self.opts.seed.wrapping_add(r as u64),
            final_elbo: None,
            iterations,
            converged: false,
            error: Some(e.to_string()),
        });
    }

    fn finish(&mut self, run: Run) {
        let final_elbo = *run.trace.last().unwrap_or(&run.initial_elbo);
        info!(
            "restart {} finished after {} iterations: ELBO {final_elbo} (converged: {})",
            run.index, run.iteration, run.converged
        );
        self.completed.push(RestartSummary {
            index: run.index,
            seed: run.seed,
            final_elbo: Some(final_elbo),
            iterations: run.iteration,
            converged: run.converged,
            error: None,
        });
        let better = self
            .best
            .as_ref()
            .is_none_or(|(_, b)| final_elbo > b.final_elbo());
        if !better {
            return;
        }
        let report = FitReport {
            model: self.opts.model,
            alpha_rate: self.opts.alpha_rate,
            mean_covariance: self.opts.mean_covariance,
            initial_elbo: run.initial_elbo,
            elbo_trace: run.trace,
            elbo_iterations: run.trace_iterations,
            elbo_terms: run.last_terms,
            converged: run.converged,
            iterations_run: run.iteration,
            restart_index: run.index,
            seed: run.seed,
            effective_components: effective_components(&run.state, EFFECTIVE_COMPONENT_THRESHOLD),
            monotone_violations: run.violations,
            restarts: Vec::new(),
            wall_seconds: 0.0,
        };
        self.best = Some((run.state, report));
    }
}

/// Posterior-mean reconstruction `⟨A⟩⟨S^(b)⟩ + ⟨μ^(b)⟩1ᵀ`, `V × T^(b)`.
pub fn reconstruct(state: &VariationalState, b: usize) -> Matrix {
    let mut out = state.mu_a.matmul(&state.mu_s[b]);
    if state.means.is_some() {
        for t in 0..out.cols() {
            for (v, x) in out.col_mut(t).iter_mut().enumerate() {
                *x += state.mean_of_mu(v, b);
            }
        }
    }
    out
}

/// Number of components whose share of the total signal power
/// `Σ_v⟨a_vd²⟩ · Σ_b tr⟨s_d s_dᵀ⟩` exceeds `threshold`.
pub fn effective_components(state: &VariationalState, threshold: f64) -> usize {
    let power: Vec<f64> = (0..state.latent_dim())
        .map(|d| {
            let maps: f64 = (0..state.voxels()).map(|v| state.second_moment_a(v, d)).sum();
            let courses: f64 = state
                .mu_s
                .iter()
                .zip(&state.sigma_s)
                .map(|(mu, sigma)| {
                    (0..mu.cols()).map(|t| mu[(d, t)].powi(2)).sum::<f64>()
                        + mu.cols() as f64 * sigma[(d, d)]
                })
                .sum();
            maps * courses
        })
        .collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return 0;
    }
    power.iter().filter(|&&p| p / total > threshold).count()
}
