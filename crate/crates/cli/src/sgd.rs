//! The `sgd` command: paired fixed/varying batch runs on a random quadratic.

use serde::{Deserialize, Serialize};
use swarm_core::sgd::{
    averaged_gradient_variance, bound_ensemble, run_sgd, write_loss_csv, BatchSchedule, BoundCheck, LrSchedule, QuadraticProblem,
};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub dim: usize,
    pub mu: f64,
    pub l: f64,
    /// Per-coordinate gradient noise variance of a single sample.
    pub sigma0_sq: f64,
    /// Target batch size.
    pub m: usize,
    /// Batch sizes of the varying run; fixed `m` in the paired run.
    pub varying: BatchSchedule,
    /// Distance of the starting point from the optimum.
    pub r: f64,
    pub steps: usize,
    pub seeds: usize,
    /// Defaults to `1 / (2L)`.
    pub lr: Option<LrSchedule>,
    /// Evaluate gradients one step behind.
    pub staleness: usize,
    pub problem_seed: u64,
    pub variance_trials: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            dim: 20,
            mu: 0.1,
            l: 1.0,
            sigma0_sq: 1.0,
            m: 16,
            varying: BatchSchedule::PoissonExtra { m: 16, extra_mean: 2.0 },
            r: 10.0,
            steps: 500,
            seeds: 50,
            lr: None,
            staleness: 0,
            problem_seed: 0,
            variance_trials: 5_000,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SgdReport {
    pub config: SgdConfig,
    pub initial_suboptimality: f64,
    /// Mean over seeds and steps of the absolute loss difference between the paired runs.
    pub mean_gap: f64,
    pub gap_fraction: f64,
    pub gap_within_5_percent: bool,
    pub final_loss_fixed: f64,
    pub final_loss_varying: f64,
    /// Largest per-coordinate variance of the averaged gradient noise over the realized batch sizes.
    pub max_noise_variance: f64,
    pub noise_variance_limit: f64,
    pub bound: BoundCheck,
}

pub struct SgdOutput {
    pub report: SgdReport,
    pub csv: Vec<u8>,
}

pub fn run(config: SgdConfig, seed: u64) -> Result<SgdOutput, CliError> {
    if config.seeds == 0 || config.steps == 0 {
        return Err(CliError::Input("steps and seeds must be positive".into()));
    }
    if config.varying.target() != config.m {
        return Err(CliError::Input(format!("varying schedule targets {} but m is {}", config.varying.target(), config.m)));
    }
    let problem = QuadraticProblem::random(config.dim, config.mu, config.l, config.sigma0_sq, config.problem_seed)?;
    let lr = config.lr.unwrap_or(LrSchedule::Constant { gamma: 0.5 / config.l });
    let fixed = BatchSchedule::Fixed { m: config.m };
    let x0 = problem.start(config.r, config.problem_seed);
    let initial = problem.loss(&x0);

    let len = config.steps + 1;
    let (mut mean_fixed, mut mean_varying) = (vec![0.0; len], vec![0.0; len]);
    let mut gap = 0.0;
    let mut sizes = std::collections::BTreeSet::new();
    for s in 0..config.seeds as u64 {
        let run_seed = seed.wrapping_add(s);
        let a = run_sgd(&problem, &fixed, config.steps, lr, config.staleness, &x0, run_seed)?;
        let b = run_sgd(&problem, &config.varying, config.steps, lr, config.staleness, &x0, run_seed)?;
        gap += a.losses.iter().zip(&b.losses).map(|(x, y)| (x - y).abs()).sum::<f64>() / len as f64;
        for k in 0..len {
            mean_fixed[k] += a.losses[k] / config.seeds as f64;
            mean_varying[k] += b.losses[k] / config.seeds as f64;
        }
        sizes.extend(b.batch_sizes.iter().copied());
    }
    gap /= config.seeds as f64;

    let trials = config.variance_trials.max(1);
    let max_noise_variance = sizes
        .iter()
        .map(|&m_k| averaged_gradient_variance(&problem, m_k, trials, seed ^ m_k as u64))
        .fold(0.0, f64::max);
    let bound = bound_ensemble(&problem, &config.varying, config.steps, config.r, config.seeds, seed)?;

    let mut csv = Vec::new();
    write_loss_csv(&mut csv, &[("fixed", &mean_fixed), ("varying", &mean_varying)])?;
    let gap_fraction = if initial > 0.0 { gap / initial } else { 0.0 };
    let report = SgdReport {
        initial_suboptimality: initial,
        mean_gap: gap,
        gap_fraction,
        gap_within_5_percent: gap_fraction <= 0.05,
        final_loss_fixed: mean_fixed[config.steps],
        final_loss_varying: mean_varying[config.steps],
        max_noise_variance,
        noise_variance_limit: config.sigma0_sq / config.m as f64,
        bound,
        config,
    };
    Ok(SgdOutput { report, csv })
}
