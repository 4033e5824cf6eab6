//! SGD on noisy quadratics with varying batch sizes and optional one-step staleness.
//!
//! The objective is `f(x) = 1/2 (x - x*)^T A (x - x*)`, so `f* = 0`. A
//! per-sample stochastic gradient is `A (x - x*) + xi` with
//! `xi ~ N(0, sigma0^2 I)`; a step averages `m_k` of them. `sigma0^2` is the
//! per-coordinate noise variance, so the total variance of one sample is
//! `dim * sigma0^2`, and that total is what enters [`bound_rhs`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgdError {
    #[error("loss exceeded 1e6 times its initial value at step {step}")]
    Diverged { step: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("batch size {got} is below the target {target}")]
    BatchTooSmall { got: usize, target: usize },
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub a: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub sigma0_sq: f64,
    pub mu: f64,
    pub l: f64,
}

impl QuadraticProblem {
    /// Random rotation of `diag(mu .. L)` with eigenvalues evenly spaced, and a
    /// Gaussian optimum.
    pub fn random(dim: usize, mu: f64, l: f64, sigma0_sq: f64, seed: u64) -> Result<Self, SgdError> {
        if dim == 0 || !(mu > 0.0 && mu <= l && l.is_finite()) || !(sigma0_sq >= 0.0) {
            return Err(SgdError::InvalidProblem(format!(
                "dim {dim}, mu {mu}, L {l}, sigma0^2 {sigma0_sq}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
        let q = g.qr().q();
        let eig = DVector::from_fn(dim, |i, _| {
            if dim == 1 {
                l
            } else {
                mu + (l - mu) * i as f64 / (dim - 1) as f64
            }
        });
        let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let x_star = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        Ok(QuadraticProblem { a, x_star, sigma0_sq, mu, l })
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn loss(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.a * &d))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * (x - &self.x_star)
    }

    /// A point at distance `r` from the optimum in a seeded random direction.
    pub fn start(&self, r: f64, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let dir = DVector::<f64>::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        &self.x_star + dir.normalize() * r
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let s = self.sigma0_sq.sqrt();
        DVector::from_fn(self.dim(), |_, _| s * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Monte-Carlo estimate of `E|g - grad f|^2 / dim` for the mean `g` of `m_k`
/// independent sample gradients.
pub fn averaged_gradient_variance(problem: &QuadraticProblem, m_k: usize, trials: usize, seed: u64) -> f64 {
    let m_k = m_k.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let mut sum = DVector::zeros(problem.dim());
        for _ in 0..m_k {
            sum += problem.sample_noise(&mut rng);
        }
        total += (sum / m_k as f64).norm_squared();
    }
    total / (trials as f64 * problem.dim() as f64)
}

/// Number of samples accumulated at each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchSchedule {
    Fixed { m: usize },
    /// `m + Poisson(extra_mean)` samples per step.
    PoissonExtra { m: usize, extra_mean: f64 },
    /// Explicit per-step sizes; the last one repeats.
    Explicit { m: usize, sizes: Vec<usize> },
}

impl BatchSchedule {
    pub fn target(&self) -> usize {
        match *self {
            BatchSchedule::Fixed { m } | BatchSchedule::PoissonExtra { m, .. } | BatchSchedule::Explicit { m, .. } => m,
        }
    }

    fn realize<R: Rng + ?Sized>(&self, step: usize, rng: &mut R) -> usize {
        match self {
            BatchSchedule::Fixed { m } => *m,
            BatchSchedule::PoissonExtra { m, extra_mean } => {
                if *extra_mean > 0.0 {
                    m + Poisson::new(*extra_mean).expect("positive mean").sample(rng) as usize
                } else {
                    *m
                }
            }
            BatchSchedule::Explicit { sizes, m } => sizes.get(step).or(sizes.last()).copied().unwrap_or(*m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant { gamma: f64 },
    /// `gamma / (1 + k / decay_steps)`.
    InverseTime { gamma: f64, decay_steps: f64 },
}

impl LrSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            LrSchedule::Constant { gamma } => gamma,
            LrSchedule::InverseTime { gamma, decay_steps } => gamma / (1.0 + k as f64 / decay_steps),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SgdRun {
    /// `f(x_k) - f*` for `k = 0..=steps`.
    pub losses: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    #[serde(skip)]
    pub final_x: DVector<f64>,
    /// Uniform average of `x_0 .. x_{steps-1}`.
    #[serde(skip)]
    pub average_x: DVector<f64>,
}

/// Runs `steps` SGD updates from `x0`. With `staleness = 1` each gradient is
/// evaluated at the previous iterate. Batch sizes and gradient noise use
/// separate generators, so runs sharing a seed share their noise directions.
pub fn run_sgd(
    problem: &QuadraticProblem,
    schedule: &BatchSchedule,
    steps: usize,
    lr: LrSchedule,
    staleness: usize,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<SgdRun, SgdError> {
    if staleness > 1 {
        return Err(SgdError::InvalidProblem(format!("staleness {staleness} not in {{0, 1}}")));
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let target = schedule.target();
    let mut x = x0.clone();
    let mut prev = x0.clone();
    let initial = problem.loss(&x);
    let mut losses = Vec::with_capacity(steps + 1);
    let mut batch_sizes = Vec::with_capacity(steps);
    let mut sum_x = DVector::zeros(problem.dim());
    losses.push(initial);
    for k in 0..steps {
        let m_k = schedule.realize(k, &mut batch_rng);
        if m_k < target.max(1) {
            return Err(SgdError::BatchTooSmall { got: m_k, target });
        }
        batch_sizes.push(m_k);
        let at = if staleness == 1 { &prev } else { &x };
        let z = DVector::<f64>::from_fn(problem.dim(), |_, _| noise_rng.sample(StandardNormal));
        let g = problem.gradient(at) + z * (problem.sigma0_sq / m_k as f64).sqrt();
        sum_x += &x;
        let next = &x - g * lr.at(k);
        prev = std::mem::replace(&mut x, next);
        let loss = problem.loss(&x);
        if !loss.is_finite() || (initial > 0.0 && loss > 1e6 * initial) {
            return Err(SgdError::Diverged { step: k + 1 });
        }
        losses.push(loss);
    }
    let average_x = if steps > 0 { sum_x / steps as f64 } else { x.clone() };
    Ok(SgdRun {
        losses,
        batch_sizes,
        final_x: x,
        average_x,
    })
}

/// Right-hand side of the convergence bound for `T` steps with target batch `m`.
/// Returns both branches; the bound is their minimum.
pub fn bound_rhs(problem: &QuadraticProblem, r: f64, m: usize, t: usize) -> (f64, f64) {
    let (mu, l) = (problem.mu, problem.l);
    let sigma_sq = problem.sigma0_sq * problem.dim() as f64;
    let (m, t) = (m as f64, t as f64);
    let first = 64.0 * l * r * r * (-mu * t / (4.0 * l)).exp() + 36.0 * sigma_sq / (mu * m * t);
    let second = 2.0 * l * r * r / t + 2.0 * sigma_sq.sqrt() * r / (m * t).sqrt();
    (first, second)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub steps: usize,
    pub m: usize,
    pub seeds: usize,
    /// Ensemble mean of `f(x_avg) - f* + mu |x_T - x*|^2`.
    pub lhs: f64,
    pub rhs: f64,
    pub exponential_branch: f64,
    pub sublinear_branch: f64,
    pub satisfied: bool,
    /// `rhs - lhs`.
    pub margin: f64,
}

/// Compares the ensemble of `runs` (all `t` steps from points at distance `r`) with the bound.
pub fn check_bound(problem: &QuadraticProblem, runs: &[SgdRun], r: f64, m: usize) -> BoundCheck {
    let t = runs.first().map_or(0, |run| run.losses.len() - 1);
    let lhs = runs
        .iter()
        .map(|run| problem.loss(&run.average_x) + problem.mu * (&run.final_x - &problem.x_star).norm_squared())
        .sum::<f64>()
        / runs.len().max(1) as f64;
    let (a, b) = bound_rhs(problem, r, m, t.max(1));
    let rhs = a.min(b);
    BoundCheck {
        steps: t,
        m,
        seeds: runs.len(),
        lhs,
        rhs,
        exponential_branch: a,
        sublinear_branch: b,
        satisfied: lhs <= rhs,
        margin: rhs - lhs,
    }
}

/// Runs `seeds` independent trajectories at `gamma = 1/(2L)` and checks the bound.
pub fn bound_ensemble(
    problem: &QuadraticProblem,
    schedule: &BatchSchedule,
    steps: usize,
    r: f64,
    seeds: usize,
    base_seed: u64,
) -> Result<BoundCheck, SgdError> {
    let lr = LrSchedule::Constant { gamma: 0.5 / problem.l };
    let x0 = problem.start(r, base_seed);
    let runs = (0..seeds as u64)
        .map(|s| run_sgd(problem, schedule, steps, lr, 0, &x0, base_seed.wrapping_add(s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(check_bound(problem, &runs, r, schedule.target()))
}

/// Writes `step,<label>...` rows, one column per curve.
pub fn write_loss_csv<W: Write>(out: W, curves: &[(&str, &[f64])]) -> Result<(), SgdError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend(curves.iter().map(|(l, _)| l.to_string()));
    w.write_record(&header).map_err(csv_io)?;
    let rows = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for k in 0..rows {
        let mut rec = vec![k.to_string()];
        rec.extend(curves.iter().map(|(_, c)| c.get(k).map_or(String::new(), |v| format!("{v:.9e}"))));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SgdError {
    SgdError::Io(std::io::Error::other(e))
}
