//! Group all-reduce plans and failure-aware group sizing.
//!
//! Peers are split top-down into nested blocks: the whole collaboration is cut
//! into at most `m` balanced contiguous blocks, each of those again into at
//! most `m`, and so on until the blocks are single peers. Round `r` averages
//! inside every level-`r` block by forming groups that hold at least one
//! member of each child block. After the last round every peer holds the
//! global average.
//!
//! When child blocks differ in size by one, a group can hold two members of
//! the same child. Each member then contributes its (sum, weight) pair divided
//! by the number of members of its child block in the group, which keeps the
//! result exact. Group sizes can exceed `m` in that case.

use rand::Rng;
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GroupError {
    #[error("group size {m} must lie in [2, {n}]")]
    InvalidGroupSize { m: usize, n: usize },
    #[error("collaboration needs at least 2 peers, got {0}")]
    TooFewPeers(usize),
    #[error("failure rate {0} outside [0, 1)")]
    InvalidFailureRate(f64),
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("a group did not complete within {0} attempts")]
    RetryLimit(u64),
}

/// Smallest `k` with `m^k >= n`.
pub fn rounds_needed(n: usize, m: usize) -> usize {
    let mut k = 0;
    let mut reach = 1usize;
    while reach < n {
        reach = reach.saturating_mul(m);
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupPlan {
    pub n: usize,
    pub m: usize,
    /// `rounds[r][g]` lists the peers of group `g` in round `r`.
    pub rounds: Vec<Vec<Vec<usize>>>,
    /// Expected averaging rounds including retries, at the failure rate the plan was priced for.
    pub expected_iterations: f64,
    /// `labels[r][i]`: the child block peer `i` represents in round `r`.
    labels: Vec<Vec<usize>>,
}

/// Splits `[lo, hi)` into `parts` contiguous ranges whose sizes differ by at most one.
fn balanced(lo: usize, hi: usize, parts: usize) -> Vec<(usize, usize)> {
    let size = hi - lo;
    let (base, extra) = (size / parts, size % parts);
    let mut out = Vec::with_capacity(parts);
    let mut at = lo;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push((at, at + len));
        at += len;
    }
    out
}

type Rounds = (Vec<Vec<Vec<usize>>>, Vec<Vec<usize>>);

/// Builds rounds from per-level part counts, top level first. Every level-`l`
/// block is cut into `radices[k - l]` balanced parts; level-1 blocks are cut
/// into single peers. Returns `None` if some block is too small to split.
fn rounds_from_radices(n: usize, radices: &[usize]) -> Option<Rounds> {
    let k = radices.len() + 1;
    let mut levels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k + 1];
    let mut children: Vec<Vec<Vec<usize>>> = vec![Vec::new(); k + 1];
    levels[k].push((0, n));
    for level in (1..=k).rev() {
        let blocks = levels[level].clone();
        for (lo, hi) in blocks {
            let parts = if level == 1 { hi - lo } else { radices[k - level] };
            if parts > hi - lo || parts == 0 {
                return None;
            }
            let mut ids = Vec::with_capacity(parts);
            for range in balanced(lo, hi, parts) {
                ids.push(levels[level - 1].len());
                levels[level - 1].push(range);
            }
            children[level].push(ids);
        }
    }

    let mut rounds = Vec::with_capacity(k);
    let mut labels = Vec::with_capacity(k);
    for level in 1..=k {
        let mut groups = Vec::new();
        let mut label = vec![0; n];
        for kids in &children[level] {
            let spans: Vec<(usize, usize)> = kids.iter().map(|&c| levels[level - 1][c]).collect();
            for (&c, &(lo, hi)) in kids.iter().zip(&spans) {
                label[lo..hi].iter_mut().for_each(|l| *l = c);
            }
            // One member of every child per group; leftovers spread round-robin.
            let width = spans.iter().map(|(lo, hi)| hi - lo).min().unwrap_or(0);
            let first = groups.len();
            for t in 0..width {
                groups.push(spans.iter().map(|&(lo, _)| lo + t).collect::<Vec<_>>());
            }
            let mut slot = 0;
            for &(lo, hi) in &spans {
                for peer in lo + width..hi {
                    groups[first + slot % width].push(peer);
                    slot += 1;
                }
            }
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        rounds.push(groups);
        labels.push(label);
    }
    Some((rounds, labels))
}

/// Ranks candidate plans: skew beyond one first, then the largest group, then skew.
fn shape(rounds: &[Vec<Vec<usize>>]) -> (usize, usize, usize) {
    let mut skew = 0;
    let mut largest = 0;
    for round in rounds {
        let hi = round.iter().map(Vec::len).max().unwrap_or(0);
        let lo = round.iter().map(Vec::len).min().unwrap_or(0);
        skew = skew.max(hi - lo);
        largest = largest.max(hi);
    }
    (skew.saturating_sub(1), largest, skew)
}

pub fn build_plan(n: usize, m: usize) -> Result<GroupPlan, GroupError> {
    if m < 2 || m > n {
        return Err(GroupError::InvalidGroupSize { m, n });
    }
    let k = rounds_needed(n, m);

    // Candidate part counts for the upper k-1 levels stay near the k-th root of n.
    let root = (1..=m).find(|&b| b.saturating_pow(k as u32) >= n).unwrap_or(m);
    let choices: Vec<usize> = (root.saturating_sub(1).max(2)..=(root + 1).min(m)).collect();
    let mut best: Option<((usize, usize, usize), Rounds)> = None;
    let mut radices = vec![choices[0]; k - 1];
    'search: loop {
        if let Some(rounds) = rounds_from_radices(n, &radices) {
            let score = shape(&rounds.0);
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, rounds));
            }
        }
        // Odometer over `choices`, last level fastest.
        for slot in (0..radices.len()).rev() {
            let at = choices.iter().position(|&c| c == radices[slot]).unwrap_or(0);
            if at + 1 < choices.len() {
                radices[slot] = choices[at + 1];
                continue 'search;
            }
            radices[slot] = choices[0];
        }
        break;
    }
    let (_, (rounds, labels)) = best.expect("a single level always splits");

    Ok(GroupPlan {
        n,
        m,
        expected_iterations: k as f64,
        rounds,
        labels,
    })
}

impl GroupPlan {
    /// Re-prices the plan for peers that each fail a round with probability `p`.
    pub fn with_failure_rate(mut self, p: f64) -> Result<Self, GroupError> {
        self.expected_iterations = expected_iterations(self.n, self.m, p)?;
        Ok(self)
    }

    /// Reduces one group in round `r` over the (sum, weight) state.
    fn reduce(&self, r: usize, group: &[usize], sums: &mut [Vec<f64>], weights: &mut [f64]) {
        let label = &self.labels[r];
        let share = |i: usize| 1.0 / group.iter().filter(|&&j| label[j] == label[i]).count() as f64;
        let dim = sums[group[0]].len();
        let mut s = vec![0.0; dim];
        let mut w = 0.0;
        for &i in group {
            let f = share(i);
            for (acc, v) in s.iter_mut().zip(&sums[i]) {
                *acc += f * v;
            }
            w += f * weights[i];
        }
        for &i in group {
            sums[i].clone_from(&s);
            weights[i] = w;
        }
    }
}

/// Result of executing a plan when some groups may not complete.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    /// Each peer's current estimate of the (weighted) average.
    pub values: Vec<Vec<f64>>,
    /// Per round, indices of groups that did not complete.
    pub failed_groups: Vec<Vec<usize>>,
    /// Per round, attempts the slowest group needed (1 when nothing failed).
    pub attempts: Vec<u64>,
}

impl PlanOutcome {
    pub fn complete(&self) -> bool {
        self.failed_groups.iter().all(Vec::is_empty)
    }
}

struct State {
    sums: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl State {
    fn new(plan: &GroupPlan, values: &[Vec<f64>], weights: Option<&[f64]>) -> Result<State, GroupError> {
        if values.len() != plan.n {
            return Err(GroupError::DimensionMismatch {
                expected: plan.n,
                got: values.len(),
            });
        }
        let dim = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(GroupError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let weights = match weights {
            Some(w) if w.len() != plan.n => {
                return Err(GroupError::DimensionMismatch {
                    expected: plan.n,
                    got: w.len(),
                })
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; plan.n],
        };
        let sums = values
            .iter()
            .zip(&weights)
            .map(|(v, w)| v.iter().map(|x| x * w).collect())
            .collect();
        Ok(State { sums, weights })
    }

    fn estimates(&self) -> Vec<Vec<f64>> {
        self.sums
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| s.iter().map(|x| x / w).collect())
            .collect()
    }
}

/// Runs every round without failures; each peer ends with the global mean.
pub fn run_plan(plan: &GroupPlan, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GroupError> {
    run_plan_weighted(plan, values, None)
}

/// As [`run_plan`], with per-peer weights such as local sample counts.
pub fn run_plan_weighted(
    plan: &GroupPlan,
    values: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>, GroupError> {
    let mut st = State::new(plan, values, weights)?;
    for (r, groups) in plan.rounds.iter().enumerate() {
        for g in groups {
            plan.reduce(r, g, &mut st.sums, &mut st.weights);
        }
    }
    Ok(st.estimates())
}

/// Runs the plan once, where `failed[r][i]` marks peer `i` as dropping out of
/// round `r`. A group with a failed member leaves all its members' state
/// untouched for that round; other groups proceed normally.
pub fn run_plan_with_failures(
    plan: &GroupPlan,
    values: &[Vec<f64>],
    failed: &[Vec<bool>],
) -> Result<PlanOutcome, GroupError> {
    if failed.len() != plan.rounds.len() {
        return Err(GroupError::DimensionMismatch {
            expected: plan.rounds.len(),
            got: failed.len(),
        });
    }
    if let Some(bad) = failed.iter().find(|f| f.len() != plan.n) {
        return Err(GroupError::DimensionMismatch {
            expected: plan.n,
            got: bad.len(),
        });
    }
    let mut st = State::new(plan, values, None)?;
    let mut failed_groups = Vec::with_capacity(plan.rounds.len());
    for (r, groups) in plan.rounds.iter().enumerate() {
        let mut lost = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            if g.iter().any(|&i| failed[r][i]) {
                lost.push(gi);
            } else {
                plan.reduce(r, g, &mut st.sums, &mut st.weights);
            }
        }
        failed_groups.push(lost);
    }
    let attempts = vec![1; plan.rounds.len()];
    Ok(PlanOutcome {
        values: st.estimates(),
        failed_groups,
        attempts,
    })
}

/// Runs the plan with each peer failing every attempt independently with
/// probability `p`. A group whose attempt loses a member retries on its own
/// until an attempt succeeds; the round lasts as long as its slowest group.
pub fn run_plan_with_retries<R: Rng + ?Sized>(
    plan: &GroupPlan,
    values: &[Vec<f64>],
    p: f64,
    max_attempts: u64,
    rng: &mut R,
) -> Result<PlanOutcome, GroupError> {
    check_rate(p)?;
    let values = run_plan(plan, values)?;
    let attempts = sample_attempts(plan, &vec![p; plan.n], max_attempts, rng)?;
    Ok(PlanOutcome {
        values,
        failed_groups: vec![Vec::new(); plan.rounds.len()],
        attempts,
    })
}

/// Per round, the attempts its slowest group needs when peer `i` drops out
/// of any attempt with probability `fail[i]`.
pub fn sample_attempts<R: Rng + ?Sized>(
    plan: &GroupPlan,
    fail: &[f64],
    max_attempts: u64,
    rng: &mut R,
) -> Result<Vec<u64>, GroupError> {
    if fail.len() != plan.n {
        return Err(GroupError::DimensionMismatch {
            expected: plan.n,
            got: fail.len(),
        });
    }
    for &p in fail {
        check_rate(p)?;
    }
    let mut attempts = Vec::with_capacity(plan.rounds.len());
    for groups in &plan.rounds {
        let mut slowest = 0;
        for g in groups {
            let mut tries = 0;
            loop {
                tries += 1;
                // Every member draws, so the stream does not depend on who failed first.
                let lost = g.iter().fold(false, |lost, &i| rng.gen_bool(fail[i]) | lost);
                if !lost {
                    break;
                }
                if tries >= max_attempts {
                    return Err(GroupError::RetryLimit(max_attempts));
                }
            }
            slowest = slowest.max(tries);
        }
        attempts.push(slowest);
    }
    Ok(attempts)
}

fn check_rate(p: f64) -> Result<(), GroupError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(GroupError::InvalidFailureRate(p))
    }
}

/// Expected cost of averaging `n` peers in groups of `m` when each peer fails
/// a round with probability `p`.
pub trait CostModel {
    fn expected_iterations(&self, n: usize, m: usize, p: f64) -> Result<f64, GroupError>;
}

/// Each round runs `ceil(n/m)` groups in parallel. A group attempt succeeds
/// when all `m` members survive, failed groups retry, and the round ends
/// when the last group finishes.
#[derive(Clone, Copy, Debug, Default)]
pub struct GeometricRetry;

/// Past this many series terms the sum is replaced by its integral approximation.
const MAX_SERIES_TERMS: f64 = 5e6;
const TAIL_MASS: f64 = 1e-12;

/// `E[max of g iid geometric variables]` on `{1, 2, ...}` with success probability `q`.
pub fn expected_max_geometric(g: usize, q: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    let r = 1.0 - q;
    if g == 1 {
        return 1.0 / q;
    }
    let lambda = -(-q).ln_1p();
    let gf = g as f64;
    let terms = ((gf / q).ln() - TAIL_MASS.ln()) / lambda;
    if terms > MAX_SERIES_TERMS {
        let harmonic: f64 = (1..=g).map(|j| 1.0 / j as f64).sum();
        return harmonic / lambda + 0.5;
    }
    // P(max > t) = 1 - (1 - r^t)^g, summed over t >= 0.
    let mut total = 0.0;
    let mut rt: f64 = 1.0;
    loop {
        total += -(gf * (-rt).ln_1p()).exp_m1();
        rt *= r;
        if gf * rt / q < TAIL_MASS {
            return total;
        }
    }
}

impl CostModel for GeometricRetry {
    fn expected_iterations(&self, n: usize, m: usize, p: f64) -> Result<f64, GroupError> {
        if m < 2 || m > n {
            return Err(GroupError::InvalidGroupSize { m, n });
        }
        check_rate(p)?;
        let q = (1.0 - p).powi(m as i32);
        Ok(rounds_needed(n, m) as f64 * expected_max_geometric(n.div_ceil(m), q))
    }
}

pub fn expected_iterations(n: usize, m: usize, p: f64) -> Result<f64, GroupError> {
    GeometricRetry.expected_iterations(n, m, p)
}

pub fn optimal_group_size(n: usize, p: f64) -> Result<usize, GroupError> {
    optimal_group_size_with(&GeometricRetry, n, p)
}

/// Cheapest group size in `[2, n]` under `model`; near-ties go to the larger size.
pub fn optimal_group_size_with(model: &dyn CostModel, n: usize, p: f64) -> Result<usize, GroupError> {
    if n < 2 {
        return Err(GroupError::TooFewPeers(n));
    }
    check_rate(p)?;
    let mut best = (n, model.expected_iterations(n, n, p)?);
    for m in (2..n).rev() {
        let cost = model.expected_iterations(n, m, p)?;
        if cost < best.1 * (1.0 - 1e-12) {
            best = (m, cost);
        }
    }
    Ok(best.0)
}

/// One row of a group-size sweep.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GroupSizeRow {
    pub n: usize,
    pub p: f64,
    pub m: usize,
    pub expected_iterations: f64,
}

/// Optimal group size for every `(n, p)` pair.
pub fn sweep(ns: &[usize], ps: &[f64]) -> Result<Vec<GroupSizeRow>, GroupError> {
    let mut rows = Vec::with_capacity(ns.len() * ps.len());
    for &n in ns {
        for &p in ps {
            let m = optimal_group_size(n, p)?;
            rows.push(GroupSizeRow {
                n,
                p,
                m,
                expected_iterations: expected_iterations(n, m, p)?,
            });
        }
    }
    Ok(rows)
}
