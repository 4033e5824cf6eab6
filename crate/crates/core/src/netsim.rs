//! Discrete-event simulation of collaborative training under churn.
//!
//! The time model is fluid: peers accumulate samples at their compute rate,
//! and an averaging round takes the closed-form or LP-derived round time of
//! whichever peers are online when it starts. There is no latency term.
//!
//! Membership comes from a [`ChurnTrace`]. Peers that never appear in the
//! trace are online for the whole run; peers that do appear start offline
//! and must join first. A peer rejoining after time zero becomes useful only
//! after a fixed catch-up delay.
//!
//! With delayed parameter updates the averaging of step `k` overlaps the
//! gradient computation of step `k + 1`, and the computation of step `k + 2`
//! waits for the update of step `k`, so gradients are never more than one
//! step stale.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::{self, GroupError, GroupPlan};
use crate::model::{CollaborationSpec, PeerId};
use crate::strategy::{round_time, Algorithm, StrategyError};

/// Default delay before a rejoining peer contributes again.
pub const DEFAULT_CATCH_UP: f64 = 60.0;
/// Default period after which the strategy is re-derived even without churn.
pub const DEFAULT_REFRESH: f64 = 30.0;
const MAX_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid churn trace: {0}")]
    InvalidTrace(String),
    #[error("trace mentions unknown peer {0:?}")]
    UnknownPeer(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("training stalled: no computing peers from t={at:.1}s for more than {timeout:.1}s")]
    TrainingStalled { at: f64, timeout: f64 },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Groups(#[from] GroupError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnKind {
    Join,
    Leave,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChurnEvent {
    pub time: f64,
    pub peer: PeerId,
    pub kind: ChurnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChurnTrace {
    #[serde(default)]
    pub events: Vec<ChurnEvent>,
    /// Simulated duration in seconds.
    pub horizon: f64,
}

impl ChurnTrace {
    pub fn new(events: Vec<ChurnEvent>, horizon: f64) -> Result<Self, SimError> {
        let trace = ChurnTrace { events, horizon };
        trace.validate()?;
        Ok(trace)
    }

    /// No churn: every peer stays online for `horizon` seconds.
    pub fn static_fleet(horizon: f64) -> Self {
        ChurnTrace {
            events: Vec::new(),
            horizon,
        }
    }

    /// `peers` train for `on` seconds, go offline for `off` seconds, and repeat.
    pub fn alternating(peers: &[PeerId], on: f64, off: f64, horizon: f64) -> Self {
        let mut events = Vec::new();
        let mut t = 0.0;
        while t < horizon {
            for (time, kind) in [(t, ChurnKind::Join), (t + on, ChurnKind::Leave)] {
                if time < horizon {
                    events.extend(peers.iter().map(|p| ChurnEvent {
                        time,
                        peer: p.clone(),
                        kind,
                    }));
                }
            }
            t += on + off;
        }
        ChurnTrace { events, horizon }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidTrace(format!("horizon {} must be positive and finite", self.horizon)));
        }
        let mut last = 0.0;
        let mut online: HashMap<&PeerId, bool> = HashMap::new();
        for (k, e) in self.events.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= last) {
                return Err(SimError::InvalidTrace(format!("event {k} at t={} is out of order", e.time)));
            }
            last = e.time;
            let on = online.entry(&e.peer).or_insert(false);
            match (e.kind, *on) {
                (ChurnKind::Join, false) => *on = true,
                (ChurnKind::Join, true) => {
                    return Err(SimError::InvalidTrace(format!("event {k}: {} joins twice", e.peer)))
                }
                (_, true) => *on = false,
                (_, false) => {
                    return Err(SimError::InvalidTrace(format!(
                        "event {k}: {} leaves without having joined",
                        e.peer
                    )))
                }
            }
        }
        Ok(())
    }
}

/// How averaging rounds are split into groups when peers may fail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPolicy {
    /// One collaboration-wide group: any failure repeats the whole round.
    Whole,
    /// Groups of this size (clamped to the number of online peers).
    Fixed(usize),
    /// The group size minimising expected iterations at the mean failure rate.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub algorithm: Algorithm,
    /// Delayed parameter updates: overlap averaging with the next computation.
    pub dpu: bool,
    pub groups: GroupPolicy,
    pub catch_up: f64,
    pub refresh: f64,
    /// Longest tolerated stretch without any computing peer online.
    pub stall_timeout: f64,
    pub seed: u64,
    /// Overrides the trace horizon when set.
    pub horizon: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            algorithm: Algorithm::Adaptive,
            dpu: true,
            groups: GroupPolicy::Optimal,
            catch_up: DEFAULT_CATCH_UP,
            refresh: DEFAULT_REFRESH,
            stall_timeout: 600.0,
            seed: 0,
            horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    /// Wall time at which the step's update was applied.
    pub time: f64,
    pub samples: f64,
    /// Peers that contributed samples to this step.
    pub peers: Vec<usize>,
    /// Number of updates applied to the parameters the gradients were computed on.
    pub param_version: u64,
    pub compute_seconds: f64,
    pub comm_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub start: f64,
    pub duration: f64,
    pub algorithm: Algorithm,
    /// No participant dropped out of any attempt.
    pub success: bool,
    /// Extra group attempts caused by failures.
    pub retries: u64,
    pub participants: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimTrace {
    pub steps: Vec<StepRecord>,
    pub averaging_rounds: Vec<RoundRecord>,
    /// Rounds in which at least one group had to retry.
    pub restarts: u64,
    /// Times the strategy was re-derived (membership change or refresh).
    pub strategy_solves: u64,
    pub horizon: f64,
    /// Samples each peer contributed over the run.
    pub peer_samples: Vec<f64>,
    /// Seconds each peer spent online and caught up.
    pub peer_active_time: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub steps: usize,
    pub horizon_seconds: f64,
    pub steps_per_hour: f64,
    pub mean_step_seconds: f64,
    pub samples_per_second: f64,
    pub rounds: usize,
    pub restarts: u64,
    pub strategy_solves: u64,
}

impl SimTrace {
    pub fn steps_per_hour(&self) -> f64 {
        self.steps.len() as f64 * 3600.0 / self.horizon
    }

    /// Mean time between consecutive committed steps; `NaN` with fewer than two.
    pub fn mean_step_interval(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) if self.steps.len() > 1 => (b.time - a.time) / (self.steps.len() - 1) as f64,
            _ => f64::NAN,
        }
    }

    /// Steps committed in `[from, to)`, scaled to an hourly rate.
    pub fn steps_per_hour_between(&self, from: f64, to: f64) -> f64 {
        let n = self.steps.iter().filter(|s| s.time >= from && s.time < to).count();
        n as f64 * 3600.0 / (to - from)
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            steps: self.steps.len(),
            horizon_seconds: self.horizon,
            steps_per_hour: self.steps_per_hour(),
            mean_step_seconds: self.mean_step_interval(),
            samples_per_second: self.steps.iter().map(|s| s.samples).sum::<f64>() / self.horizon,
            rounds: self.averaging_rounds.len(),
            restarts: self.restarts,
            strategy_solves: self.strategy_solves,
        }
    }

    /// One row per committed step:
    /// `step,time_s,samples,peers,param_version,compute_s,comm_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "time_s", "samples", "peers", "param_version", "compute_s", "comm_s"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                format!("{:.6}", s.time),
                format!("{:.3}", s.samples),
                s.peers.len().to_string(),
                s.param_version.to_string(),
                format!("{:.6}", s.compute_seconds),
                format!("{:.6}", s.comm_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Duration of one pure-communication averaging round over the whole collaboration.
pub fn simulate_averaging(spec: &CollaborationSpec, algorithm: Algorithm) -> Result<f64, SimError> {
    Ok(round_time(spec, algorithm)?)
}

/// Online intervals per peer and the sorted times at which membership changes.
struct Membership {
    intervals: Vec<Vec<(f64, f64)>>,
    departures: Vec<Vec<f64>>,
    changes: Vec<f64>,
}

impl Membership {
    fn build(spec: &CollaborationSpec, trace: &ChurnTrace, catch_up: f64) -> Result<Self, SimError> {
        let n = spec.len();
        let mut per_peer: Vec<Vec<&ChurnEvent>> = vec![Vec::new(); n];
        for e in &trace.events {
            let i = spec.index_of(&e.peer).ok_or_else(|| SimError::UnknownPeer(e.peer.0.clone()))?;
            per_peer[i].push(e);
        }
        let mut intervals = vec![Vec::new(); n];
        let mut departures = vec![Vec::new(); n];
        for (i, events) in per_peer.iter().enumerate() {
            if events.is_empty() {
                intervals[i].push((0.0, f64::INFINITY));
                continue;
            }
            let mut start: Option<f64> = None;
            for e in events {
                match e.kind {
                    ChurnKind::Join => start = Some(if e.time == 0.0 { 0.0 } else { e.time + catch_up }),
                    ChurnKind::Leave | ChurnKind::Fail => {
                        if let Some(s) = start.take() {
                            if e.time > s {
                                intervals[i].push((s, e.time));
                                departures[i].push(e.time);
                            }
                        }
                    }
                }
            }
            if let Some(s) = start {
                intervals[i].push((s, f64::INFINITY));
            }
        }
        let mut changes: Vec<f64> = intervals
            .iter()
            .flatten()
            .flat_map(|&(s, e)| [s, e])
            .filter(|t| t.is_finite())
            .collect();
        changes.sort_by(f64::total_cmp);
        changes.dedup();
        Ok(Membership {
            intervals,
            departures,
            changes,
        })
    }

    fn active(&self, t: f64) -> Vec<usize> {
        (0..self.intervals.len())
            .filter(|&i| self.intervals[i].iter().any(|&(s, e)| s <= t && t < e))
            .collect()
    }

    fn next_change(&self, t: f64) -> f64 {
        let k = self.changes.partition_point(|&c| c <= t);
        self.changes.get(k).copied().unwrap_or(f64::INFINITY)
    }

    fn active_time(&self, i: usize, horizon: f64) -> f64 {
        self.intervals[i]
            .iter()
            .map(|&(s, e)| (e.min(horizon) - s).max(0.0))
            .sum()
    }
}

struct Simulator<'a> {
    spec: &'a CollaborationSpec,
    config: &'a TrainingConfig,
    members: Membership,
    horizon: f64,
    rng: ChaCha8Rng,
    round_cache: HashMap<Vec<usize>, f64>,
    plan_cache: HashMap<(usize, usize), GroupPlan>,
    last_set: Option<Vec<usize>>,
    last_solve: f64,
    solves: u64,
    peer_samples: Vec<f64>,
}

struct ComputePhase {
    end: f64,
    contributors: Vec<usize>,
}

impl Simulator<'_> {
    /// Accumulates one batch starting at `start`; `None` if the horizon comes first.
    fn compute(&mut self, start: f64) -> Result<Option<ComputePhase>, SimError> {
        let batch = self.spec.batch_size;
        let mut t = start;
        let mut acc = 0.0;
        let mut idle_since: Option<f64> = None;
        let mut contributed = vec![false; self.spec.len()];
        while t < self.horizon {
            let online: Vec<usize> = self
                .members
                .active(t)
                .into_iter()
                .filter(|&i| self.spec.peers[i].can_compute && self.spec.peers[i].compute_rate > 0.0)
                .collect();
            let rate: f64 = online.iter().map(|&i| self.spec.peers[i].compute_rate).sum();
            let next = self.members.next_change(t).min(self.horizon);
            if rate > 0.0 {
                idle_since = None;
                let finish = t + (batch - acc) / rate;
                let until = finish.min(next);
                for &i in &online {
                    self.peer_samples[i] += self.spec.peers[i].compute_rate * (until - t);
                    contributed[i] = true;
                }
                if finish <= next {
                    let contributors = (0..contributed.len()).filter(|&i| contributed[i]).collect();
                    return Ok(Some(ComputePhase { end: finish, contributors }));
                }
                acc += rate * (next - t);
            } else {
                let since = *idle_since.get_or_insert(t);
                let timeout = self.config.stall_timeout;
                if next - since > timeout && since + timeout < self.horizon {
                    return Err(SimError::TrainingStalled { at: since, timeout });
                }
            }
            t = next;
        }
        Ok(None)
    }

    fn round_seconds(&mut self, set: &[usize]) -> Result<f64, SimError> {
        if let Some(&s) = self.round_cache.get(set) {
            return Ok(s);
        }
        let sub = self.spec.subset(set);
        let seconds = if sub.len() < 2 || !sub.has_computing_peer() {
            0.0
        } else {
            round_time(&sub, self.config.algorithm)?
        };
        self.round_cache.insert(set.to_vec(), seconds);
        Ok(seconds)
    }

    fn plan(&mut self, n: usize, m: usize) -> Result<&GroupPlan, SimError> {
        match self.plan_cache.entry((n, m)) {
            std::collections::hash_map::Entry::Occupied(e) => Ok(e.into_mut()),
            std::collections::hash_map::Entry::Vacant(e) => Ok(e.insert(groups::build_plan(n, m)?)),
        }
    }

    fn average(&mut self, start: f64) -> Result<RoundRecord, SimError> {
        let set = self.members.active(start);
        if self.last_set.as_ref() != Some(&set) || start - self.last_solve >= self.config.refresh {
            self.solves += 1;
            self.last_solve = start;
            self.last_set = Some(set.clone());
        }
        let base = self.round_seconds(&set)?;
        let mut record = RoundRecord {
            start,
            duration: 0.0,
            algorithm: self.config.algorithm,
            success: true,
            retries: 0,
            participants: set.len(),
        };
        if base == 0.0 {
            return Ok(record);
        }

        let n = set.len();
        let fail: Vec<f64> = set.iter().map(|&i| self.spec.peers[i].failure_rate).collect();
        let m = match self.config.groups {
            GroupPolicy::Whole => n,
            GroupPolicy::Fixed(m) => m.clamp(2, n),
            GroupPolicy::Optimal => groups::optimal_group_size(n, fail.iter().sum::<f64>() / n as f64)?,
        };
        let attempts = if fail.iter().all(|&p| p == 0.0) {
            vec![1; groups::rounds_needed(n, m)]
        } else {
            let plan = self.plan(n, m)?.clone();
            groups::sample_attempts(&plan, &fail, MAX_ATTEMPTS, &mut self.rng)?
        };
        let unit = base / attempts.len() as f64;
        let total: u64 = attempts.iter().sum();
        record.retries = total - attempts.len() as u64;
        record.duration = unit * total as f64;

        // Participants leaving mid-round cost their group one more attempt.
        let mut counted = 0;
        loop {
            let end = start + record.duration;
            let hits = set
                .iter()
                .flat_map(|&i| &self.members.departures[i])
                .filter(|&&t| t > start && t < end)
                .count() as u64;
            if hits == counted {
                break;
            }
            record.duration += unit * (hits - counted) as f64;
            record.retries += hits - counted;
            counted = hits;
        }
        record.success = record.retries == 0;
        Ok(record)
    }
}

pub fn simulate_training(
    spec: &CollaborationSpec,
    trace: &ChurnTrace,
    config: &TrainingConfig,
) -> Result<SimTrace, SimError> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(StrategyError::InvalidSpec(violations).into());
    }
    trace.validate()?;
    for (name, v) in [("catch_up", config.catch_up), ("refresh", config.refresh), ("stall_timeout", config.stall_timeout)] {
        if !(v >= 0.0) {
            return Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
        }
    }
    let horizon = config.horizon.unwrap_or(trace.horizon);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::InvalidConfig(format!("horizon {horizon} must be positive and finite")));
    }

    let mut sim = Simulator {
        spec,
        config,
        members: Membership::build(spec, trace, config.catch_up)?,
        horizon,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        round_cache: HashMap::new(),
        plan_cache: HashMap::new(),
        last_set: None,
        last_solve: 0.0,
        solves: 0,
        peer_samples: vec![0.0; spec.len()],
    };

    let mut steps = Vec::new();
    let mut rounds = Vec::new();
    let mut commits: Vec<f64> = Vec::new();
    let mut compute_end = 0.0_f64;
    for k in 0u64.. {
        let prev_commit = commits.last().copied().unwrap_or(0.0);
        let start = if config.dpu {
            let two_back = commits.len().checked_sub(2).map_or(0.0, |j| commits[j]);
            compute_end.max(two_back)
        } else {
            prev_commit
        };
        let Some(phase) = sim.compute(start)? else { break };
        compute_end = phase.end;
        let comm_start = if config.dpu { phase.end.max(prev_commit) } else { phase.end };
        if comm_start >= horizon {
            break;
        }
        let round = sim.average(comm_start)?;
        let commit = comm_start + round.duration;
        if commit > horizon {
            break;
        }
        steps.push(StepRecord {
            step: k,
            time: commit,
            samples: spec.batch_size,
            peers: phase.contributors,
            param_version: commits.partition_point(|&c| c <= start) as u64,
            compute_seconds: phase.end - start,
            comm_seconds: round.duration,
        });
        rounds.push(round);
        commits.push(commit);
    }

    let peer_active_time = (0..spec.len()).map(|i| sim.members.active_time(i, horizon)).collect();
    Ok(SimTrace {
        restarts: rounds.iter().filter(|r| !r.success).count() as u64,
        steps,
        averaging_rounds: rounds,
        strategy_solves: sim.solves,
        horizon,
        peer_samples: sim.peer_samples,
        peer_active_time,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyRow {
    pub algorithm: Algorithm,
    pub round_seconds: f64,
    pub steps_per_hour: f64,
    pub mean_step_seconds: f64,
}

/// Round time and one simulated hour of static training for every algorithm.
pub fn compare_strategies(spec: &CollaborationSpec, config: &TrainingConfig) -> Result<Vec<StrategyRow>, SimError> {
    let trace = ChurnTrace::static_fleet(3600.0);
    Algorithm::ALL
        .iter()
        .map(|&algorithm| {
            let run = simulate_training(
                spec,
                &trace,
                &TrainingConfig {
                    algorithm,
                    horizon: Some(3600.0),
                    ..config.clone()
                },
            )?;
            Ok(StrategyRow {
                algorithm,
                round_seconds: simulate_averaging(spec, algorithm)?,
                steps_per_hour: run.steps_per_hour(),
                mean_step_seconds: run.mean_step_interval(),
            })
        })
        .collect()
}
