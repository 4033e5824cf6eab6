//! Averaging-strategy optimization.
//!
//! The planner maximizes optimizer steps per second over three kinds of
//! decision: which peers compute gradients (`c`), how fast each peer ships
//! gradient partitions to each reducer (`a`), and how fast each reducer
//! returns averaged partitions (`g`). The max-min objective is linearized with
//! a surrogate `ξ`, and the binary compute indicators are relaxed to `[0, 1]`
//! through big-M coupling rows.
//!
//! [`build_lp`] emits that program row for row. [`solve_strategy`] solves an
//! equivalent but much smaller program: the `n³` coupling rows
//! `g_ij <= a_ki + (1 - c_k) d_i` are routed through one auxiliary rate `r_i`
//! per reducer (`g_ij <= r_i <= a_ki + (1 - c_k) d_i`), and the free in-node
//! transfers `a_ii`, `g_ii` are folded into `r_i`.
//!
//! Rates inside the programs are measured in parameter vectors per second
//! (bits/s divided by the payload size), which keeps every coefficient near
//! one for realistic inputs.

use std::fmt;

use log::debug;
use swarm_lp::{solve, Bound, LinearProgram, LpError, LpSolution, Relation, Status};
use thiserror::Error;

use crate::model::{CollaborationSpec, StrategyAssignment, Violation};

/// A relaxed compute indicator at or above this value rounds to "computes".
pub const ROUNDING_THRESHOLD: f64 = 1.0 - 1e-6;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("invalid collaboration: {}", join(.0))]
    InvalidSpec(Vec<Violation>),
    #[error("no computing peers")]
    NoComputingPeers,
    #[error("every computing peer is in client mode, so nobody can receive the averaged result")]
    NoReceivers,
    #[error("strategy program has status {0:?}; valid collaborations should always be solvable")]
    LpInfeasible(Status),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("need at least 2 peers, got {0}")]
    TooFewPeers(usize),
    #[error("server index {index} out of range for {n} peers")]
    BadServer { index: usize, n: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn check_spec(spec: &CollaborationSpec) -> Result<(), StrategyError> {
    if !spec.has_computing_peer() {
        return Err(StrategyError::NoComputingPeers);
    }
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(StrategyError::InvalidSpec(violations))
    }
}

/// Peers whose gradients are averaged and who must download the result.
fn receivers(spec: &CollaborationSpec) -> Vec<bool> {
    spec.peers.iter().map(|p| p.receives_average()).collect()
}

fn max_compute_frequency(spec: &CollaborationSpec) -> f64 {
    spec.peers
        .iter()
        .filter(|p| p.can_compute)
        .map(|p| p.compute_rate)
        .sum::<f64>()
        / spec.batch_size
}

/// Big-M for the compute coupling rows of reducer `i`, in vectors/s.
fn coupling_bound(spec: &CollaborationSpec, i: usize) -> f64 {
    let d = spec.peers[i].download / spec.payload_bits();
    if d.is_finite() {
        d
    } else {
        max_compute_frequency(spec).max(1.0)
    }
}

/// Row counts of the literal program, by constraint family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FamilyRows {
    pub compute: usize,
    pub aggregation: usize,
    pub coupling: usize,
    pub download: usize,
    pub upload: usize,
    pub link: usize,
}

impl FamilyRows {
    pub fn total(&self) -> usize {
        self.compute + self.aggregation + self.coupling + self.download + self.upload + self.link
    }
}

/// The literal strategy program with its variable index maps.
#[derive(Clone, Debug)]
pub struct StrategyProblem {
    pub lp: LinearProgram,
    pub families: FamilyRows,
    n: usize,
}

impl StrategyProblem {
    pub const XI: usize = 0;

    pub fn c(&self, i: usize) -> usize {
        1 + i
    }

    pub fn a(&self, i: usize, j: usize) -> usize {
        1 + self.n + i * self.n + j
    }

    pub fn g(&self, i: usize, j: usize) -> usize {
        1 + self.n + self.n * self.n + i * self.n + j
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        solve(&self.lp)
    }
}

/// Emits the full relaxed program with `2n² + n + 1` variables.
///
/// Families, in row order: the compute bound on `ξ`; one aggregation bound per
/// computing, non-client peer; `g_ij <= a_ki + (1 - c_k) d_i` for every `i`,
/// `j` and computing `k`; download and upload caps for peers with finite
/// bandwidth; pairwise caps for finite `t_ij`. Non-computing peers have `c`
/// fixed at 0 and client-mode peers have every incoming `a`, `g` fixed at 0.
pub fn build_lp(spec: &CollaborationSpec) -> Result<StrategyProblem, StrategyError> {
    check_spec(spec)?;
    let n = spec.len();
    let bits = spec.payload_bits();
    let mut p = StrategyProblem {
        lp: LinearProgram::new(2 * n * n + n + 1),
        families: FamilyRows::default(),
        n,
    };
    p.lp.set_objective(StrategyProblem::XI, 1.0);
    let rcv = receivers(spec);

    for (i, peer) in spec.peers.iter().enumerate() {
        let c = p.c(i);
        p.lp.set_bound(c, if peer.can_compute { Bound::new(0.0, 1.0) } else { Bound::fixed(0.0) });
        if peer.client_mode {
            for j in (0..n).filter(|&j| j != i) {
                let (a, g) = (p.a(j, i), p.g(j, i));
                p.lp.set_bound(a, Bound::fixed(0.0));
                p.lp.set_bound(g, Bound::fixed(0.0));
            }
        }
    }

    let mut row: Vec<(usize, f64)> = vec![(StrategyProblem::XI, 1.0)];
    for (i, peer) in spec.peers.iter().enumerate() {
        if peer.can_compute {
            row.push((p.c(i), -peer.compute_rate / spec.batch_size));
        }
    }
    p.lp.add_sparse(&row, Relation::Le, 0.0);
    p.families.compute = 1;

    for i in (0..n).filter(|&i| rcv[i]) {
        let mut row = vec![(StrategyProblem::XI, 1.0)];
        row.extend((0..n).map(|j| (p.g(j, i), -1.0)));
        p.lp.add_sparse(&row, Relation::Le, 0.0);
        p.families.aggregation += 1;
    }

    for i in 0..n {
        let m = coupling_bound(spec, i);
        for j in 0..n {
            for k in (0..n).filter(|&k| spec.peers[k].can_compute) {
                let row = [(p.g(i, j), 1.0), (p.a(k, i), -1.0), (p.c(k), m)];
                p.lp.add_sparse(&row, Relation::Le, m);
                p.families.coupling += 1;
            }
        }
    }

    for (i, peer) in spec.peers.iter().enumerate() {
        if peer.download.is_finite() {
            let row: Vec<_> = (0..n)
                .filter(|&j| j != i)
                .flat_map(|j| [(p.a(j, i), 1.0), (p.g(j, i), 1.0)])
                .collect();
            p.lp.add_sparse(&row, Relation::Le, peer.download / bits);
            p.families.download += 1;
        }
    }
    for (i, peer) in spec.peers.iter().enumerate() {
        if peer.upload.is_finite() {
            let row: Vec<_> = (0..n)
                .filter(|&j| j != i)
                .flat_map(|j| [(p.a(i, j), 1.0), (p.g(i, j), 1.0)])
                .collect();
            p.lp.add_sparse(&row, Relation::Le, peer.upload / bits);
            p.families.upload += 1;
        }
    }
    for (i, j, t) in spec.links.finite() {
        let row = [(p.a(i, j), 1.0), (p.g(i, j), 1.0)];
        p.lp.add_sparse(&row, Relation::Le, t / bits);
        p.families.link += 1;
    }
    Ok(p)
}

/// The relaxed program in compact form, with its index maps.
struct Relaxed {
    lp: LinearProgram,
    n: usize,
    c: Vec<usize>,
    a: Vec<Option<usize>>,
    g: Vec<Option<usize>>,
    r: Vec<usize>,
}

const XI: usize = 0;

fn clamp(x: &[f64], var: Option<usize>) -> f64 {
    var.map_or(0.0, |v| x[v].max(0.0))
}

impl Relaxed {
    fn a(&self, i: usize, j: usize) -> Option<usize> {
        self.a[i * self.n + j]
    }

    fn g(&self, i: usize, j: usize) -> Option<usize> {
        self.g[i * self.n + j]
    }

    fn build(spec: &CollaborationSpec) -> Relaxed {
        let n = spec.len();
        let bits = spec.payload_bits();
        let rcv = receivers(spec);
        let mut next = 1;
        let mut alloc = || {
            next += 1;
            next - 1
        };
        let c: Vec<usize> = (0..n).map(|_| alloc()).collect();
        let mut pair = || -> Vec<Option<usize>> {
            (0..n * n)
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    (i != j && !spec.peers[j].client_mode).then(&mut alloc)
                })
                .collect()
        };
        let a = pair();
        let g = pair();
        let r: Vec<usize> = (0..n).map(|_| alloc()).collect();

        let mut p = Relaxed {
            lp: LinearProgram::new(next),
            n,
            c,
            a,
            g,
            r,
        };
        p.lp.set_objective(XI, 1.0);
        for (i, peer) in spec.peers.iter().enumerate() {
            let bound = if peer.can_compute { Bound::new(0.0, 1.0) } else { Bound::fixed(0.0) };
            p.lp.set_bound(p.c[i], bound);
        }

        let mut row = vec![(XI, 1.0)];
        for (i, peer) in spec.peers.iter().enumerate() {
            if peer.can_compute {
                row.push((p.c[i], -peer.compute_rate / spec.batch_size));
            }
        }
        p.lp.add_sparse(&row, Relation::Le, 0.0);

        for i in (0..n).filter(|&i| rcv[i]) {
            let mut row = vec![(XI, 1.0), (p.r[i], -1.0)];
            row.extend((0..n).filter_map(|j| p.g(j, i)).map(|v| (v, -1.0)));
            p.lp.add_sparse(&row, Relation::Le, 0.0);
        }

        for i in 0..n {
            for j in 0..n {
                if let Some(g) = p.g(i, j) {
                    p.lp.add_sparse(&[(g, 1.0), (p.r[i], -1.0)], Relation::Le, 0.0);
                }
            }
            let m = coupling_bound(spec, i);
            for k in (0..n).filter(|&k| k != i && spec.peers[k].can_compute) {
                let mut row = vec![(p.r[i], 1.0), (p.c[k], m)];
                if let Some(a) = p.a(k, i) {
                    row.push((a, -1.0));
                }
                p.lp.add_sparse(&row, Relation::Le, m);
            }
        }

        for (i, peer) in spec.peers.iter().enumerate() {
            if peer.download.is_finite() {
                let row: Vec<_> = (0..n)
                    .flat_map(|j| [p.a(j, i), p.g(j, i)])
                    .flatten()
                    .map(|v| (v, 1.0))
                    .collect();
                if !row.is_empty() {
                    p.lp.add_sparse(&row, Relation::Le, peer.download / bits);
                }
            }
            if peer.upload.is_finite() {
                let row: Vec<_> = (0..n)
                    .flat_map(|j| [p.a(i, j), p.g(i, j)])
                    .flatten()
                    .map(|v| (v, 1.0))
                    .collect();
                if !row.is_empty() {
                    p.lp.add_sparse(&row, Relation::Le, peer.upload / bits);
                }
            }
        }
        for (i, j, t) in spec.links.finite() {
            let row: Vec<_> = [p.a(i, j), p.g(i, j)].into_iter().flatten().map(|v| (v, 1.0)).collect();
            if !row.is_empty() {
                p.lp.add_sparse(&row, Relation::Le, t / bits);
            }
        }
        p
    }

    /// `(send, reply)` in vectors/s; the diagonal of `reply` holds `r_i` for receivers.
    fn flows(&self, x: &[f64], rcv: &[bool]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut send = vec![vec![0.0; n]; n];
        let mut reply = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                send[i][j] = clamp(x, self.a(i, j));
                reply[i][j] = clamp(x, self.g(i, j));
            }
            if rcv[i] {
                reply[i][i] = x[self.r[i]].max(0.0);
            }
        }
        (send, reply)
    }
}

/// The aggregation-only program for a fixed set of computing peers.
///
/// With `c` pinned, a computing peer `k` never needs to send reducer `i` more
/// than `r_i`, so `a_ki = r_i` is substituted directly and the coupling rows
/// disappear.
struct Pinned {
    lp: LinearProgram,
    n: usize,
    computes: Vec<bool>,
    client: Vec<bool>,
    g: Vec<Option<usize>>,
    r: Vec<usize>,
}

impl Pinned {
    fn g(&self, i: usize, j: usize) -> Option<usize> {
        self.g[i * self.n + j]
    }

    fn build(spec: &CollaborationSpec, computes: &[bool]) -> Pinned {
        let n = spec.len();
        let bits = spec.payload_bits();
        let rcv = receivers(spec);
        let client = |i: usize| spec.peers[i].client_mode;
        let r: Vec<usize> = (1..=n).collect();
        let mut next = n + 1;
        let g: Vec<Option<usize>> = (0..n * n)
            .map(|ij| {
                let (i, j) = (ij / n, ij % n);
                (i != j && !client(j)).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let mut p = Pinned {
            lp: LinearProgram::new(next),
            n,
            computes: computes.to_vec(),
            client: spec.peers.iter().map(|p| p.client_mode).collect(),
            g,
            r,
        };
        p.lp.set_objective(XI, 1.0);
        // Senders into reducer i, i.e. computing peers other than i.
        let senders = |i: usize| (0..n).filter(move |&k| k != i && computes[k]);
        for i in 0..n {
            if client(i) && senders(i).next().is_some() {
                p.lp.set_bound(p.r[i], Bound::fixed(0.0));
            }
        }

        for i in (0..n).filter(|&i| rcv[i]) {
            let mut row = vec![(XI, 1.0), (p.r[i], -1.0)];
            row.extend((0..n).filter_map(|j| p.g(j, i)).map(|v| (v, -1.0)));
            p.lp.add_sparse(&row, Relation::Le, 0.0);
        }
        for i in 0..n {
            for j in 0..n {
                if let Some(g) = p.g(i, j) {
                    p.lp.add_sparse(&[(g, 1.0), (p.r[i], -1.0)], Relation::Le, 0.0);
                }
            }
        }
        for (i, peer) in spec.peers.iter().enumerate() {
            if peer.download.is_finite() && !client(i) {
                let mut row = vec![(p.r[i], senders(i).count() as f64)];
                row.extend((0..n).filter_map(|j| p.g(j, i)).map(|v| (v, 1.0)));
                p.lp.add_sparse(&row, Relation::Le, peer.download / bits);
            }
            if peer.upload.is_finite() {
                let mut row: Vec<(usize, f64)> = Vec::new();
                if computes[i] {
                    row.extend((0..n).filter(|&t| t != i && !client(t)).map(|t| (p.r[t], 1.0)));
                }
                row.extend((0..n).filter_map(|j| p.g(i, j)).map(|v| (v, 1.0)));
                if !row.is_empty() {
                    p.lp.add_sparse(&row, Relation::Le, peer.upload / bits);
                }
            }
        }
        for (k, i, t) in spec.links.finite() {
            if client(i) {
                continue;
            }
            let mut row = vec![];
            if computes[k] {
                row.push((p.r[i], 1.0));
            }
            row.extend(p.g(k, i).map(|v| (v, 1.0)));
            if !row.is_empty() {
                p.lp.add_sparse(&row, Relation::Le, t / bits);
            }
        }
        p
    }

    fn flows(&self, x: &[f64], rcv: &[bool]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut send = vec![vec![0.0; n]; n];
        let mut reply = vec![vec![0.0; n]; n];
        for i in 0..n {
            let r = x[self.r[i]].max(0.0);
            for j in 0..n {
                reply[i][j] = clamp(x, self.g(i, j));
                if self.computes[j] && j != i && !self.client[i] {
                    send[j][i] = r;
                }
            }
            if rcv[i] {
                reply[i][i] = r;
            }
        }
        (send, reply)
    }
}

/// Optimal relaxed `ξ` (steps/s) via the compact program, without rounding.
pub fn relaxed_throughput(spec: &CollaborationSpec) -> Result<f64, StrategyError> {
    check_spec(spec)?;
    if !receivers(spec).contains(&true) {
        return Err(StrategyError::NoReceivers);
    }
    let sol = solve(&Relaxed::build(spec).lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective_value),
        s => Err(StrategyError::LpInfeasible(s)),
    }
}

/// Fastest full-vector aggregation rate (vectors/s) when the peers flagged in
/// `computes` all contribute gradients. `f64::INFINITY` when no transfer is
/// needed at all.
pub fn aggregation_rate(spec: &CollaborationSpec, computes: &[bool]) -> Result<f64, StrategyError> {
    check_spec(spec)?;
    if !receivers(spec).contains(&true) {
        return Err(StrategyError::NoReceivers);
    }
    let sol = solve(&Pinned::build(spec, computes).lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective_value),
        Status::Unbounded => Ok(f64::INFINITY),
        s => Err(StrategyError::LpInfeasible(s)),
    }
}

/// Solves for the throughput-maximizing strategy.
///
/// The relaxed program fixes which peers compute (indicators rounded at
/// [`ROUNDING_THRESHOLD`]). A second solve with those indicators pinned and
/// the compute bound removed picks the fastest aggregation flows for that
/// choice, which also makes the returned flows independent of ties in the
/// relaxed optimum when compute is the bottleneck.
pub fn solve_strategy(spec: &CollaborationSpec) -> Result<StrategyAssignment, StrategyError> {
    check_spec(spec)?;
    let rcv = receivers(spec);
    if !rcv.contains(&true) {
        return Err(StrategyError::NoReceivers);
    }
    let bits = spec.payload_bits();

    let relaxed = Relaxed::build(spec);
    let first = solve(&relaxed.lp)?;
    if first.status != Status::Optimal {
        return Err(StrategyError::LpInfeasible(first.status));
    }
    let weights: Vec<f64> = relaxed.c.iter().map(|&v| first.x[v]).collect();
    let mut computes: Vec<bool> = spec
        .peers
        .iter()
        .zip(&weights)
        .map(|(p, &c)| p.can_compute && c >= ROUNDING_THRESHOLD)
        .collect();
    if !computes.contains(&true) {
        debug!("no compute indicator survived rounding; falling back to every capable peer");
        computes = spec.peers.iter().map(|p| p.can_compute).collect();
    }

    let pinned = Pinned::build(spec, &computes);
    let second = solve(&pinned.lp)?;
    let (send, reply, own, aggregation) = match second.status {
        Status::Optimal => {
            let (s, r) = pinned.flows(&second.x, &rcv);
            let own = pinned.r.iter().map(|&v| second.x[v].max(0.0)).collect::<Vec<_>>();
            (s, r, own, second.objective_value)
        }
        Status::Unbounded => {
            let (s, r) = relaxed.flows(&first.x, &rcv);
            let own = relaxed.r.iter().map(|&v| first.x[v].max(0.0)).collect::<Vec<_>>();
            (s, r, own, f64::INFINITY)
        }
        s => return Err(StrategyError::LpInfeasible(s)),
    };
    debug!(
        "strategy: relaxed xi {:.6}, aggregation {:.6} vectors/s, {} + {} pivots",
        first.objective_value, aggregation, first.iterations, second.iterations
    );

    let compute: f64 = spec
        .peers
        .iter()
        .zip(&computes)
        .filter(|(_, c)| **c)
        .map(|(p, _)| p.compute_rate)
        .sum::<f64>()
        / spec.batch_size;
    let fractions = fractions(spec, &rcv, &reply, &own);
    let scale = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        m.into_iter().map(|row| row.into_iter().map(|v| v * bits).collect()).collect()
    };

    let assignment = StrategyAssignment {
        send: scale(send),
        reply: scale(reply),
        compute_weight: weights,
        computes,
        throughput: compute.min(aggregation),
        fractions,
        relaxed_throughput: first.objective_value,
    };
    debug_assert!(
        assignment.check_invariants(spec).is_ok(),
        "{:?}",
        assignment.check_invariants(spec)
    );
    Ok(assignment)
}

/// Shares proportional to each reducer's slowest return flow to a receiver.
/// `own[i]` is the in-node rate, used when `i` has no other receiver to serve.
fn fractions(spec: &CollaborationSpec, rcv: &[bool], reply: &[Vec<f64>], own: &[f64]) -> Vec<f64> {
    let n = spec.len();
    let mut rate: Vec<f64> = (0..n)
        .map(|i| {
            if spec.peers[i].client_mode {
                return 0.0;
            }
            let slowest = (0..n)
                .filter(|&j| j != i && rcv[j])
                .map(|j| reply[i][j])
                .fold(f64::INFINITY, f64::min);
            if slowest.is_finite() {
                slowest
            } else {
                own[i]
            }
        })
        .collect();
    let peak = rate.iter().cloned().fold(0.0, f64::max);
    for v in rate.iter_mut() {
        if *v <= peak * 1e-9 {
            *v = 0.0;
        }
    }
    let total: f64 = rate.iter().sum();
    if total > 0.0 && total.is_finite() {
        rate.iter().map(|v| v / total).collect()
    } else {
        let k = rcv.iter().filter(|r| **r).count() as f64;
        rcv.iter().map(|&r| if r { 1.0 / k } else { 0.0 }).collect()
    }
}

/// Slowest per-peer bandwidth seen by a ring/butterfly participant: its own
/// download and upload, and every finite link touching it.
fn bottleneck(spec: &CollaborationSpec, i: usize) -> f64 {
    let p = &spec.peers[i];
    (0..spec.len())
        .flat_map(|j| [spec.links.get(i, j), spec.links.get(j, i)])
        .flatten()
        .fold(p.download.min(p.upload), f64::min)
}

/// Seconds per butterfly all-reduce round: reduce-scatter then all-gather,
/// each moving `(n - 1)/n` of the vector through the slowest peer.
pub fn throughput_allreduce(spec: &CollaborationSpec) -> Result<f64, StrategyError> {
    let n = spec.len();
    if n < 2 {
        return Err(StrategyError::TooFewPeers(n));
    }
    let slowest = (0..n).map(|i| bottleneck(spec, i)).fold(f64::INFINITY, f64::min);
    if slowest.is_infinite() {
        return Ok(0.0);
    }
    Ok(2.0 * (n as f64 - 1.0) / n as f64 * spec.payload_bits() / slowest)
}

/// Seconds per parameter-server round with `server` aggregating everything.
///
/// Gather then broadcast; within each phase the server and the workers
/// transfer concurrently, so a phase lasts as long as its slowest endpoint.
pub fn throughput_parameter_server(spec: &CollaborationSpec, server: usize) -> Result<f64, StrategyError> {
    let n = spec.len();
    if server >= n {
        return Err(StrategyError::BadServer { index: server, n });
    }
    let bits = spec.payload_bits();
    let srv = &spec.peers[server];
    let workers = (n - 1) as f64;
    let mut gather = workers * bits / srv.download;
    let mut broadcast = workers * bits / srv.upload;
    for (j, w) in spec.peers.iter().enumerate().filter(|(j, _)| *j != server) {
        let up = spec.links.get(j, server).map_or(w.upload, |t| t.min(w.upload));
        let down = spec.links.get(server, j).map_or(w.download, |t| t.min(w.download));
        gather = gather.max(bits / up);
        broadcast = broadcast.max(bits / down);
    }
    Ok(gather.max(broadcast))
}

/// The peer with the largest duplex bandwidth; first index wins ties.
pub fn best_server(spec: &CollaborationSpec) -> usize {
    (0..spec.len())
        .fold((0, f64::NEG_INFINITY), |(best, bw), i| {
            let p = &spec.peers[i];
            let cand = p.download.min(p.upload);
            if cand > bw {
                (i, cand)
            } else {
                (best, bw)
            }
        })
        .0
}

/// Averaging algorithm for one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AllReduce,
    ParameterServer,
    Adaptive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::AllReduce, Algorithm::ParameterServer, Algorithm::Adaptive];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::AllReduce => "all_reduce",
            Algorithm::ParameterServer => "parameter_server",
            Algorithm::Adaptive => "adaptive",
        })
    }
}

/// Seconds to average one full vector with `algo` (parameter server on [`best_server`]).
///
/// Adaptive rounds assume every capable peer contributes gradients and use
/// the aggregation-only optimum.
pub fn round_time(spec: &CollaborationSpec, algo: Algorithm) -> Result<f64, StrategyError> {
    match algo {
        Algorithm::AllReduce => throughput_allreduce(spec),
        Algorithm::ParameterServer => throughput_parameter_server(spec, best_server(spec)),
        Algorithm::Adaptive => {
            let computes: Vec<bool> = spec.peers.iter().map(|p| p.can_compute).collect();
            Ok(1.0 / aggregation_rate(spec, &computes)?)
        }
    }
}
