//! Independent reference implementations used by the integration tests.
//!
//! None of these call into the solver; they derive values from first
//! principles so that agreement is meaningful.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarm_core::{CollaborationSpec, PeerSpec};

/// 25.6M parameters, the payload used for the averaging benchmarks.
pub const RESNET_PARAMS: u64 = 25_600_000;

fn uniform_fleet(prefix: &str, n: usize, gbps: f64) -> Vec<PeerSpec> {
    (0..n).map(|i| PeerSpec::worker(format!("{prefix}{i}"), 1.0, gbps)).collect()
}

/// Averaging benchmark fleets A to D.
pub fn benchmark_setup(name: char) -> CollaborationSpec {
    let peers = match name {
        'A' => uniform_fleet("a", 8, 1.0),
        'B' => uniform_fleet("b", 16, 0.2),
        'C' => {
            let mut p = uniform_fleet("a", 8, 1.0);
            p.extend(uniform_fleet("b", 16, 0.2));
            p
        }
        'D' => {
            let mut p = uniform_fleet("b", 16, 0.2);
            p.push(PeerSpec::worker("fast", 1.0, 2.5));
            p
        }
        other => panic!("unknown setup {other}"),
    };
    let n = peers.len() as f64;
    CollaborationSpec::new(peers, n, RESNET_PARAMS)
}

/// Measured round times (AR, PS, adaptive) in seconds for setups A to D.
pub const MEASURED: [(char, [f64; 3]); 4] = [
    ('A', [1.19, 4.73, 1.20]),
    ('B', [5.3, 39.6, 5.3]),
    ('C', [5.69, 14.1, 2.96]),
    ('D', [5.3, 3.22, 3.18]),
];

fn duplex(p: &PeerSpec) -> f64 {
    p.download.min(p.upload)
}

/// Butterfly all-reduce: reduce-scatter then all-gather, each moving
/// `(n-1)/n` of the payload through the slowest peer.
pub fn allreduce_oracle(spec: &CollaborationSpec) -> f64 {
    let n = spec.len() as f64;
    let slowest = spec.peers.iter().map(duplex).fold(f64::INFINITY, f64::min);
    2.0 * (n - 1.0) / n * spec.payload_bits() / slowest
}

/// Best single server; gather and broadcast overlap on full-duplex links.
pub fn parameter_server_oracle(spec: &CollaborationSpec) -> f64 {
    let bits = spec.payload_bits();
    let n = spec.len();
    (0..n)
        .map(|s| {
            let server = &spec.peers[s];
            let gather_in = (n - 1) as f64 * bits / server.download;
            let bcast_out = (n - 1) as f64 * bits / server.upload;
            let workers = (0..n)
                .filter(|&w| w != s)
                .map(|w| bits / duplex(&spec.peers[w]))
                .fold(0.0, f64::max);
            gather_in.max(bcast_out).max(workers)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Feasible range of peer `i`'s aggregation share at vector rate `y` (bits/s)
/// under a partitioned reduce: every computing peer sends the reducer its
/// slice, and the reducer returns the averaged slice to every receiver.
///
/// Shares sum to one. The flow program does not require that (receivers may
/// assemble the vector from overlapping pieces), so this schedule is a lower
/// bound on its optimum that is tight on symmetric fleets.
fn share_range(spec: &CollaborationSpec, computes: &[bool], i: usize, y: f64) -> Option<(f64, f64)> {
    let p = &spec.peers[i];
    let others_compute = (0..spec.len()).any(|k| k != i && computes[k]);
    if p.client_mode && others_compute {
        // Nothing may flow into a client, so it cannot reduce.
        let need_up = if computes[i] { y } else { 0.0 };
        return (need_up <= p.upload * (1.0 + 1e-12)).then_some((0.0, 0.0));
    }
    let receivers: Vec<bool> = spec.peers.iter().map(PeerSpec::receives_average).collect();
    let senders_in = (0..spec.len()).filter(|&k| k != i && computes[k]).count() as f64;
    let receivers_out = (0..spec.len()).filter(|&j| j != i && receivers[j]).count() as f64;
    let recv = if receivers[i] { 1.0 } else { 0.0 };
    let send = if computes[i] { 1.0 } else { 0.0 };
    // download: y * (f * senders_in + recv * (1 - f)) <= d
    // upload:   y * (send * (1 - f) + f * receivers_out) <= u
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (coef, constant, cap) in [
        (senders_in - recv, recv, p.download),
        (receivers_out - send, send, p.upload),
    ] {
        let budget = cap / y - constant;
        if coef.abs() < 1e-15 {
            if budget < -1e-12 {
                return None;
            }
        } else if coef > 0.0 {
            hi = hi.min(budget / coef);
        } else {
            lo = lo.max(budget / coef);
        }
    }
    (lo <= hi + 1e-12).then_some((lo.max(0.0), hi.min(1.0).max(lo.max(0.0))))
}

fn rate_feasible(spec: &CollaborationSpec, computes: &[bool], y: f64) -> bool {
    let mut lo_sum = 0.0;
    let mut hi_sum = 0.0;
    for i in 0..spec.len() {
        match share_range(spec, computes, i, y) {
            Some((lo, hi)) => {
                lo_sum += lo;
                hi_sum += hi;
            }
            None => return false,
        }
    }
    lo_sum <= 1.0 + 1e-12 && hi_sum >= 1.0 - 1e-12
}

/// Fastest averaging rate in vectors/s when the flagged peers compute, by
/// bisection on the partitioned-reduce model. Only valid for unlimited links.
pub fn aggregation_rate_oracle(spec: &CollaborationSpec, computes: &[bool]) -> f64 {
    assert!(spec.links.finite().next().is_none(), "oracle assumes unlimited links");
    let cap = spec.peers.iter().map(|p| p.download.max(p.upload)).sum::<f64>() * 4.0;
    if rate_feasible(spec, computes, cap) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0f64, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && rate_feasible(spec, computes, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo / spec.payload_bits()
}

/// Range of peer `i`'s share over all partitions achieving the oracle's optimal rate.
pub fn optimal_share_range(spec: &CollaborationSpec, computes: &[bool], i: usize) -> (f64, f64) {
    let y = aggregation_rate_oracle(spec, computes) * spec.payload_bits() * (1.0 - 1e-9);
    let ranges: Vec<(f64, f64)> = (0..spec.len())
        .map(|k| share_range(spec, computes, k, y).expect("feasible just below the optimum"))
        .collect();
    let others_lo: f64 = ranges.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, r)| r.0).sum();
    let others_hi: f64 = ranges.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, r)| r.1).sum();
    (ranges[i].0.max(1.0 - others_hi), ranges[i].1.min(1.0 - others_lo))
}

/// Best throughput over every binary choice of computing peers, with the
/// aggregation rate of each choice supplied by `rate`.
pub fn binary_enumeration_throughput(spec: &CollaborationSpec, rate: impl Fn(&[bool]) -> f64) -> f64 {
    let n = spec.len();
    let mut best: f64 = 0.0;
    for mask in 1u32..(1 << n) {
        let computes: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if (0..n).any(|i| computes[i] && !spec.peers[i].can_compute) {
            continue;
        }
        let compute: f64 = (0..n).filter(|&i| computes[i]).map(|i| spec.peers[i].compute_rate).sum::<f64>() / spec.batch_size;
        best = best.max(compute.min(rate(&computes)));
    }
    best
}

/// Random small spec with unlimited links; `n <= 3` keeps enumeration cheap.
pub fn random_small_spec(rng: &mut ChaCha8Rng, n: usize) -> CollaborationSpec {
    let mut peers: Vec<PeerSpec> = (0..n)
        .map(|i| {
            let gbps = rng.gen_range(0.05..2.0);
            let mut p = PeerSpec::worker(format!("r{i}"), rng.gen_range(0.5..20.0), gbps);
            p.upload = rng.gen_range(0.05..2.0) * 1e9;
            if rng.gen_bool(0.2) {
                p.can_compute = false;
                p.compute_rate = 0.0;
            }
            if rng.gen_bool(0.15) {
                p.client_mode = true;
            }
            p
        })
        .collect();
    if !peers.iter().any(|p| p.receives_average()) {
        peers[0].can_compute = true;
        peers[0].client_mode = false;
        peers[0].compute_rate = rng.gen_range(0.5..20.0);
    }
    CollaborationSpec::new(peers, rng.gen_range(4.0..128.0), rng.gen_range(1_000_000..30_000_000))
}

/// Monte-Carlo mean and standard error of the retry model: each of
/// `ceil(log_m n)` rounds runs `ceil(n/m)` groups that each retry until all
/// `m` members survive, and the round lasts as long as its slowest group.
pub fn monte_carlo_iterations(n: usize, m: usize, p: f64, trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rounds = 0;
    let mut reach = 1;
    while reach < n {
        reach *= m;
        rounds += 1;
    }
    let groups = n.div_ceil(m);
    let q = (1.0 - p).powi(m as i32);
    let log_fail = (1.0 - q).ln();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut total = 0.0;
        for _ in 0..rounds {
            let mut worst = 1.0f64;
            if q < 1.0 {
                for _ in 0..groups {
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    let k = (u.ln() / log_fail).floor() + 1.0;
                    worst = worst.max(k);
                }
            }
            total += worst;
        }
        sum += total;
        sum_sq += total * total;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = (sum_sq / t - mean * mean).max(0.0);
    (mean, (var / t).sqrt())
}

/// Round count by repeated division, independent of the library's helper.
pub fn ceil_log(n: usize, m: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    (1..).find(|&k| (m as f64).powi(k as i32) >= n as f64 - 1e-9).unwrap()
}
