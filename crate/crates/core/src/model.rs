//! Peers, collaborations and solved strategies.
//!
//! Bandwidths are held in bits per second. The JSON document format uses
//! megabits per second and peer ids; conversion happens in
//! [`CollaborationSpec::from_json`] / [`CollaborationSpec::to_json`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const DEFAULT_BITS_PER_PARAM: u32 = 32;
const MBPS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub String);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PeerId {
    fn from(s: &str) -> Self {
        PeerId(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeerSpec {
    pub id: PeerId,
    /// Samples per second this peer can compute gradients for.
    pub compute_rate: f64,
    /// Download bandwidth, bits/s.
    pub download: f64,
    /// Upload bandwidth, bits/s.
    pub upload: f64,
    pub can_compute: bool,
    /// Cannot accept incoming connections.
    pub client_mode: bool,
    /// Probability of dropping out of any given averaging round.
    pub failure_rate: f64,
}

impl PeerSpec {
    /// A computing peer with symmetric bandwidth given in Gb/s.
    pub fn worker(id: impl Into<String>, samples_per_sec: f64, gbps: f64) -> Self {
        PeerSpec {
            id: PeerId(id.into()),
            compute_rate: samples_per_sec,
            download: gbps * 1e9,
            upload: gbps * 1e9,
            can_compute: true,
            client_mode: false,
            failure_rate: 0.0,
        }
    }

    /// A peer without an accelerator that can only help with aggregation.
    pub fn auxiliary(id: impl Into<String>, gbps: f64) -> Self {
        PeerSpec {
            can_compute: false,
            compute_rate: 0.0,
            ..PeerSpec::worker(id, 0.0, gbps)
        }
    }

    pub fn with_client_mode(mut self) -> Self {
        self.client_mode = true;
        self
    }

    pub fn with_failure_rate(mut self, p: f64) -> Self {
        self.failure_rate = p;
        self
    }

    /// Peers whose gradients the collaboration waits for and who need the averaged result.
    pub fn receives_average(&self) -> bool {
        self.can_compute && !self.client_mode
    }
}

/// Pairwise throughput limits `t[i][j]` in bits/s; `None` means unlimited.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkLimits {
    n: usize,
    limits: Vec<Option<f64>>,
}

impl LinkLimits {
    pub fn unlimited(n: usize) -> Self {
        LinkLimits {
            n,
            limits: vec![None; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        if from == to {
            return None;
        }
        self.limits[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, bits_per_sec: Option<f64>) {
        self.limits[from * self.n + to] = bits_per_sec;
    }

    /// Finite limits as `(from, to, bits/s)`, row-major.
    pub fn finite(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).filter_map(move |j| self.get(i, j).map(|t| (i, j, t)))
        })
    }

    fn push_peer(&mut self) {
        let n = self.n + 1;
        let mut limits = vec![None; n * n];
        for i in 0..self.n {
            for j in 0..self.n {
                limits[i * n + j] = self.limits[i * self.n + j];
            }
        }
        self.n = n;
        self.limits = limits;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollaborationSpec {
    pub peers: Vec<PeerSpec>,
    /// Samples per optimizer step.
    pub batch_size: f64,
    pub param_count: u64,
    pub bits_per_param: u32,
    pub links: LinkLimits,
}

/// A single invariant violation. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub peer: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.peer {
            Some(i) => write!(f, "peer {i}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl CollaborationSpec {
    pub fn new(peers: Vec<PeerSpec>, batch_size: f64, param_count: u64) -> Self {
        let n = peers.len();
        CollaborationSpec {
            peers,
            batch_size,
            param_count,
            bits_per_param: DEFAULT_BITS_PER_PARAM,
            links: LinkLimits::unlimited(n),
        }
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    /// Size of one full gradient or parameter vector in bits.
    pub fn payload_bits(&self) -> f64 {
        self.param_count as f64 * self.bits_per_param as f64
    }

    pub fn with_peer(mut self, peer: PeerSpec) -> Self {
        self.peers.push(peer);
        self.links.push_peer();
        self
    }

    pub fn index_of(&self, id: &PeerId) -> Option<usize> {
        self.peers.iter().position(|p| &p.id == id)
    }

    pub fn has_computing_peer(&self) -> bool {
        self.peers.iter().any(|p| p.can_compute)
    }

    /// Keeps the peers selected by `keep`, preserving order and link limits.
    pub fn subset(&self, keep: &[usize]) -> CollaborationSpec {
        let mut links = LinkLimits::unlimited(keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                links.set(a, b, self.links.get(i, j));
            }
        }
        CollaborationSpec {
            peers: keep.iter().map(|&i| self.peers[i].clone()).collect(),
            batch_size: self.batch_size,
            param_count: self.param_count,
            bits_per_param: self.bits_per_param,
            links,
        }
    }

    /// Every invariant violation, peers first (in list order), then collaboration-wide fields.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen: HashMap<&PeerId, usize> = HashMap::new();
        for (i, p) in self.peers.iter().enumerate() {
            let mut v = |field, message: String| {
                out.push(Violation {
                    peer: Some(i),
                    field,
                    message,
                })
            };
            if let Some(first) = seen.insert(&p.id, i) {
                v("id", format!("duplicate id {:?} (first used by peer {first})", p.id.0));
            }
            if !p.compute_rate.is_finite() || p.compute_rate < 0.0 {
                v("compute_rate", format!("must be finite and >= 0, got {}", p.compute_rate));
            } else if !p.can_compute && p.compute_rate > 0.0 {
                v(
                    "compute_rate",
                    format!("peer cannot compute but declares {} samples/s", p.compute_rate),
                );
            }
            if !(p.download > 0.0) || p.download.is_nan() {
                v("download", format!("must be > 0, got {}", p.download));
            }
            if !(p.upload > 0.0) || p.upload.is_nan() {
                v("upload", format!("must be > 0, got {}", p.upload));
            }
            if !(0.0..1.0).contains(&p.failure_rate) {
                v("failure_rate", format!("failure_rate out of range [0, 1): {}", p.failure_rate));
            }
        }
        if self.peers.is_empty() {
            out.push(Violation {
                peer: None,
                field: "peers",
                message: "collaboration has no peers".into(),
            });
        } else if !self.has_computing_peer() {
            out.push(Violation {
                peer: None,
                field: "peers",
                message: "no computing peers".into(),
            });
        }
        if !(self.batch_size > 0.0) || !self.batch_size.is_finite() {
            out.push(Violation {
                peer: None,
                field: "batch_size",
                message: format!("must be > 0, got {}", self.batch_size),
            });
        }
        if self.param_count == 0 {
            out.push(Violation {
                peer: None,
                field: "param_count",
                message: "must be > 0".into(),
            });
        }
        if self.bits_per_param == 0 {
            out.push(Violation {
                peer: None,
                field: "bits_per_param",
                message: "must be > 0".into(),
            });
        }
        if self.links.len() != self.peers.len() {
            out.push(Violation {
                peer: None,
                field: "links",
                message: format!(
                    "link matrix is {0}x{0} for {1} peers",
                    self.links.len(),
                    self.peers.len()
                ),
            });
        } else {
            for (i, j, t) in self.links.finite() {
                if !(t >= 0.0) {
                    out.push(Violation {
                        peer: Some(i),
                        field: "links",
                        message: format!("limit to peer {j} must be >= 0, got {t}"),
                    });
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: SpecDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpecDocument::from(self)).expect("spec document serializes")
    }
}

fn default_true() -> bool {
    true
}

fn default_bits() -> u32 {
    DEFAULT_BITS_PER_PARAM
}

/// On-disk shape of a peer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeerDocument {
    pub id: String,
    pub samples_per_sec: f64,
    pub download_mbps: f64,
    pub upload_mbps: f64,
    #[serde(default = "default_true")]
    pub can_compute: bool,
    #[serde(default)]
    pub client_mode: bool,
    #[serde(default)]
    pub failure_rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkDocument {
    pub from: String,
    pub to: String,
    pub mbps: f64,
}

/// On-disk shape of a collaboration. Unlisted links are unlimited.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecDocument {
    pub peers: Vec<PeerDocument>,
    pub batch_size: f64,
    pub param_count: u64,
    #[serde(default = "default_bits")]
    pub bits_per_param: u32,
    #[serde(default)]
    pub links: Vec<LinkDocument>,
}

impl TryFrom<SpecDocument> for CollaborationSpec {
    type Error = ModelError;

    fn try_from(doc: SpecDocument) -> Result<Self, ModelError> {
        let peers: Vec<PeerSpec> = doc
            .peers
            .into_iter()
            .map(|p| PeerSpec {
                id: PeerId(p.id),
                compute_rate: p.samples_per_sec,
                download: p.download_mbps * MBPS,
                upload: p.upload_mbps * MBPS,
                can_compute: p.can_compute,
                client_mode: p.client_mode,
                failure_rate: p.failure_rate,
            })
            .collect();
        let mut spec = CollaborationSpec::new(peers, doc.batch_size, doc.param_count);
        spec.bits_per_param = doc.bits_per_param;
        for link in doc.links {
            let from = spec
                .index_of(&PeerId(link.from.clone()))
                .ok_or_else(|| ModelError::UnknownPeer(link.from.clone()))?;
            let to = spec
                .index_of(&PeerId(link.to.clone()))
                .ok_or_else(|| ModelError::UnknownPeer(link.to.clone()))?;
            spec.links.set(from, to, Some(link.mbps * MBPS));
        }
        Ok(spec)
    }
}

impl From<&CollaborationSpec> for SpecDocument {
    fn from(spec: &CollaborationSpec) -> Self {
        SpecDocument {
            peers: spec
                .peers
                .iter()
                .map(|p| PeerDocument {
                    id: p.id.0.clone(),
                    samples_per_sec: p.compute_rate,
                    download_mbps: p.download / MBPS,
                    upload_mbps: p.upload / MBPS,
                    can_compute: p.can_compute,
                    client_mode: p.client_mode,
                    failure_rate: p.failure_rate,
                })
                .collect(),
            batch_size: spec.batch_size,
            param_count: spec.param_count,
            bits_per_param: spec.bits_per_param,
            links: spec
                .links
                .finite()
                .map(|(i, j, t)| LinkDocument {
                    from: spec.peers[i].id.0.clone(),
                    to: spec.peers[j].id.0.clone(),
                    mbps: t / MBPS,
                })
                .collect(),
        }
    }
}

/// A solved communication strategy.
///
/// `send[i][j]` is the rate (bits/s) at which peer `i` sends local gradients to
/// reducer `j`; `reply[i][j]` is the rate at which reducer `i` returns averaged
/// partitions to peer `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyAssignment {
    pub send: Vec<Vec<f64>>,
    pub reply: Vec<Vec<f64>>,
    /// Relaxed compute indicators as returned by the solver.
    pub compute_weight: Vec<f64>,
    /// Rounded compute indicators.
    pub computes: Vec<bool>,
    /// Optimizer steps per second.
    pub throughput: f64,
    /// Share of the parameter vector each peer aggregates; sums to one.
    pub fractions: Vec<f64>,
    /// Objective of the relaxed program before rounding.
    pub relaxed_throughput: f64,
}

impl StrategyAssignment {
    /// Samples per second over the collaboration's batch size.
    pub fn compute_frequency(&self, spec: &CollaborationSpec) -> f64 {
        spec.peers
            .iter()
            .zip(&self.computes)
            .filter(|(_, c)| **c)
            .map(|(p, _)| p.compute_rate)
            .sum::<f64>()
            / spec.batch_size
    }

    /// Rate at which the slowest receiving peer collects the full averaged vector, vectors/s.
    pub fn aggregation_frequency(&self, spec: &CollaborationSpec) -> f64 {
        let bits = spec.payload_bits();
        (0..spec.len())
            .filter(|&i| spec.peers[i].receives_average())
            .map(|i| (0..spec.len()).map(|j| self.reply[j][i]).sum::<f64>() / bits)
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the structural invariants of a solved strategy. Returns a description of the first failure.
    pub fn check_invariants(&self, spec: &CollaborationSpec) -> Result<(), String> {
        let n = spec.len();
        if self.send.len() != n || self.reply.len() != n || self.fractions.len() != n {
            return Err("dimension mismatch".into());
        }
        let negative = |m: &Vec<Vec<f64>>| m.iter().flatten().any(|v| *v < 0.0);
        if negative(&self.send) || negative(&self.reply) {
            return Err("negative flow".into());
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("fractions sum to {total}"));
        }
        for (i, p) in spec.peers.iter().enumerate() {
            if p.client_mode && self.fractions[i] != 0.0 {
                return Err(format!("client-mode peer {i} aggregates"));
            }
        }
        let rel = |bound: f64| self.throughput <= bound * (1.0 + 1e-6) + 1e-12;
        if !rel(self.compute_frequency(spec)) {
            return Err(format!(
                "throughput {} above compute frequency {}",
                self.throughput,
                self.compute_frequency(spec)
            ));
        }
        if !rel(self.aggregation_frequency(spec)) {
            return Err(format!(
                "throughput {} above aggregation frequency {}",
                self.throughput,
                self.aggregation_frequency(spec)
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy serializes")
    }
}
