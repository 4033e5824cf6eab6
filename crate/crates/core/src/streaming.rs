//! Shard scheduling, shuffle buffer and weighted dataset mixing.
//!
//! A [`ShardStream`] draws training batches for one consumer. Each refill
//! first picks a source at random in proportion to its mixing weight, then
//! takes the next example of that source's current shard. A source moves to
//! a new shard when the current one runs dry, preferring the shards held by
//! the fewest peers according to a [`MetadataStore`].
//!
//! [`LocalShards`] models the bounded on-disk shard cache of one peer: new
//! shards come from [`choose_next_shard`], and when the cache is full the
//! most replicated shard is evicted.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BUFFER: usize = 10_000;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("all shards consumed and the shuffle buffer is empty")]
    SourceExhausted,
    #[error("shard {0:?} has no remaining replica")]
    ShardUnavailable(String),
    #[error("invalid shard catalog: {0}")]
    InvalidCatalog(String),
    #[error("replica count of shard {0:?} would drop below zero")]
    ReplicaUnderflow(String),
    #[error("cannot read shard file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub id: String,
    pub n_examples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub id: String,
    pub weight: f64,
    pub shards: Vec<ShardInfo>,
}

/// Sources with their shards and mixing weights; serializes as the shard manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardCatalog {
    pub sources: Vec<SourceInfo>,
}

impl ShardCatalog {
    pub fn new(sources: Vec<SourceInfo>) -> Result<Self, StreamError> {
        let catalog = ShardCatalog { sources };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_json(text: &str) -> Result<Self, StreamError> {
        let catalog: ShardCatalog = serde_json::from_str(text)?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.sources.is_empty() {
            return Err(StreamError::InvalidCatalog("no sources".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.sources {
            if !(s.weight > 0.0 && s.weight.is_finite()) {
                return Err(StreamError::InvalidCatalog(format!("source {} has weight {}", s.id, s.weight)));
            }
            for shard in &s.shards {
                if !seen.insert(shard.id.as_str()) {
                    return Err(StreamError::InvalidCatalog(format!("shard id {} is not unique", shard.id)));
                }
            }
        }
        Ok(())
    }

    pub fn shard_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().flat_map(|s| s.shards.iter().map(|sh| sh.id.as_str()))
    }

    /// Normalized mixing probabilities, one per source.
    pub fn mixing_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.sources.iter().map(|s| s.weight).sum();
        self.sources.iter().map(|s| s.weight / total).collect()
    }
}

/// Mixing probabilities for sources of the given sizes, each multiplied by an oversampling factor.
pub fn mixing_weights(sizes: &[f64], oversample: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = sizes.iter().zip(oversample).map(|(s, o)| s * o).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Shared replica counts, one per shard id. Implementations must make each
/// update atomic with respect to concurrent callers.
pub trait MetadataStore: Send + Sync {
    fn replicas(&self, shard: &str) -> u32;
    fn add_replica(&self, shard: &str) -> u32;
    fn remove_replica(&self, shard: &str) -> Result<u32, StreamError>;
    fn snapshot(&self) -> BTreeMap<String, u32>;
}

#[derive(Debug, Default)]
pub struct InMemoryStore {
    counts: Mutex<BTreeMap<String, u32>>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, u32>> {
        self.counts.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

impl MetadataStore for InMemoryStore {
    fn replicas(&self, shard: &str) -> u32 {
        self.lock().get(shard).copied().unwrap_or(0)
    }

    fn add_replica(&self, shard: &str) -> u32 {
        let mut counts = self.lock();
        let c = counts.entry(shard.to_owned()).or_insert(0);
        *c += 1;
        *c
    }

    fn remove_replica(&self, shard: &str) -> Result<u32, StreamError> {
        let mut counts = self.lock();
        match counts.get_mut(shard) {
            Some(c) if *c > 0 => {
                *c -= 1;
                Ok(*c)
            }
            _ => Err(StreamError::ReplicaUnderflow(shard.to_owned())),
        }
    }

    fn snapshot(&self) -> BTreeMap<String, u32> {
        self.lock().iter().filter(|(_, &c)| c > 0).map(|(k, &c)| (k.clone(), c)).collect()
    }
}

/// Uniformly random shard among `candidates` with the fewest replicas.
/// Scans every candidate once.
pub fn choose_next_shard<R: Rng + ?Sized>(
    candidates: &[&str],
    store: &dyn MetadataStore,
    rng: &mut R,
) -> Option<String> {
    let mut fewest = u32::MAX;
    let mut tied: Vec<&str> = Vec::new();
    for &id in candidates {
        let c = store.replicas(id);
        if c < fewest {
            fewest = c;
            tied.clear();
        }
        if c == fewest {
            tied.push(id);
        }
    }
    if tied.is_empty() {
        return None;
    }
    Some(tied[rng.gen_range(0..tied.len())].to_owned())
}

/// Bounded set of shards one peer stores and serves to others.
#[derive(Clone, Debug)]
pub struct LocalShards {
    capacity: usize,
    /// Held shards, oldest first.
    held: Vec<String>,
}

impl LocalShards {
    pub fn new(capacity: usize) -> Self {
        LocalShards {
            capacity: capacity.max(1),
            held: Vec::new(),
        }
    }

    pub fn held(&self) -> &[String] {
        &self.held
    }

    pub fn holds(&self, shard: &str) -> bool {
        self.held.iter().any(|h| h == shard)
    }

    /// When full, drops the most replicated shard (oldest on ties) and
    /// returns it; otherwise does nothing.
    pub fn evict_if_full(&mut self, store: &dyn MetadataStore) -> Result<Option<String>, StreamError> {
        if self.held.len() < self.capacity {
            return Ok(None);
        }
        let mut victim = 0;
        let mut most = 0;
        for (k, id) in self.held.iter().enumerate() {
            let c = store.replicas(id);
            if k == 0 || c > most {
                victim = k;
                most = c;
            }
        }
        let id = self.held.remove(victim);
        store.remove_replica(&id)?;
        Ok(Some(id))
    }

    /// Stores `shard`, evicting first if needed. Returns the evicted shard.
    pub fn insert(&mut self, shard: &str, store: &dyn MetadataStore) -> Result<Option<String>, StreamError> {
        if self.holds(shard) {
            return Ok(None);
        }
        let evicted = self.evict_if_full(store)?;
        self.held.push(shard.to_owned());
        store.add_replica(shard);
        Ok(evicted)
    }

    /// Fetches the least replicated shard of `catalog` not held yet. Without an
    /// origin server a shard nobody holds cannot be fetched.
    pub fn acquire<R: Rng + ?Sized>(
        &mut self,
        catalog: &ShardCatalog,
        store: &dyn MetadataStore,
        origin_available: bool,
        rng: &mut R,
    ) -> Result<Option<(String, Option<String>)>, StreamError> {
        let candidates: Vec<&str> = catalog.shard_ids().filter(|id| !self.holds(id)).collect();
        let Some(id) = choose_next_shard(&candidates, store, rng) else {
            return Ok(None);
        };
        if !origin_available && store.replicas(&id) == 0 {
            return Err(StreamError::ShardUnavailable(id));
        }
        let evicted = self.insert(&id, store)?;
        Ok(Some((id, evicted)))
    }

    /// Releases every held shard as the peer goes offline. Returns the shards
    /// that no peer holds any more.
    pub fn depart(&mut self, store: &dyn MetadataStore) -> Result<Vec<String>, StreamError> {
        let mut lost = Vec::new();
        for id in self.held.drain(..) {
            if store.remove_replica(&id)? == 0 {
                lost.push(id);
            }
        }
        Ok(lost)
    }
}

/// Where shard contents come from.
pub trait ExampleSource {
    fn load(&self, source: &SourceInfo, shard: &ShardInfo) -> Result<Vec<Vec<u8>>, StreamError>;
}

/// Generates `n_examples` records of the form `source/shard/index`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticSource;

impl ExampleSource for SyntheticSource {
    fn load(&self, source: &SourceInfo, shard: &ShardInfo) -> Result<Vec<Vec<u8>>, StreamError> {
        Ok((0..shard.n_examples)
            .map(|i| format!("{}/{}/{i}", source.id, shard.id).into_bytes())
            .collect())
    }
}

/// Reads newline-delimited records from `root/<uri>` (or `root/<shard id>` without a uri).
#[derive(Clone, Debug)]
pub struct FileSource {
    pub root: PathBuf,
}

impl ExampleSource for FileSource {
    fn load(&self, _source: &SourceInfo, shard: &ShardInfo) -> Result<Vec<Vec<u8>>, StreamError> {
        let path = self.root.join(shard.uri.as_deref().unwrap_or(&shard.id));
        let bytes = fs::read(&path).map_err(|source| StreamError::Io { path, source })?;
        Ok(bytes
            .split(|&b| b == b'\n')
            .filter(|line| !line.is_empty())
            .map(<[u8]>::to_vec)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    /// Index of the source in the catalog.
    pub source: usize,
    pub shard: String,
    /// Position of the record within its shard.
    pub index: usize,
    pub payload: Vec<u8>,
}

/// Fixed-capacity pool of examples; batches are drawn uniformly without replacement.
#[derive(Clone, Debug)]
pub struct ShuffleBuffer {
    capacity: usize,
    items: Vec<(u64, Example)>,
    arrivals: u64,
}

impl ShuffleBuffer {
    pub fn new(capacity: usize) -> Self {
        ShuffleBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            arrivals: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    fn push(&mut self, ex: Example) {
        self.items.push((self.arrivals, ex));
        self.arrivals += 1;
    }

    /// Removes `k` distinct uniformly chosen examples. With `ranks`, each
    /// comes with its arrival rank among the buffered examples at draw time
    /// (an `O(capacity)` scan per example); otherwise the rank is 0.
    fn take<R: Rng + ?Sized>(&mut self, k: usize, ranks: bool, rng: &mut R) -> Vec<(usize, Example)> {
        let k = k.min(self.items.len());
        let picked = index::sample(rng, self.items.len(), k).into_vec();
        let rank_of = |p: usize| {
            let seq = self.items[p].0;
            self.items.iter().filter(|(s, _)| *s < seq).count()
        };
        let ranks: Vec<usize> = picked.iter().map(|&p| if ranks { rank_of(p) } else { 0 }).collect();
        // Remove from the back so earlier indices stay valid.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&j| std::cmp::Reverse(picked[j]));
        let mut out: Vec<Option<(usize, Example)>> = vec![None; k];
        for j in order {
            let (_, ex) = self.items.swap_remove(picked[j]);
            out[j] = Some((ranks[j], ex));
        }
        out.into_iter().map(|e| e.expect("every pick removed once")).collect()
    }
}

struct Cursor {
    /// Shards of this source not opened yet.
    pending: Vec<usize>,
    /// Remaining records of the open shard.
    open: VecDeque<Example>,
}

/// One consumer's view of the dataset: weighted mixing over sources feeding a shuffle buffer.
pub struct ShardStream<S: ExampleSource> {
    catalog: ShardCatalog,
    source: S,
    store: Arc<dyn MetadataStore>,
    rng: ChaCha8Rng,
    buffer: ShuffleBuffer,
    cursors: Vec<Cursor>,
    track_ranks: bool,
    last_ranks: Vec<usize>,
}

impl<S: ExampleSource> ShardStream<S> {
    pub fn new(catalog: ShardCatalog, source: S, capacity: usize, seed: u64) -> Result<Self, StreamError> {
        Self::with_store(catalog, source, capacity, seed, Arc::new(InMemoryStore::new()))
    }

    /// As [`ShardStream::new`], choosing shards by the replica counts in `store`.
    pub fn with_store(
        catalog: ShardCatalog,
        source: S,
        capacity: usize,
        seed: u64,
        store: Arc<dyn MetadataStore>,
    ) -> Result<Self, StreamError> {
        catalog.validate()?;
        let cursors = catalog
            .sources
            .iter()
            .map(|s| Cursor {
                pending: (0..s.shards.len()).collect(),
                open: VecDeque::new(),
            })
            .collect();
        Ok(ShardStream {
            catalog,
            source,
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer: ShuffleBuffer::new(capacity),
            cursors,
            track_ranks: false,
            last_ranks: Vec::new(),
        })
    }

    pub fn buffer(&self) -> &ShuffleBuffer {
        &self.buffer
    }

    /// Records arrival ranks of drawn examples, for checking shuffle quality.
    pub fn track_ranks(&mut self, on: bool) {
        self.track_ranks = on;
    }

    /// Arrival ranks, within the buffer, of the examples in the last batch
    /// (empty unless [`ShardStream::track_ranks`] is on).
    pub fn last_ranks(&self) -> &[usize] {
        &self.last_ranks
    }

    /// Opens the next shard of source `s`; false when the source is used up.
    fn open_next(&mut self, s: usize) -> Result<bool, StreamError> {
        loop {
            let src = &self.catalog.sources[s];
            let pending = &self.cursors[s].pending;
            if pending.is_empty() {
                return Ok(false);
            }
            let ids: Vec<&str> = pending.iter().map(|&k| src.shards[k].id.as_str()).collect();
            let id = choose_next_shard(&ids, self.store.as_ref(), &mut self.rng).expect("pending is non-empty");
            let at = pending
                .iter()
                .position(|&k| src.shards[k].id == id)
                .expect("chosen shard is pending");
            let k = self.cursors[s].pending.remove(at);
            let shard = &src.shards[k];
            let records = self.source.load(src, shard)?;
            self.cursors[s].open = records
                .into_iter()
                .enumerate()
                .map(|(index, payload)| Example {
                    source: s,
                    shard: shard.id.clone(),
                    index,
                    payload,
                })
                .collect();
            if !self.cursors[s].open.is_empty() {
                return Ok(true);
            }
        }
    }

    /// Next example from a weight-chosen source; `None` once every source is exhausted.
    fn next_example(&mut self) -> Result<Option<Example>, StreamError> {
        loop {
            let live: Vec<usize> = (0..self.cursors.len())
                .filter(|&s| !self.cursors[s].open.is_empty() || !self.cursors[s].pending.is_empty())
                .collect();
            if live.is_empty() {
                return Ok(None);
            }
            let weights: Vec<f64> = live.iter().map(|&s| self.catalog.sources[s].weight).collect();
            let s = live[WeightedIndex::new(&weights).expect("weights are positive").sample(&mut self.rng)];
            if self.cursors[s].open.is_empty() && !self.open_next(s)? {
                continue;
            }
            return Ok(self.cursors[s].open.pop_front());
        }
    }

    fn fill(&mut self) -> Result<(), StreamError> {
        while !self.buffer.is_full() {
            match self.next_example()? {
                Some(ex) => self.buffer.push(ex),
                None => break,
            }
        }
        Ok(())
    }

    /// Draws `size` examples (fewer at the very end of the data), then refills the consumed slots.
    pub fn next_batch(&mut self, size: usize) -> Result<Vec<Example>, StreamError> {
        self.fill()?;
        if self.buffer.is_empty() {
            return Err(StreamError::SourceExhausted);
        }
        let drawn = self.buffer.take(size, self.track_ranks, &mut self.rng);
        self.last_ranks = if self.track_ranks { drawn.iter().map(|(r, _)| *r).collect() } else { Vec::new() };
        self.fill()?;
        Ok(drawn.into_iter().map(|(_, ex)| ex).collect())
    }
}
