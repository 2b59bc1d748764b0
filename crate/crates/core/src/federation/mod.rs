//! Deterministic simulator of a redirector-fronted cache federation.
//!
//! Every request is first looked up in the redirector's location map. A hit is
//! served by the node holding the file. A miss is fetched from the upstream
//! federation into one node, chosen so that the most recently joined nodes
//! fill up first; a full node makes room by evicting its least recently used
//! files. Nodes never exchange data with each other.

mod config;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{AccessKind, AccessRecord, FileRequest, RecordError};

pub use config::{run_simulation, FederationConfig, NodeEvent, Simulation, SimulationError};

/// Throughput used to derive `ts_end` of simulated transfers (10 Gb/s).
pub const TRANSFER_BYTES_PER_SEC: u64 = 1_250_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: String,
    pub site: String,
    #[serde(rename = "capacity_bytes")]
    pub capacity: u64,
    pub join_time: i64,
    /// When set, only namespaces starting with this prefix are placed here.
    #[serde(default)]
    pub namespace_filter: Option<String>,
    /// Informational; routing ignores latency.
    #[serde(default)]
    pub rtt_ms: f64,
}

impl NodeSpec {
    pub fn new(node_id: impl Into<String>, site: impl Into<String>, capacity: u64, join_time: i64) -> Self {
        NodeSpec {
            node_id: node_id.into(),
            site: site.into(),
            capacity,
            join_time,
            namespace_filter: None,
            rtt_ms: 0.0,
        }
    }

    fn accepts(&self, namespace: &str) -> bool {
        self.namespace_filter
            .as_deref()
            .is_none_or(|prefix| namespace.starts_with(prefix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resident {
    pub size: u64,
    pub last_access: i64,
    tick: u64,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub spec: NodeSpec,
    used: u64,
    resident: HashMap<String, Resident>,
    // access tick -> file, oldest first
    lru: BTreeMap<u64, String>,
}

impl NodeState {
    fn new(spec: NodeSpec) -> Self {
        NodeState { spec, used: 0, resident: HashMap::new(), lru: BTreeMap::new() }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn free(&self) -> u64 {
        self.spec.capacity - self.used
    }

    pub fn resident_count(&self) -> usize {
        self.resident.len()
    }

    pub fn resident(&self, file_id: &str) -> Option<&Resident> {
        self.resident.get(file_id)
    }

    /// Resident files, least recently used first.
    pub fn lru_order(&self) -> impl Iterator<Item = &str> {
        self.lru.values().map(String::as_str)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FederationError {
    #[error("federation has no nodes")]
    EmptyFederation,
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("node `{0}` has zero capacity")]
    ZeroCapacity(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no joined node accepts namespace `{namespace}` for file `{file_id}`")]
    NoEligibleNode { file_id: String, namespace: String },
    #[error("{needed} bytes do not fit on node `{node_id}` of capacity {capacity}")]
    FileTooLarge { node_id: String, needed: u64, capacity: u64 },
    #[error("time {time} precedes simulation clock {clock}")]
    NonMonotonicTime { time: i64, clock: i64 },
    #[error("invalid request: {0}")]
    InvalidRequest(#[from] RecordError),
}

/// Stable 64-bit hash of a (file, node) pair for rendezvous tie-breaking.
fn rendezvous_weight(file_id: &str, node_id: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in file_id.bytes().chain(std::iter::once(0xff)).chain(node_id.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn transfer_seconds(bytes: u64) -> i64 {
    bytes.div_ceil(TRANSFER_BYTES_PER_SEC) as i64
}

/// Cache nodes plus the redirector's file → node map.
#[derive(Debug, Clone)]
pub struct FederationState {
    nodes: Vec<NodeState>,
    by_id: HashMap<String, usize>,
    location: HashMap<String, usize>,
    clock: i64,
    tick: u64,
}

impl FederationState {
    /// Empty caches; the clock starts at the earliest join time.
    pub fn build(specs: Vec<NodeSpec>) -> Result<Self, FederationError> {
        if specs.is_empty() {
            return Err(FederationError::EmptyFederation);
        }
        let clock = specs.iter().map(|s| s.join_time).min().unwrap_or(0);
        let mut fed = FederationState {
            nodes: Vec::with_capacity(specs.len()),
            by_id: HashMap::new(),
            location: HashMap::new(),
            clock,
            tick: 0,
        };
        fed.insert_nodes(specs)?;
        Ok(fed)
    }

    fn insert_nodes(&mut self, specs: Vec<NodeSpec>) -> Result<(), FederationError> {
        let mut seen = std::collections::HashSet::new();
        for spec in &specs {
            if self.by_id.contains_key(&spec.node_id) || !seen.insert(spec.node_id.as_str()) {
                return Err(FederationError::DuplicateNodeId(spec.node_id.clone()));
            }
            if spec.capacity == 0 {
                return Err(FederationError::ZeroCapacity(spec.node_id.clone()));
            }
        }
        for spec in specs {
            self.by_id.insert(spec.node_id.clone(), self.nodes.len());
            self.nodes.push(NodeState::new(spec));
        }
        Ok(())
    }

    pub fn clock(&self) -> i64 {
        self.clock
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeState> {
        self.by_id.get(node_id).map(|&i| &self.nodes[i])
    }

    pub fn total_capacity(&self) -> u64 {
        self.nodes.iter().map(|n| n.spec.capacity).sum()
    }

    /// The node currently holding `file_id`, if any.
    pub fn locate(&self, file_id: &str) -> Option<&str> {
        self.location
            .get(file_id)
            .map(|&i| self.nodes[i].spec.node_id.as_str())
    }

    fn eligible<'a>(&'a self, namespace: &'a str, time: i64) -> impl Iterator<Item = (usize, &'a NodeState)> + 'a {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.spec.join_time <= time && n.spec.accepts(namespace))
    }

    fn pick_newest<'a>(
        file_id: &str,
        candidates: impl Iterator<Item = (usize, &'a NodeState)>,
    ) -> Option<usize> {
        candidates
            .max_by_key(|(_, n)| (n.spec.join_time, rendezvous_weight(file_id, &n.spec.node_id)))
            .map(|(i, _)| i)
    }

    fn miss_target_index(
        &self,
        file_id: &str,
        namespace: &str,
        file_size: u64,
        time: i64,
    ) -> Result<usize, FederationError> {
        let with_space = self.eligible(namespace, time).filter(|(_, n)| n.free() >= file_size);
        if let Some(i) = Self::pick_newest(file_id, with_space) {
            return Ok(i);
        }
        // Everything is full: the newest node that could hold the file evicts.
        let fits = self.eligible(namespace, time).filter(|(_, n)| n.spec.capacity >= file_size);
        if let Some(i) = Self::pick_newest(file_id, fits) {
            return Ok(i);
        }
        match Self::pick_newest(file_id, self.eligible(namespace, time)) {
            Some(i) => Err(FederationError::FileTooLarge {
                node_id: self.nodes[i].spec.node_id.clone(),
                needed: file_size,
                capacity: self.nodes[i].spec.capacity,
            }),
            None => Err(FederationError::NoEligibleNode {
                file_id: file_id.to_string(),
                namespace: namespace.to_string(),
            }),
        }
    }

    /// Node that should receive a missed file: the latest-joined eligible node
    /// with enough free space, ties spread by rendezvous hashing.
    pub fn select_miss_target(
        &self,
        file_id: &str,
        namespace: &str,
        file_size: u64,
        time: i64,
    ) -> Result<&str, FederationError> {
        let i = self.miss_target_index(file_id, namespace, file_size, time)?;
        Ok(&self.nodes[i].spec.node_id)
    }

    /// Evict least recently used files from `node_id` until `bytes_needed` are free.
    pub fn evict_lru(&mut self, node_id: &str, bytes_needed: u64) -> Result<Vec<String>, FederationError> {
        let idx = *self
            .by_id
            .get(node_id)
            .ok_or_else(|| FederationError::UnknownNode(node_id.to_string()))?;
        self.evict_at(idx, bytes_needed)
    }

    fn evict_at(&mut self, idx: usize, bytes_needed: u64) -> Result<Vec<String>, FederationError> {
        let node = &mut self.nodes[idx];
        if bytes_needed > node.spec.capacity {
            return Err(FederationError::FileTooLarge {
                node_id: node.spec.node_id.clone(),
                needed: bytes_needed,
                capacity: node.spec.capacity,
            });
        }
        let mut evicted = Vec::new();
        while node.free() < bytes_needed {
            let (_, file_id) = node.lru.pop_first().expect("used > 0 implies a resident file");
            let gone = node.resident.remove(&file_id).expect("lru and residency agree");
            node.used -= gone.size;
            self.location.remove(&file_id);
            evicted.push(file_id);
        }
        Ok(evicted)
    }

    fn touch(&mut self, idx: usize, file_id: &str, time: i64) {
        self.tick += 1;
        let node = &mut self.nodes[idx];
        let entry = node.resident.get_mut(file_id).expect("touched file is resident");
        node.lru.remove(&entry.tick);
        entry.tick = self.tick;
        entry.last_access = time;
        node.lru.insert(self.tick, file_id.to_string());
    }

    fn admit(&mut self, idx: usize, file_id: &str, size: u64, time: i64) {
        self.tick += 1;
        let node = &mut self.nodes[idx];
        node.used += size;
        node.resident
            .insert(file_id.to_string(), Resident { size, last_access: time, tick: self.tick });
        node.lru.insert(self.tick, file_id.to_string());
        self.location.insert(file_id.to_string(), idx);
    }

    /// Resolve one request, mutating cache state, and return its access record.
    pub fn handle_request(&mut self, req: &FileRequest) -> Result<AccessRecord, FederationError> {
        req.validate()?;
        if req.time < self.clock {
            return Err(FederationError::NonMonotonicTime { time: req.time, clock: self.clock });
        }
        let (idx, kind, transfer) = match self.location.get(&req.file_id).copied() {
            Some(idx) => {
                self.touch(idx, &req.file_id, req.time);
                (idx, AccessKind::Hit, req.request_size)
            }
            None => {
                let idx = self.miss_target_index(&req.file_id, &req.namespace, req.file_size, req.time)?;
                self.evict_at(idx, req.file_size)?;
                self.admit(idx, &req.file_id, req.file_size, req.time);
                (idx, AccessKind::Miss, req.file_size)
            }
        };
        self.clock = req.time;
        Ok(AccessRecord {
            ts_start: req.time,
            ts_end: req.time + transfer_seconds(transfer),
            user_id: req.user_id.clone(),
            file_id: req.file_id.clone(),
            file_path: format!("/store/{}/{}", req.namespace, req.file_id),
            file_size: req.file_size,
            transfer_size: transfer,
            kind,
            node_id: self.nodes[idx].spec.node_id.clone(),
            success: true,
        })
    }

    /// Join new, empty nodes at `time`. A spec's own later join time is kept.
    pub fn add_nodes(&mut self, specs: Vec<NodeSpec>, time: i64) -> Result<(), FederationError> {
        if time < self.clock {
            return Err(FederationError::NonMonotonicTime { time, clock: self.clock });
        }
        let specs = specs
            .into_iter()
            .map(|mut s| {
                s.join_time = s.join_time.max(time);
                s
            })
            .collect();
        self.insert_nodes(specs)?;
        self.clock = time;
        Ok(())
    }

    /// Cheap per-step check: no node above capacity.
    pub fn within_capacity(&self) -> bool {
        self.nodes.iter().all(|n| n.used <= n.spec.capacity)
    }

    /// Full structural check of every state invariant.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut resident_total = 0usize;
        for (i, node) in self.nodes.iter().enumerate() {
            let id = &node.spec.node_id;
            if node.used > node.spec.capacity {
                return Err(format!("{id}: used {} > capacity {}", node.used, node.spec.capacity));
            }
            let sum: u64 = node.resident.values().map(|r| r.size).sum();
            if sum != node.used {
                return Err(format!("{id}: used {} != resident sum {sum}", node.used));
            }
            if node.lru.len() != node.resident.len() {
                return Err(format!("{id}: lru/resident size mismatch"));
            }
            for (tick, file) in &node.lru {
                match node.resident.get(file) {
                    Some(r) if r.tick == *tick => {}
                    _ => return Err(format!("{id}: lru entry {file} stale")),
                }
            }
            for file in node.resident.keys() {
                if self.location.get(file) != Some(&i) {
                    return Err(format!("{id}: resident {file} missing from location map"));
                }
            }
            resident_total += node.resident.len();
        }
        // With every resident mapped back to its node, equal sizes mean the
        // map has no stale entries and no file lives on two nodes.
        if resident_total != self.location.len() {
            return Err(format!(
                "location map has {} entries for {resident_total} resident files",
                self.location.len()
            ));
        }
        Ok(())
    }
}

/// Build an empty federation from node specs.
pub fn build_federation(specs: Vec<NodeSpec>) -> Result<FederationState, FederationError> {
    FederationState::build(specs)
}
