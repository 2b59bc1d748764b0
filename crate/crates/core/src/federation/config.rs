use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FederationError, FederationState, NodeSpec};
use crate::trace::{AccessRecord, FileRequest};

const SOCAL_PRESET: &str = include_str!("../../presets/socal.json");

/// Nodes to join at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub time: i64,
    pub add_nodes: Vec<NodeSpec>,
}

/// On-disk federation description: initial nodes plus scheduled additions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub events: Vec<NodeEvent>,
}

impl FederationConfig {
    /// The Southern California regional cache: 11 Caltech nodes (96-388 TB,
    /// one reserved for NANOAOD), 12 UCSD nodes of 24 TB and a 44 TB ESnet
    /// node, about 2.5 PB in all. Seven Caltech nodes join on 2021-08-26 and
    /// two more on 2021-09-30.
    pub fn socal() -> Self {
        serde_json::from_str(SOCAL_PRESET).expect("bundled preset parses")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "socal" => Some(Self::socal()),
            _ => None,
        }
    }

    /// Every node, initial and scheduled.
    pub fn all_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .chain(self.events.iter().flat_map(|e| e.add_nodes.iter()))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("request {index}: {source}")]
pub struct SimulationError {
    pub index: usize,
    #[source]
    pub source: FederationError,
}

/// A federation together with its pending node-addition schedule.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: FederationState,
    pending: std::vec::IntoIter<NodeEvent>,
    next: Option<NodeEvent>,
}

impl Simulation {
    pub fn new(specs: Vec<NodeSpec>, mut events: Vec<NodeEvent>) -> Result<Self, FederationError> {
        let state = FederationState::build(specs)?;
        events.sort_by_key(|e| e.time);
        let mut pending = events.into_iter();
        let next = pending.next();
        Ok(Simulation { state, pending, next })
    }

    pub fn from_config(cfg: &FederationConfig) -> Result<Self, FederationError> {
        Self::new(cfg.nodes.clone(), cfg.events.clone())
    }

    pub fn state(&self) -> &FederationState {
        &self.state
    }

    /// Apply due node additions, then resolve the request.
    pub fn step(&mut self, req: &FileRequest) -> Result<AccessRecord, FederationError> {
        while self.next.as_ref().is_some_and(|e| e.time <= req.time) {
            let event = self.next.take().expect("checked above");
            let time = event.time.max(self.state.clock());
            self.state.add_nodes(event.add_nodes, time)?;
            self.next = self.pending.next();
        }
        self.state.handle_request(req)
    }
}

/// Replay a time-ordered request stream; one record per request.
pub fn run_simulation(
    specs: Vec<NodeSpec>,
    events: Vec<NodeEvent>,
    requests: &[FileRequest],
) -> Result<Vec<AccessRecord>, SimulationError> {
    let mut sim = Simulation::new(specs, events).map_err(|source| SimulationError { index: 0, source })?;
    requests
        .iter()
        .enumerate()
        .map(|(index, req)| sim.step(req).map_err(|source| SimulationError { index, source }))
        .collect()
}
