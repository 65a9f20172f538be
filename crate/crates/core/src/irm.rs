//! Information roadmap (IRM): the shared exploration graph.
//!
//! Nodes are places a robot can travel to. Besides frontiers and breadcrumbs
//! the graph carries comms semantics: checkpoints annotated with the
//! bottleneck SNR a robot would see there, dropped radios, and intents to
//! drop a radio. Edges are undirected with a traversal length in meters and
//! "closest" always means shortest path over those lengths.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::propagation::{coverage_snr, PathLossModel, PropagationError, RadioSpec};
use crate::{NodeId, Point3};

/// Checkpoints at or above this SNR (dB) count as strong comms.
pub const STRONG_SNR_DB: f64 = 20.0;

/// Default lifetime of an unfulfilled drop intent, seconds.
type Distances = BTreeMap<NodeId, f64>;
type Parents = BTreeMap<NodeId, NodeId>;

pub const DEFAULT_INTENT_HORIZON: f64 = 120.0;

#[derive(Debug, Error, PartialEq)]
pub enum IrmError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on {0}")]
    SelfLoop(NodeId),
    #[error("edge {0}-{1} has invalid length {2}")]
    InvalidLength(NodeId, NodeId, f64),
    #[error("invalid SNR {0} dB")]
    InvalidSnr(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Frontier,
    Breadcrumb,
    CommsCheckpoint,
    DroppedRadio,
    DropIntent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointStrength {
    Strong,
    Weak,
    None,
}

/// Strong at 20 dB and above, weak strictly between 0 and 20, none at 0.
pub fn classify_checkpoint(snr: f64) -> Result<CheckpointStrength, IrmError> {
    if snr.is_nan() || snr < 0.0 {
        Err(IrmError::InvalidSnr(snr))
    } else if snr >= STRONG_SNR_DB {
        Ok(CheckpointStrength::Strong)
    } else if snr > 0.0 {
        Ok(CheckpointStrength::Weak)
    } else {
        Ok(CheckpointStrength::None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrmNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Point3,
    /// dB, at least 0. Meaningful for checkpoints and dropped radios.
    #[serde(default)]
    pub snr: f64,
    #[serde(default)]
    pub timestamp: f64,
    /// Who last wrote this node. Breaks merge ties on equal timestamps.
    #[serde(default)]
    pub origin: String,
}

impl IrmNode {
    pub fn new(id: impl Into<NodeId>, kind: NodeKind, position: Point3) -> Self {
        Self {
            id: id.into(),
            kind,
            position,
            snr: 0.0,
            timestamp: 0.0,
            origin: String::new(),
        }
    }

    pub fn is_strong_checkpoint(&self) -> bool {
        self.kind == NodeKind::CommsCheckpoint && self.snr >= STRONG_SNR_DB
    }

    /// Total preference order used by merge: later timestamp, then smaller
    /// origin, then the remaining fields so that the choice never depends on
    /// argument order.
    fn preferred_over(&self, other: &IrmNode) -> bool {
        let ord = other
            .timestamp
            .total_cmp(&self.timestamp)
            .then_with(|| self.origin.cmp(&other.origin))
            .then_with(|| self.kind.cmp(&other.kind))
            .then_with(|| self.snr.total_cmp(&other.snr))
            .then_with(|| {
                self.position
                    .iter()
                    .zip(&other.position)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            });
        ord != Ordering::Greater
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrmEdge {
    pub a: NodeId,
    pub b: NodeId,
    /// Meters.
    pub length: f64,
}

#[derive(Serialize, Deserialize)]
struct IrmDoc {
    nodes: Vec<IrmNode>,
    edges: Vec<IrmEdge>,
}

/// The roadmap. Serializes as `{"nodes": [...], "edges": [{"a","b","length"}]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IrmDoc", into = "IrmDoc")]
pub struct Irm {
    nodes: BTreeMap<NodeId, IrmNode>,
    adjacency: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
}

impl TryFrom<IrmDoc> for Irm {
    type Error = IrmError;

    fn try_from(doc: IrmDoc) -> Result<Self, IrmError> {
        let mut irm = Irm::new();
        for node in doc.nodes {
            irm.upsert_node(node)?;
        }
        for e in doc.edges {
            irm.add_edge(&e.a, &e.b, e.length)?;
        }
        Ok(irm)
    }
}

impl From<Irm> for IrmDoc {
    fn from(irm: Irm) -> Self {
        let edges = irm.edges().collect();
        IrmDoc {
            nodes: irm.nodes.into_values().collect(),
            edges,
        }
    }
}

#[derive(PartialEq)]
struct Nearest {
    dist: f64,
    node: NodeId,
}

impl Eq for Nearest {}

impl Ord for Nearest {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Nearest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Irm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a node, keeping its edges.
    pub fn upsert_node(&mut self, node: IrmNode) -> Result<(), IrmError> {
        if node.snr.is_nan() || node.snr < 0.0 {
            return Err(IrmError::InvalidSnr(node.snr));
        }
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds an undirected edge. An existing edge keeps the shorter length.
    pub fn add_edge(&mut self, a: &NodeId, b: &NodeId, length: f64) -> Result<(), IrmError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(IrmError::SelfLoop(a.clone()));
        }
        if !(length >= 0.0) || !length.is_finite() {
            return Err(IrmError::InvalidLength(a.clone(), b.clone(), length));
        }
        for (x, y) in [(a, b), (b, a)] {
            let entry = self
                .adjacency
                .get_mut(x)
                .expect("checked")
                .entry(y.clone())
                .or_insert(length);
            *entry = entry.min(length);
        }
        Ok(())
    }

    pub fn remove_node(&mut self, id: &NodeId) -> Option<IrmNode> {
        let node = self.nodes.remove(id)?;
        if let Some(neighbors) = self.adjacency.remove(id) {
            for n in neighbors.keys() {
                if let Some(adj) = self.adjacency.get_mut(n) {
                    adj.remove(id);
                }
            }
        }
        Some(node)
    }

    pub fn node(&self, id: &NodeId) -> Option<&IrmNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut IrmNode> {
        self.nodes.get_mut(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &IrmNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Each edge once, with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = IrmEdge> + '_ {
        self.adjacency.iter().flat_map(|(a, adj)| {
            adj.range((std::ops::Bound::Excluded(a), std::ops::Bound::Unbounded))
                .map(move |(b, &length)| IrmEdge {
                    a: a.clone(),
                    b: b.clone(),
                    length,
                })
        })
    }

    pub fn edge_length(&self, a: &NodeId, b: &NodeId) -> Option<f64> {
        self.adjacency.get(a)?.get(b).copied()
    }

    /// Neighbors and edge lengths, in id order.
    pub fn neighbors(&self, id: &NodeId) -> impl Iterator<Item = (&NodeId, f64)> {
        self.adjacency
            .get(id)
            .into_iter()
            .flat_map(|adj| adj.iter().map(|(n, &l)| (n, l)))
    }

    pub fn degree(&self, id: &NodeId) -> usize {
        self.adjacency.get(id).map_or(0, BTreeMap::len)
    }

    fn check(&self, id: &NodeId) -> Result<(), IrmError> {
        if self.nodes.contains_key(id) {
            Ok(())
        } else {
            Err(IrmError::UnknownNode(id.clone()))
        }
    }

    /// Shortest-path length from `src` to every reachable node.
    pub fn distances_from(&self, src: &NodeId) -> Result<BTreeMap<NodeId, f64>, IrmError> {
        Ok(self.dijkstra(src)?.0)
    }

    /// Dijkstra from `src`; the second map holds each node's predecessor.
    fn dijkstra(&self, src: &NodeId) -> Result<(Distances, Parents), IrmError> {
        self.check(src)?;
        let mut dist = BTreeMap::new();
        let mut parent = BTreeMap::new();
        let mut done = BTreeSet::new();
        let mut heap = BinaryHeap::new();
        dist.insert(src.clone(), 0.0);
        heap.push(Nearest {
            dist: 0.0,
            node: src.clone(),
        });
        while let Some(Nearest { dist: d, node }) = heap.pop() {
            if !done.insert(node.clone()) {
                continue;
            }
            for (next, len) in self.neighbors(&node) {
                let cand = d + len;
                if !done.contains(next) && dist.get(next).is_none_or(|&old| cand < old) {
                    dist.insert(next.clone(), cand);
                    parent.insert(next.clone(), node.clone());
                    heap.push(Nearest {
                        dist: cand,
                        node: next.clone(),
                    });
                }
            }
        }
        Ok((dist, parent))
    }

    /// A shortest path from `src` to `dst`, both ends included.
    pub fn shortest_path(&self, src: &NodeId, dst: &NodeId) -> Result<Option<Vec<NodeId>>, IrmError> {
        self.check(src)?;
        let (dist, parent) = self.dijkstra(dst)?;
        if !dist.contains_key(src) {
            return Ok(None);
        }
        let mut path = vec![src.clone()];
        let mut cur = src;
        while cur != dst {
            cur = &parent[cur];
            path.push(cur.clone());
        }
        Ok(Some(path))
    }

    /// Union of both maps. Colliding nodes resolve to the more recent
    /// version; colliding edges keep the shorter length.
    pub fn merge(&self, other: &Irm) -> Irm {
        let mut out = self.clone();
        for node in other.nodes.values() {
            match out.nodes.get(&node.id) {
                Some(mine) if mine.preferred_over(node) => {}
                _ => {
                    out.adjacency.entry(node.id.clone()).or_default();
                    out.nodes.insert(node.id.clone(), node.clone());
                }
            }
        }
        for e in other.edges() {
            out.add_edge(&e.a, &e.b, e.length)
                .expect("edges of a valid roadmap stay valid in the union");
        }
        out
    }

    /// Recomputes every checkpoint's SNR from the backbone radios and stamps
    /// it with `now`.
    pub fn refresh_checkpoints(
        &mut self,
        radios: &[RadioSpec],
        bottlenecks: &BTreeMap<NodeId, f64>,
        model: &PathLossModel,
        rx_noise: f64,
        now: f64,
    ) -> Result<(), PropagationError> {
        for node in self.nodes.values_mut() {
            if node.kind != NodeKind::CommsCheckpoint {
                continue;
            }
            node.snr = coverage_snr(&node.position, radios, bottlenecks, rx_noise, model)?;
            node.timestamp = now;
        }
        Ok(())
    }

    /// Closest strong checkpoint to the robot, or a frontier next to it that
    /// is strictly closer still.
    pub fn select_return_target(&self, robot_node: &NodeId) -> Result<Option<NodeId>, IrmError> {
        let dist = self.distances_from(robot_node)?;
        let best = self
            .nodes
            .values()
            .filter(|n| n.is_strong_checkpoint())
            .filter_map(|n| dist.get(&n.id).map(|&d| (d, &n.id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let Some((cp_dist, cp)) = best else {
            return Ok(None);
        };
        let frontier = self
            .neighbors(cp)
            .filter(|(n, _)| self.nodes[*n].kind == NodeKind::Frontier)
            .filter_map(|(n, _)| dist.get(n).map(|&d| (d, n)))
            .filter(|(d, _)| *d < cp_dist)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        Ok(Some(frontier.map_or(cp, |(_, n)| n).clone()))
    }

    /// A strong checkpoint strictly closer to base than `current_target`,
    /// choosing the one nearest the current target.
    pub fn next_closer_checkpoint(
        &self,
        current_target: &NodeId,
        base: &NodeId,
    ) -> Result<Option<NodeId>, IrmError> {
        self.check(current_target)?;
        let to_base = self.distances_from(base)?;
        let from_target = self.distances_from(current_target)?;
        let limit = to_base.get(current_target).copied().unwrap_or(f64::INFINITY);
        let best = self
            .nodes
            .values()
            .filter(|n| n.is_strong_checkpoint() && &n.id != current_target)
            .filter_map(|n| {
                let db = *to_base.get(&n.id)?;
                let dt = *from_target.get(&n.id)?;
                (db < limit).then_some((dt, db, &n.id))
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| a.1.total_cmp(&b.1))
                    .then_with(|| a.2.cmp(b.2))
            });
        Ok(best.map(|(_, _, id)| id.clone()))
    }

    /// Removes drop intents older than `horizon` and returns their ids.
    pub fn expire_drop_intents(&mut self, now: f64, horizon: f64) -> Vec<NodeId> {
        let stale: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::DropIntent && now - n.timestamp > horizon)
            .map(|n| n.id.clone())
            .collect();
        for id in &stale {
            self.remove_node(id);
        }
        stale
    }
}

/// Free function form of [`Irm::merge`].
pub fn merge(a: &Irm, b: &Irm) -> Irm {
    a.merge(b)
}
