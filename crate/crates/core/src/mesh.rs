//! SNR link graph over radios and bottleneck routing.
//!
//! Data is assumed to flow along the route whose weakest link is strongest.
//! Routes are found in two passes: a max-min variant of Dijkstra finds the
//! best achievable bottleneck, then a breadth-first pass over links at least
//! that strong picks the fewest-hop, lexicographically smallest path. The
//! tie-break cannot be folded into a single label-setting pass because
//! `min` composition does not preserve hop-count order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

/// Default age after which a link no longer participates in routing.
pub const DEFAULT_STALE_HORIZON: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("self-link on {0}")]
    SelfLink(NodeId),
    #[error("invalid SNR {0} dB")]
    InvalidSnr(f64),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("route is empty")]
    EmptyRoute,
    #[error("no link between {0} and {1}")]
    BrokenRoute(NodeId, NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub snr: f64,
    pub timestamp: f64,
}

/// A route and its weakest-link SNR. A single-node route has an infinite
/// bottleneck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<NodeId>,
    pub bottleneck: f64,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// One line of the topology snapshot export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub i: NodeId,
    pub j: NodeId,
    pub snr_db: f64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshTopology {
    nodes: BTreeSet<NodeId>,
    adjacency: BTreeMap<NodeId, BTreeMap<NodeId, Link>>,
    stale_horizon: f64,
}

impl Default for MeshTopology {
    fn default() -> Self {
        Self::new()
    }
}

impl MeshTopology {
    pub fn new() -> Self {
        Self::with_stale_horizon(DEFAULT_STALE_HORIZON)
    }

    pub fn with_stale_horizon(stale_horizon: f64) -> Self {
        Self {
            nodes: BTreeSet::new(),
            adjacency: BTreeMap::new(),
            stale_horizon,
        }
    }

    pub fn stale_horizon(&self) -> f64 {
        self.stale_horizon
    }

    pub fn add_node(&mut self, id: NodeId) {
        self.nodes.insert(id);
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    pub fn link(&self, i: &NodeId, j: &NodeId) -> Option<&Link> {
        self.adjacency.get(i).and_then(|m| m.get(j))
    }

    /// Each undirected link once, with `i < j`.
    pub fn links(&self) -> impl Iterator<Item = (&NodeId, &NodeId, &Link)> {
        self.adjacency.iter().flat_map(|(i, m)| {
            m.range((std::ops::Bound::Excluded(i), std::ops::Bound::Unbounded))
                .map(move |(j, l)| (i, j, l))
        })
    }

    pub fn link_count(&self) -> usize {
        self.links().count()
    }

    /// Records a symmetric link observation.
    ///
    /// Newer observations replace older ones and older ones are ignored. Two
    /// observations with the same timestamp (typically the two directions of
    /// one link) keep the weaker SNR. An SNR of zero removes the link.
    pub fn set_link(
        &mut self,
        i: &NodeId,
        j: &NodeId,
        snr: f64,
        timestamp: f64,
    ) -> Result<(), MeshError> {
        if i == j {
            return Err(MeshError::SelfLink(i.clone()));
        }
        if !(snr >= 0.0) {
            return Err(MeshError::InvalidSnr(snr));
        }
        self.nodes.insert(i.clone());
        self.nodes.insert(j.clone());

        let snr = match self.link(i, j) {
            Some(old) if timestamp < old.timestamp => return Ok(()),
            Some(old) if timestamp == old.timestamp => old.snr.min(snr),
            _ => snr,
        };
        if snr == 0.0 {
            self.remove_link(i, j);
            return Ok(());
        }
        let link = Link { snr, timestamp };
        self.adjacency
            .entry(i.clone())
            .or_default()
            .insert(j.clone(), link);
        self.adjacency
            .entry(j.clone())
            .or_default()
            .insert(i.clone(), link);
        Ok(())
    }

    pub fn remove_link(&mut self, i: &NodeId, j: &NodeId) {
        for (a, b) in [(i, j), (j, i)] {
            if let Some(m) = self.adjacency.get_mut(a) {
                m.remove(b);
                if m.is_empty() {
                    self.adjacency.remove(a);
                }
            }
        }
    }

    /// Drops links older than the stale horizon relative to `now`.
    pub fn expire_stale(&mut self, now: f64) {
        let cutoff = now - self.stale_horizon;
        let stale: Vec<(NodeId, NodeId)> = self
            .links()
            .filter(|(_, _, l)| l.timestamp < cutoff)
            .map(|(i, j, _)| (i.clone(), j.clone()))
            .collect();
        for (i, j) in stale {
            self.remove_link(&i, &j);
        }
    }

    /// Copy restricted to `keep`; links to other nodes are dropped.
    pub fn subgraph(&self, keep: &BTreeSet<NodeId>) -> MeshTopology {
        let mut out = MeshTopology::with_stale_horizon(self.stale_horizon);
        out.nodes = self.nodes.intersection(keep).cloned().collect();
        for (i, m) in &self.adjacency {
            if !keep.contains(i) {
                continue;
            }
            let kept: BTreeMap<NodeId, Link> = m
                .iter()
                .filter(|(j, _)| keep.contains(*j))
                .map(|(j, l)| (j.clone(), *l))
                .collect();
            if !kept.is_empty() {
                out.adjacency.insert(i.clone(), kept);
            }
        }
        out
    }

    fn usable(&self, link: &Link, now: Option<f64>) -> bool {
        match now {
            Some(t) => link.timestamp >= t - self.stale_horizon,
            None => true,
        }
    }

    fn neighbors<'a>(
        &'a self,
        node: &NodeId,
        now: Option<f64>,
    ) -> impl Iterator<Item = (&'a NodeId, &'a Link)> + 'a {
        self.adjacency
            .get(node)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(move |(_, l)| self.usable(l, now))
    }

    fn check_node(&self, id: &NodeId) -> Result<(), MeshError> {
        if self.nodes.contains(id) {
            Ok(())
        } else {
            Err(MeshError::UnknownNode(id.clone()))
        }
    }

    /// Best achievable bottleneck from `src` to every reachable node.
    /// `src` itself maps to infinity.
    pub fn widest_bottlenecks(
        &self,
        src: &NodeId,
        now: Option<f64>,
    ) -> Result<BTreeMap<NodeId, f64>, MeshError> {
        self.check_node(src)?;
        let mut best: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut done: BTreeSet<NodeId> = BTreeSet::new();
        let mut frontier = BinaryHeap::new();
        best.insert(src.clone(), f64::INFINITY);
        frontier.push(Widest {
            bottleneck: f64::INFINITY,
            node: src.clone(),
        });
        while let Some(Widest { bottleneck, node }) = frontier.pop() {
            if !done.insert(node.clone()) {
                continue;
            }
            for (next, link) in self.neighbors(&node, now) {
                if done.contains(next) {
                    continue;
                }
                let cand = bottleneck.min(link.snr);
                let improves = best.get(next).is_none_or(|&b| cand > b);
                if improves {
                    best.insert(next.clone(), cand);
                    frontier.push(Widest {
                        bottleneck: cand,
                        node: next.clone(),
                    });
                }
            }
        }
        Ok(best)
    }

    /// Max-min route from `src` to `dst` using every link.
    pub fn widest_path_route(&self, src: &NodeId, dst: &NodeId) -> Result<Option<Route>, MeshError> {
        self.route(src, dst, None)
    }

    /// Max-min route ignoring links older than the stale horizon at `now`.
    pub fn widest_path_route_at(
        &self,
        src: &NodeId,
        dst: &NodeId,
        now: f64,
    ) -> Result<Option<Route>, MeshError> {
        self.route(src, dst, Some(now))
    }

    fn route(
        &self,
        src: &NodeId,
        dst: &NodeId,
        now: Option<f64>,
    ) -> Result<Option<Route>, MeshError> {
        self.check_node(src)?;
        self.check_node(dst)?;
        if src == dst {
            return Ok(Some(Route {
                path: vec![src.clone()],
                bottleneck: f64::INFINITY,
            }));
        }
        let widths = self.widest_bottlenecks(src, now)?;
        let Some(&target) = widths.get(dst) else {
            return Ok(None);
        };

        // Hop distances to dst over links no weaker than the optimum.
        let mut hops: BTreeMap<&NodeId, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        hops.insert(dst, 0);
        queue.push_back(dst);
        while let Some(node) = queue.pop_front() {
            let h = hops[node];
            for (next, link) in self.neighbors(node, now) {
                if link.snr >= target && !hops.contains_key(next) {
                    hops.insert(next, h + 1);
                    queue.push_back(next);
                }
            }
        }

        // Greedy descent picks the smallest id at each step, which yields the
        // lexicographically smallest among the fewest-hop paths.
        let mut path = vec![src.clone()];
        let mut current = src;
        while current != dst {
            let h = hops[current];
            let (next, _) = self
                .neighbors(current, now)
                .find(|(n, l)| l.snr >= target && hops.get(n) == Some(&(h - 1)))
                .expect("hop labels admit a descent");
            path.push(next.clone());
            current = next;
        }
        Ok(Some(Route {
            path,
            bottleneck: target,
        }))
    }

    /// Weakest link SNR along `path`.
    pub fn bottleneck_snr(&self, path: &[NodeId]) -> Result<f64, MeshError> {
        let first = path.first().ok_or(MeshError::EmptyRoute)?;
        self.check_node(first)?;
        let mut bottleneck = f64::INFINITY;
        for pair in path.windows(2) {
            let link = self
                .link(&pair[0], &pair[1])
                .ok_or_else(|| MeshError::BrokenRoute(pair[0].clone(), pair[1].clone()))?;
            bottleneck = bottleneck.min(link.snr);
        }
        Ok(bottleneck)
    }

    pub fn link_records(&self) -> Vec<LinkRecord> {
        self.links()
            .map(|(i, j, l)| LinkRecord {
                i: i.clone(),
                j: j.clone(),
                snr_db: l.snr,
                t: l.timestamp,
            })
            .collect()
    }

    /// JSON lines, one `{i, j, snr_db, t}` record per link.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for rec in self.link_records() {
            out.push_str(&serde_json::to_string(&rec).expect("link record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug)]
struct Widest {
    bottleneck: f64,
    node: NodeId,
}

impl PartialEq for Widest {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Widest {}

impl Ord for Widest {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on bottleneck; smaller id first among equals
        self.bottleneck
            .total_cmp(&other.bottleneck)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Widest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
