//! Deterministic fixed-tick mission simulator.
//!
//! Each tick runs, in order: robot motion along the roadmap, link SNR
//! prediction from positions, topology update, traffic generation and
//! endpoint service, datagram propagation through the channel model,
//! behavior steps, and roadmap merges between robots that share a strong
//! route. All randomness comes from one seed split into independent
//! ChaCha streams (channel loss, drop jams), so a scenario and seed fully
//! determine the event log.

mod channel;
mod metrics;
mod scenario;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use channel::ChannelModel;
pub use metrics::{compute_metrics, event_log_lines, parse_event_log, Event, MetricsReport, PEAK_WINDOW};
pub use scenario::{
    BehaviorToggles, Burst, ChannelConfig, Direction, Outage, RadioConfig, RobotBehavior, RobotSpec,
    Scenario, TrafficSpec,
};

use crate::behaviors::{
    return_to_comms_step, BehaviorError, DropAction, DropObservation, DropScheduler,
    DropSchedulerConfig, HistoryEntry, MotionDirective, RobotCommsState, RobotPlace,
};
use crate::irm::{Irm, IrmError, IrmNode, NodeKind, STRONG_SNR_DB};
use crate::mesh::{LinkRecord, MeshError, MeshTopology};
use crate::propagation::{predict_snr_near_field, PropagationError, RadioSpec};
use crate::transport::{Datagram, Endpoint, TopicId, TransportError};
use crate::{NodeId, Point3};

const CHANNEL_STREAM: u64 = 1;
const JAM_STREAM: u64 = 2;
const HISTORY_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("bad event log: {0}")]
    Log(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Irm(#[from] IrmError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// One row of the per-topic buffer time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferSample {
    pub t: f64,
    pub robot: String,
    pub topic: TopicId,
    pub queued_bytes: u64,
}

/// Reliable message bookkeeping for one robot and direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowAccount {
    pub robot: String,
    pub direction: Direction,
    pub generated: usize,
    pub delivered: usize,
    /// Not yet delivered: queued at the sender or held by the receiver for
    /// in-order release.
    pub pending: usize,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub events: Vec<Event>,
    pub buffer_series: Vec<BufferSample>,
    /// Link records of every topology snapshot, in time order.
    pub topology: Vec<LinkRecord>,
    /// The base station's roadmap at the end of the run.
    pub base_irm: Irm,
    /// Base and dropped radios at the end of the run.
    pub backbone: Vec<RadioSpec>,
    /// Backbone bottleneck to base per radio at the end of the run.
    pub backbone_bottlenecks: BTreeMap<NodeId, f64>,
    pub accounts: Vec<FlowAccount>,
}

impl SimOutput {
    pub fn event_log(&self) -> String {
        event_log_lines(&self.events)
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    /// `t,robot,topic,queued_bytes`.
    pub fn buffer_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.buffer_series {
            w.serialize(row).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8")
    }

    pub fn topology_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.topology {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Validates and runs a scenario.
pub fn run(scenario: &Scenario) -> Result<SimOutput, SimError> {
    let violations = scenario.violations();
    if !violations.is_empty() {
        return Err(SimError::Validation(violations));
    }
    let mut sim = Sim::new(scenario)?;
    for k in 1..=scenario.ticks() {
        sim.step(k)?;
    }
    sim.finish()
}

#[derive(Clone, Debug, PartialEq)]
enum Loc {
    At(NodeId),
    /// `s` meters along the edge from `from` toward `to`.
    Edge {
        from: NodeId,
        to: NodeId,
        s: f64,
        len: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
enum Goal {
    Explore,
    Node(NodeId),
    Hold,
}

struct Generator {
    spec: TrafficSpec,
    acc: f64,
    next_burst: usize,
}

struct Robot {
    spec: RobotSpec,
    id: NodeId,
    loc: Loc,
    plan: VecDeque<NodeId>,
    goal: Option<NodeId>,
    next: Goal,
    explore_target: Option<NodeId>,
    irm: Irm,
    history: Vec<HistoryEntry>,
    scheduler: Option<DropScheduler>,
    rtc: RobotCommsState,
    /// Robot side of the link to base.
    ep: Endpoint,
    /// Base side of the link to this robot.
    base_ep: Endpoint,
    bottleneck: f64,
    route: Option<Vec<NodeId>>,
    generators: Vec<Generator>,
    to_base_topics: Vec<TopicId>,
    reliable: BTreeSet<(Direction, TopicId)>,
    generated: BTreeMap<Direction, usize>,
    delivered: BTreeSet<(Direction, TopicId, u32)>,
    outages: Vec<(f64, f64)>,
}

impl Robot {
    fn position(&self) -> Point3 {
        let pos = |n: &NodeId| self.irm.node(n).map_or([0.0; 3], |n| n.position);
        match &self.loc {
            Loc::At(n) => pos(n),
            Loc::Edge { from, to, s, len } => {
                let (a, b) = (pos(from), pos(to));
                let f = if *len > 0.0 { s / len } else { 0.0 };
                [
                    a[0] + f * (b[0] - a[0]),
                    a[1] + f * (b[1] - a[1]),
                    a[2] + f * (b[2] - a[2]),
                ]
            }
        }
    }

    fn nearest_node(&self) -> &NodeId {
        match &self.loc {
            Loc::At(n) => n,
            Loc::Edge { from, to, s, len } => {
                if *s <= len / 2.0 {
                    from
                } else {
                    to
                }
            }
        }
    }

    fn at_node(&self) -> Option<&NodeId> {
        match &self.loc {
            Loc::At(n) => Some(n),
            Loc::Edge { .. } => None,
        }
    }

    fn in_outage(&self, t: f64) -> bool {
        self.outages.iter().any(|&(a, b)| a <= t && t < b)
    }

    fn base_distance(&self, dist: &BTreeMap<NodeId, f64>) -> f64 {
        let d = |n: &NodeId| dist.get(n).copied().unwrap_or(f64::INFINITY);
        let v = match &self.loc {
            Loc::At(n) => d(n),
            Loc::Edge { from, to, s, len } => (d(from) + s).min(d(to) + (len - s)),
        };
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// Points the plan at `goal`, reversing along the current edge if that
    /// is shorter.
    fn steer(&mut self, goal: Option<NodeId>) -> Result<(), SimError> {
        if goal == self.goal {
            return Ok(());
        }
        self.goal = goal.clone();
        self.plan.clear();
        let Some(goal) = goal else {
            return Ok(());
        };
        let start = match self.loc.clone() {
            Loc::At(n) => n.clone(),
            Loc::Edge { from, to, s, len } => {
                let dist = self.irm.distances_from(&goal)?;
                let d = |n: &NodeId| dist.get(n).copied().unwrap_or(f64::INFINITY);
                let ahead = (len - s) + d(&to);
                let back = s + d(&from);
                if back < ahead {
                    self.loc = Loc::Edge {
                        from: to,
                        to: from.clone(),
                        s: len - s,
                        len,
                    };
                    from
                } else {
                    to
                }
            }
        };
        if let Some(path) = self.irm.shortest_path(&start, &goal)? {
            self.plan.extend(path.into_iter().skip(1));
        }
        Ok(())
    }

    /// Moves up to `budget` meters along the plan and returns the nodes
    /// arrived at.
    fn advance(&mut self, mut budget: f64) -> Vec<NodeId> {
        let mut arrived = Vec::new();
        loop {
            match &mut self.loc {
                Loc::At(n) => {
                    let Some(next) = self.plan.pop_front() else {
                        break;
                    };
                    let Some(len) = self.irm.edge_length(n, &next) else {
                        self.plan.clear();
                        break;
                    };
                    self.loc = Loc::Edge {
                        from: n.clone(),
                        to: next,
                        s: 0.0,
                        len,
                    };
                }
                Loc::Edge { to, s, len, .. } => {
                    let rem = *len - *s;
                    if budget >= rem {
                        budget -= rem;
                        let to = to.clone();
                        arrived.push(to.clone());
                        self.loc = Loc::At(to);
                    } else {
                        *s += budget;
                        break;
                    }
                }
            }
        }
        arrived
    }

    /// Records a visit: history, frontier to breadcrumb, and a checkpoint
    /// annotated with the current bottleneck.
    fn visit(&mut self, node: &NodeId, t: f64, dist: &mut BTreeMap<NodeId, f64>) -> Result<(), SimError> {
        self.history.push(HistoryEntry {
            node: node.clone(),
            snr: self.bottleneck,
        });
        if self.history.len() > HISTORY_LEN {
            self.history.remove(0);
        }
        let Some(n) = self.irm.node(node).cloned() else {
            return Ok(());
        };
        if n.kind != NodeKind::Frontier {
            return Ok(());
        }
        self.irm.upsert_node(IrmNode {
            kind: NodeKind::Breadcrumb,
            timestamp: t,
            origin: self.spec.id.clone(),
            ..n.clone()
        })?;
        let cp = checkpoint_id(node);
        if !self.irm.contains(&cp) {
            self.irm.upsert_node(IrmNode {
                id: cp.clone(),
                kind: NodeKind::CommsCheckpoint,
                position: n.position,
                snr: self.bottleneck.max(0.0),
                timestamp: t,
                origin: self.spec.id.clone(),
            })?;
            self.irm.add_edge(node, &cp, 0.0)?;
        }
        if let Some(&d) = dist.get(node) {
            dist.insert(cp, d);
        }
        Ok(())
    }
}

fn checkpoint_id(node: &NodeId) -> NodeId {
    NodeId::new(format!("cp:{node}"))
}

struct Sim<'a> {
    sc: &'a Scenario,
    base: NodeId,
    base_irm: Irm,
    /// Roadmap distance from base, extended as checkpoints appear.
    dist: BTreeMap<NodeId, f64>,
    backbone: Vec<RadioSpec>,
    backbone_bn: BTreeMap<NodeId, f64>,
    robots: Vec<Robot>,
    mesh: MeshTopology,
    channel: ChannelModel,
    channel_rng: ChaCha8Rng,
    jam_rng: ChaCha8Rng,
    events: Vec<Event>,
    buffer_series: Vec<BufferSample>,
    topology: Vec<LinkRecord>,
    /// Publish time per (robot, direction, topic, seq).
    created: BTreeMap<(usize, Direction, TopicId, u32), f64>,
    sample_every: usize,
    snapshot_every: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, SimError> {
        let base = sc.base_node.clone();
        let base_pos = sc.irm_seed_graph.node(&base).expect("validated").position;
        let dist = sc.irm_seed_graph.distances_from(&base)?;
        let mut robots = Vec::new();
        for spec in &sc.robots {
            let traffic: Vec<&TrafficSpec> = sc.traffic.iter().filter(|t| t.robot == spec.id).collect();
            let topics: Vec<_> = traffic.iter().map(|t| t.topic.clone()).collect();
            let ep = Endpoint::new(&topics, sc.transport.clone(), 0.0)?;
            let base_ep = Endpoint::new(&topics, sc.transport.clone(), 0.0)?;
            let exploring = spec.behavior == RobotBehavior::Explore;
            let scheduler = if exploring && sc.behaviors.drops && spec.slots > 0 {
                Some(DropScheduler::new(
                    spec.id.clone(),
                    DropSchedulerConfig {
                        slots_total: spec.slots,
                        ..sc.drop.clone()
                    },
                )?)
            } else {
                None
            };
            robots.push(Robot {
                id: NodeId::new(spec.id.clone()),
                loc: Loc::At(spec.start.clone()),
                plan: VecDeque::new(),
                goal: None,
                next: if exploring { Goal::Explore } else { Goal::Hold },
                explore_target: None,
                irm: sc.irm_seed_graph.clone(),
                history: Vec::new(),
                scheduler,
                rtc: RobotCommsState::default(),
                ep,
                base_ep,
                bottleneck: 0.0,
                route: None,
                generators: traffic
                    .iter()
                    .map(|t| Generator {
                        spec: (*t).clone(),
                        acc: 0.0,
                        next_burst: 0,
                    })
                    .collect(),
                to_base_topics: traffic
                    .iter()
                    .filter(|t| t.direction == Direction::ToBase)
                    .map(|t| t.topic.topic_id)
                    .collect(),
                reliable: traffic
                    .iter()
                    .filter(|t| t.topic.class.is_reliable())
                    .map(|t| (t.direction, t.topic.topic_id))
                    .collect(),
                generated: BTreeMap::new(),
                delivered: BTreeSet::new(),
                outages: sc
                    .outages
                    .iter()
                    .filter(|o| o.robot == spec.id)
                    .map(|o| (o.start, o.end))
                    .collect(),
                spec: spec.clone(),
            });
        }
        let per = |interval: f64| ((interval / sc.tick).round() as usize).max(1);
        let mut sim = Self {
            sc,
            base: base.clone(),
            base_irm: sc.irm_seed_graph.clone(),
            dist,
            backbone: vec![sc.base_radio.spec(base.clone(), base_pos)],
            backbone_bn: BTreeMap::from([(base, f64::INFINITY)]),
            robots,
            mesh: MeshTopology::with_stale_horizon(sc.stale_horizon),
            channel: ChannelModel::new(sc.channel.clone()),
            channel_rng: stream(sc.seed, CHANNEL_STREAM),
            jam_rng: stream(sc.seed, JAM_STREAM),
            events: Vec::new(),
            buffer_series: Vec::new(),
            topology: Vec::new(),
            created: BTreeMap::new(),
            sample_every: per(sc.sample_interval),
            snapshot_every: per(sc.snapshot_interval),
        };
        sim.events.push(Event::Start {
            t: 0.0,
            seed: sc.seed,
            duration: sc.duration,
            tick: sc.tick,
            robots: sc.robots.iter().map(|r| r.id.clone()).collect(),
        });
        Ok(sim)
    }

    fn step(&mut self, k: usize) -> Result<(), SimError> {
        let t = k as f64 * self.sc.tick;
        self.move_robots(t)?;
        self.update_links(t)?;
        let (to_base, from_base) = self.exchange(t)?;
        self.behave(t)?;
        self.merge_roadmaps();
        self.record(k, t, to_base, from_base);
        Ok(())
    }

    fn move_robots(&mut self, t: f64) -> Result<(), SimError> {
        for i in 0..self.robots.len() {
            if self.robots[i].spec.behavior == RobotBehavior::Stationary {
                continue;
            }
            let goal = match self.robots[i].next.clone() {
                Goal::Explore => self.frontier_target(i)?,
                Goal::Node(n) => Some(n),
                Goal::Hold => None,
            };
            let robot = &mut self.robots[i];
            robot.steer(goal)?;
            let budget = robot.spec.speed * self.sc.tick;
            for node in robot.advance(budget) {
                robot.visit(&node, t, &mut self.dist)?;
            }
        }
        Ok(())
    }

    /// Nearest frontier in the robot's roadmap, avoiding those other robots
    /// are already heading to when an alternative exists.
    fn frontier_target(&mut self, i: usize) -> Result<Option<NodeId>, SimError> {
        let robot = &self.robots[i];
        if let Some(cur) = &robot.explore_target {
            if robot.irm.node(cur).is_some_and(|n| n.kind == NodeKind::Frontier) {
                return Ok(Some(cur.clone()));
            }
        }
        let claimed: BTreeSet<&NodeId> = self
            .robots
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .filter_map(|(_, r)| r.explore_target.as_ref())
            .collect();
        let dist = robot.irm.distances_from(robot.nearest_node())?;
        let mut best: Option<(bool, f64, &NodeId)> = None;
        for n in robot.irm.nodes().filter(|n| n.kind == NodeKind::Frontier) {
            let Some(&d) = dist.get(&n.id) else { continue };
            let key = (claimed.contains(&n.id), d, &n.id);
            let better = best.is_none_or(|b| {
                (key.0, key.1.total_cmp(&b.1), key.2) < (b.0, std::cmp::Ordering::Equal, b.2)
            });
            if better {
                best = Some(key);
            }
        }
        let target = best.map(|(_, _, id)| id.clone());
        self.robots[i].explore_target = target.clone();
        Ok(target)
    }

    fn radios(&self) -> Vec<(RadioSpec, bool)> {
        let mut all: Vec<(RadioSpec, bool)> = self.backbone.iter().map(|r| (r.clone(), false)).collect();
        for r in &self.robots {
            all.push((r.spec.radio.spec(r.id.clone(), r.position()), true));
        }
        all
    }

    fn update_links(&mut self, t: f64) -> Result<(), SimError> {
        let radios = self.radios();
        let down: BTreeSet<&NodeId> = self
            .robots
            .iter()
            .filter(|r| r.in_outage(t))
            .map(|r| &r.id)
            .collect();
        for (r, _) in &radios {
            self.mesh.add_node(r.id.clone());
        }
        for (a, (ra, _)) in radios.iter().enumerate() {
            for (rb, _) in &radios[a + 1..] {
                let snr = if down.contains(&ra.id) || down.contains(&rb.id) {
                    0.0
                } else {
                    let ab = predict_snr_near_field(ra, &rb.position, rb.noise_level, &self.sc.model);
                    let ba = predict_snr_near_field(rb, &ra.position, ra.noise_level, &self.sc.model);
                    ab.min(ba).max(0.0)
                };
                self.mesh.set_link(&ra.id, &rb.id, snr, t)?;
            }
        }
        let from_base = self.mesh.widest_bottlenecks(&self.base, Some(t))?;
        for r in &mut self.robots {
            r.bottleneck = from_base.get(&r.id).copied().unwrap_or(0.0);
            r.route = if r.bottleneck > 0.0 {
                self.mesh
                    .widest_path_route_at(&r.id, &self.base, t)?
                    .map(|route| route.path)
            } else {
                None
            };
        }
        let backbone_ids: BTreeSet<NodeId> = self.backbone.iter().map(|r| r.id.clone()).collect();
        let mut bn = self
            .mesh
            .subgraph(&backbone_ids)
            .widest_bottlenecks(&self.base, Some(t))?;
        for id in backbone_ids {
            bn.entry(id).or_insert(0.0);
        }
        self.backbone_bn = bn;
        Ok(())
    }

    fn bandwidth(&self, id: &NodeId) -> f64 {
        self.backbone
            .iter()
            .find(|r| &r.id == id)
            .map(|r| r.bandwidth)
            .or_else(|| self.robots.iter().find(|r| &r.id == id).map(|r| r.spec.radio.bandwidth))
            .unwrap_or(0.0)
    }

    /// Pushes one datagram hop by hop along `path`. One uniform is drawn per
    /// hop up front, so the draws do not depend on earlier outcomes.
    fn carry(
        &mut self,
        path: &[NodeId],
        bytes: usize,
        budgets: &mut BTreeMap<(NodeId, NodeId), f64>,
    ) -> bool {
        let draws: Vec<f64> = path.windows(2).map(|_| self.channel_rng.gen()).collect();
        for (hop, u) in path.windows(2).zip(draws) {
            let key = if hop[0] < hop[1] {
                (hop[0].clone(), hop[1].clone())
            } else {
                (hop[1].clone(), hop[0].clone())
            };
            let Some(snr) = self.mesh.link(&hop[0], &hop[1]).map(|l| l.snr) else {
                return false;
            };
            if !budgets.contains_key(&key) {
                let bw = self.bandwidth(&key.0).min(self.bandwidth(&key.1));
                budgets.insert(key.clone(), self.channel.tick_budget(bw, snr, self.sc.tick));
            }
            let budget = budgets.get_mut(&key).expect("inserted");
            if !self.channel.deliver_with(bytes, snr, budget, u) {
                return false;
            }
        }
        true
    }

    /// Generates traffic, services endpoints and moves datagrams and ACKs
    /// over the current routes. Returns payload bytes delivered to and from
    /// the base.
    fn exchange(&mut self, t: f64) -> Result<(u64, u64), SimError> {
        for i in 0..self.robots.len() {
            let robot = &mut self.robots[i];
            for g in &mut robot.generators {
                let spec = &g.spec;
                let mut sizes = Vec::new();
                let active = t > spec.start && spec.end.is_none_or(|e| t <= e);
                if active && spec.rate > 0.0 {
                    g.acc += spec.rate * self.sc.tick;
                    // tolerate accumulated rounding in the rate integral
                    while g.acc + 1e-9 >= spec.message_bytes as f64 {
                        g.acc -= spec.message_bytes as f64;
                        sizes.push(spec.message_bytes);
                    }
                }
                while let Some(b) = spec.bursts.get(g.next_burst) {
                    if b.t > t {
                        break;
                    }
                    sizes.push(b.bytes);
                    g.next_burst += 1;
                }
                let ep = match spec.direction {
                    Direction::ToBase => &mut robot.ep,
                    Direction::FromBase => &mut robot.base_ep,
                };
                for size in sizes {
                    let seq = ep.publish(spec.topic.topic_id, &vec![0u8; size], t)?;
                    self.created.insert((i, spec.direction, spec.topic.topic_id, seq), t);
                    if spec.topic.class.is_reliable() {
                        *robot.generated.entry(spec.direction).or_default() += 1;
                    }
                }
            }
        }

        // Data first, then the ACKs it produced, each round-robin over flows.
        let mut flows: Vec<(usize, Direction, VecDeque<Datagram>)> = Vec::new();
        for (i, r) in self.robots.iter_mut().enumerate() {
            flows.push((i, Direction::ToBase, r.ep.service_transmit(t).into()));
            flows.push((i, Direction::FromBase, r.base_ep.service_transmit(t).into()));
        }
        let mut budgets = BTreeMap::new();
        let mut acks: Vec<(usize, Direction, VecDeque<Datagram>)> = flows
            .iter()
            .map(|(i, d, _)| (*i, *d, VecDeque::new()))
            .collect();
        let (mut to_base, mut from_base) = (0u64, 0u64);
        while flows.iter().any(|f| !f.2.is_empty()) {
            for f in 0..flows.len() {
                let (i, dir) = (flows[f].0, flows[f].1);
                let Some(dg) = flows[f].2.pop_front() else { continue };
                if !self.send(i, dir, dg.wire_len(), &mut budgets) {
                    continue;
                }
                let robot = &mut self.robots[i];
                let receiver = match dir {
                    Direction::ToBase => &mut robot.base_ep,
                    Direction::FromBase => &mut robot.ep,
                };
                let got = receiver.handle_datagram(&dg, t)?;
                acks[f].2.extend(got.acks);
                for m in got.deliverable {
                    let class = robot
                        .ep
                        .topic_config(m.topic_id)
                        .expect("topic configured on both ends")
                        .class;
                    robot.delivered.insert((dir, m.topic_id, m.seq));
                    let created = self.created.remove(&(i, dir, m.topic_id, m.seq)).unwrap_or(t);
                    match dir {
                        Direction::ToBase => to_base += m.payload.len() as u64,
                        Direction::FromBase => from_base += m.payload.len() as u64,
                    }
                    self.events.push(Event::Delivery {
                        t,
                        robot: robot.spec.id.clone(),
                        direction: dir,
                        topic: m.topic_id,
                        class,
                        seq: m.seq,
                        latency: t - created,
                    });
                }
            }
        }
        while acks.iter().any(|f| !f.2.is_empty()) {
            for (i, dir, queue) in acks.iter_mut() {
                let (i, dir) = (*i, *dir);
                let Some(ack) = queue.pop_front() else { continue };
                let back = match dir {
                    Direction::ToBase => Direction::FromBase,
                    Direction::FromBase => Direction::ToBase,
                };
                if !self.send(i, back, ack.wire_len(), &mut budgets) {
                    continue;
                }
                let robot = &mut self.robots[i];
                match dir {
                    Direction::ToBase => robot.ep.handle_ack(&ack),
                    Direction::FromBase => robot.base_ep.handle_ack(&ack),
                }
            }
        }
        Ok((to_base, from_base))
    }

    fn send(
        &mut self,
        robot: usize,
        dir: Direction,
        bytes: usize,
        budgets: &mut BTreeMap<(NodeId, NodeId), f64>,
    ) -> bool {
        let Some(mut path) = self.robots[robot].route.clone() else {
            return false;
        };
        if dir == Direction::FromBase {
            path.reverse();
        }
        self.carry(&path, bytes, budgets)
    }

    fn behave(&mut self, t: f64) -> Result<(), SimError> {
        let sc = self.sc;
        for i in 0..self.robots.len() {
            if self.robots[i].spec.behavior == RobotBehavior::Stationary {
                continue;
            }
            let robot = &mut self.robots[i];
            robot.irm.expire_drop_intents(t, sc.intent_horizon);

            if let Some(scheduler) = robot.scheduler.as_mut() {
                let was_committed = scheduler.committed_site().is_some();
                let obs = DropObservation {
                    now: t,
                    bottleneck: robot.bottleneck,
                    at_node: match &robot.loc {
                        Loc::At(n) => Some(n),
                        Loc::Edge { .. } => None,
                    },
                    history: &robot.history,
                };
                let action = match scheduler.step(&obs, &mut robot.irm, &mut self.jam_rng) {
                    Ok(a) => a,
                    Err(e) => {
                        self.events.push(Event::BehaviorError {
                            t,
                            robot: robot.spec.id.clone(),
                            message: e.to_string(),
                        });
                        DropAction::None
                    }
                };
                if let DropAction::Drop {
                    site,
                    radio,
                    jammed: false,
                }
                | DropAction::Retry {
                    site,
                    radio,
                    jammed: false,
                } = &action
                {
                    let position = robot.irm.node(site).expect("site is a roadmap node").position;
                    self.backbone.push(sc.droppable_radio.spec(radio.clone(), position));
                    self.backbone_bn.insert(radio.clone(), 0.0);
                }
                // Backtrack repeats every tick until arrival; log it once.
                let repeat = was_committed && matches!(action, DropAction::Backtrack { .. });
                if action != DropAction::None && !repeat {
                    self.events.push(Event::RadioDrop {
                        t,
                        robot: robot.spec.id.clone(),
                        action,
                    });
                }
            }

            let radios: Vec<RadioSpec> = self
                .backbone
                .iter()
                .filter(|r| {
                    r.id == self.base
                        || robot
                            .irm
                            .node(&r.id)
                            .is_some_and(|n| n.kind == NodeKind::DroppedRadio)
                })
                .cloned()
                .collect();
            robot
                .irm
                .refresh_checkpoints(&radios, &self.backbone_bn, &sc.model, sc.rx_noise, t)?;

            let directive = if sc.behaviors.return_to_comms {
                let before = robot.rtc.mode;
                let place = RobotPlace {
                    node: robot.nearest_node(),
                    at_node: robot.at_node().is_some(),
                };
                match return_to_comms_step(
                    &robot.rtc,
                    robot.ep.reliable_queued_bytes(),
                    &robot.irm,
                    place,
                    &self.base,
                    &sc.return_to_comms,
                    t,
                ) {
                    Ok((state, directive)) => {
                        if state.mode != before {
                            self.events.push(Event::Mode {
                                t,
                                robot: robot.spec.id.clone(),
                                from: before,
                                to: state.mode,
                                target: state.target_node.as_ref().map(|n| n.to_string()),
                            });
                        }
                        robot.rtc = state;
                        directive
                    }
                    Err(e) => {
                        self.events.push(Event::BehaviorError {
                            t,
                            robot: robot.spec.id.clone(),
                            message: e.to_string(),
                        });
                        MotionDirective::Explore
                    }
                }
            } else {
                MotionDirective::Explore
            };

            robot.next = match robot.scheduler.as_ref().and_then(|s| s.committed_site()) {
                Some(site) => Goal::Node(site.clone()),
                None => match directive {
                    MotionDirective::Explore => Goal::Explore,
                    MotionDirective::GoTo(n) => Goal::Node(n),
                    MotionDirective::Hold => Goal::Hold,
                },
            };
            if robot.next != Goal::Explore {
                robot.explore_target = None;
            }
        }
        Ok(())
    }

    /// Merges roadmaps within each group of robots (and the base) joined by
    /// routes of at least strong-comms quality.
    fn merge_roadmaps(&mut self) {
        let n = self.robots.len();
        // index n is the base
        let mut parent: Vec<usize> = (0..=n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let union = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra.max(rb)] = ra.min(rb);
            }
        };
        for i in 0..n {
            if self.robots[i].bottleneck >= STRONG_SNR_DB {
                union(&mut parent, i, n);
            }
            let Ok(from_i) = self.mesh.widest_bottlenecks(&self.robots[i].id, None) else {
                continue;
            };
            for j in i + 1..n {
                if from_i.get(&self.robots[j].id).is_some_and(|&b| b >= STRONG_SNR_DB) {
                    union(&mut parent, i, j);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..=n {
            groups.entry(find(&mut parent, x)).or_default().push(x);
        }
        for members in groups.values().filter(|m| m.len() > 1) {
            let irm_of = |x: usize| if x == n { &self.base_irm } else { &self.robots[x].irm };
            let mut merged = irm_of(members[0]).clone();
            for &x in &members[1..] {
                merged = merged.merge(irm_of(x));
            }
            for &x in members {
                if x == n {
                    self.base_irm = merged.clone();
                } else {
                    self.robots[x].irm = merged.clone();
                }
            }
        }
    }

    fn record(&mut self, k: usize, t: f64, to_base: u64, from_base: u64) {
        for r in &self.robots {
            self.events.push(Event::Sample {
                t,
                robot: r.spec.id.clone(),
                buffer_bytes: r.ep.reliable_queued_bytes(),
                acked_bytes: r.ep.acked_bytes_total(),
                connected: r.bottleneck > 0.0,
                bottleneck_db: r.bottleneck,
                distance_m: r.base_distance(&self.dist),
                mode: r.rtc.mode,
            });
        }
        self.events.push(Event::Traffic {
            t,
            to_base_bytes: to_base,
            from_base_bytes: from_base,
        });
        if k.is_multiple_of(self.sample_every) {
            for r in &self.robots {
                for &topic in &r.to_base_topics {
                    self.buffer_series.push(BufferSample {
                        t,
                        robot: r.spec.id.clone(),
                        topic,
                        queued_bytes: r.ep.queued_bytes(topic).unwrap_or(0),
                    });
                }
            }
        }
        if k.is_multiple_of(self.snapshot_every) {
            self.topology.extend(self.mesh.link_records());
        }
    }

    fn finish(mut self) -> Result<SimOutput, SimError> {
        let end = self.sc.ticks() as f64 * self.sc.tick;
        self.events.push(Event::End { t: end });
        let report = compute_metrics(&self.events, self.sc)?;
        let mut accounts = Vec::new();
        for r in &self.robots {
            for dir in [Direction::ToBase, Direction::FromBase] {
                let (sender, receiver) = match dir {
                    Direction::ToBase => (&r.ep, &r.base_ep),
                    Direction::FromBase => (&r.base_ep, &r.ep),
                };
                let mut pending = 0;
                let mut delivered = 0;
                for &(d, topic) in r.reliable.iter().filter(|(d, _)| *d == dir) {
                    debug_assert_eq!(d, dir);
                    let in_transit: BTreeSet<u32> = sender
                        .queued_seqs(topic)
                        .into_iter()
                        .chain(receiver.held_seqs(topic))
                        .collect();
                    pending += in_transit
                        .into_iter()
                        .filter(|s| !r.delivered.contains(&(dir, topic, *s)))
                        .count();
                    delivered += r.delivered.iter().filter(|(d, tp, _)| *d == dir && *tp == topic).count();
                }
                accounts.push(FlowAccount {
                    robot: r.spec.id.clone(),
                    direction: dir,
                    generated: r.generated.get(&dir).copied().unwrap_or(0),
                    delivered,
                    pending,
                });
            }
        }
        Ok(SimOutput {
            report,
            events: self.events,
            buffer_series: self.buffer_series,
            topology: self.topology,
            base_irm: self.base_irm,
            backbone: self.backbone,
            backbone_bottlenecks: self.backbone_bn,
            accounts,
        })
    }
}
