//! Comms-aware autonomy: radio-drop scheduling and return-to-comms.
//!
//! Both behaviors are step functions over explicit per-robot state. They read
//! (and, for drop intents, write) the robot's own roadmap copy; the caller
//! is responsible for moving the robot and for sharing roadmaps.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irm::{Irm, IrmError, IrmNode, NodeKind, STRONG_SNR_DB};
use crate::{distance, NodeId, Point3};

/// Hard limit on droppable radios a robot can carry.
pub const MAX_SLOTS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum BehaviorError {
    #[error("drop triggered with an empty path history")]
    EmptyHistory,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no strong checkpoint and base {0} is unreachable")]
    NoReturnTarget(NodeId),
    #[error(transparent)]
    Irm(#[from] IrmError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropSchedulerConfig {
    /// Bottleneck SNR to base (dB) below which a drop is triggered.
    pub snr_floor: f64,
    pub slots_total: usize,
    /// Existing radios or intents this close (m) make a drop redundant.
    pub overlap_radius: f64,
    pub jam_probability: f64,
    /// How many recent history nodes are considered as drop sites.
    pub backtrack_limit: usize,
}

impl Default for DropSchedulerConfig {
    fn default() -> Self {
        Self {
            snr_floor: STRONG_SNR_DB,
            slots_total: MAX_SLOTS,
            overlap_radius: 20.0,
            jam_probability: 0.0,
            backtrack_limit: 10,
        }
    }
}

impl DropSchedulerConfig {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        let bad = |m: String| Err(BehaviorError::InvalidConfig(m));
        if !(self.snr_floor > 0.0) {
            return bad(format!("snr_floor must be > 0, got {}", self.snr_floor));
        }
        if self.slots_total > MAX_SLOTS {
            return bad(format!("slots_total {} exceeds {MAX_SLOTS}", self.slots_total));
        }
        if !(self.overlap_radius >= 0.0) {
            return bad(format!("overlap_radius must be >= 0, got {}", self.overlap_radius));
        }
        if !(0.0..1.0).contains(&self.jam_probability) {
            return bad(format!(
                "jam_probability must be in [0, 1), got {}",
                self.jam_probability
            ));
        }
        if self.backtrack_limit == 0 {
            return bad("backtrack_limit must be >= 1".into());
        }
        Ok(())
    }
}

/// A visited roadmap node and the bottleneck SNR recorded there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub node: NodeId,
    pub snr: f64,
}

/// What the drop scheduler sees on one step.
#[derive(Clone, Copy, Debug)]
pub struct DropObservation<'a> {
    pub now: f64,
    /// Current bottleneck SNR to base, dB.
    pub bottleneck: f64,
    /// The node the robot is standing on, if not mid-edge.
    pub at_node: Option<&'a NodeId>,
    /// Visited nodes, oldest first.
    pub history: &'a [HistoryEntry],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum DropAction {
    None,
    /// An existing radio or intent already covers the chosen site.
    Skip { site: NodeId },
    /// Move toward the committed site.
    Backtrack { site: NodeId },
    /// A unit was released at `site`. `radio` names the roadmap node.
    Drop { site: NodeId, radio: NodeId, jammed: bool },
    /// Second unit after a jam, same site.
    Retry { site: NodeId, radio: NodeId, jammed: bool },
}

#[derive(Clone, Debug, PartialEq)]
enum DropState {
    Idle,
    Committed { site: NodeId, intent: NodeId, snr: f64 },
    RetryPending { site: NodeId, snr: f64 },
}

/// Per-robot radio-drop scheduler.
#[derive(Clone, Debug)]
pub struct DropScheduler {
    config: DropSchedulerConfig,
    robot: String,
    used: usize,
    deployed: usize,
    state: DropState,
    last_skipped: Option<NodeId>,
    warned_empty: bool,
}

impl DropScheduler {
    pub fn new(robot: impl Into<String>, config: DropSchedulerConfig) -> Result<Self, BehaviorError> {
        config.validate()?;
        Ok(Self {
            config,
            robot: robot.into(),
            used: 0,
            deployed: 0,
            state: DropState::Idle,
            last_skipped: None,
            warned_empty: false,
        })
    }

    pub fn config(&self) -> &DropSchedulerConfig {
        &self.config
    }

    /// Units released so far, jammed ones included.
    pub fn slots_used(&self) -> usize {
        self.used
    }

    pub fn slots_left(&self) -> usize {
        self.config.slots_total - self.used
    }

    /// Units that deployed without jamming.
    pub fn deployed(&self) -> usize {
        self.deployed
    }

    /// The committed site, while backtracking.
    pub fn committed_site(&self) -> Option<&NodeId> {
        match &self.state {
            DropState::Committed { site, .. } => Some(site),
            _ => None,
        }
    }

    pub fn step<R: Rng>(
        &mut self,
        obs: &DropObservation<'_>,
        irm: &mut Irm,
        rng: &mut R,
    ) -> Result<DropAction, BehaviorError> {
        match self.state.clone() {
            DropState::RetryPending { site, snr } => {
                self.state = DropState::Idle;
                if self.slots_left() == 0 {
                    warn!("{}: no slot left to retry jammed drop at {site}", self.robot);
                    return Ok(DropAction::None);
                }
                let (radio, jammed) = self.release(&site, snr, obs.now, irm, rng)?;
                Ok(DropAction::Retry { site, radio, jammed })
            }
            DropState::Committed { site, intent, snr } => {
                if obs.at_node != Some(&site) {
                    return Ok(DropAction::Backtrack { site });
                }
                let position = irm.node(&site).ok_or(IrmError::UnknownNode(site.clone()))?.position;
                if conflicting_deployment(&position, irm, self.config.overlap_radius, &intent) {
                    irm.remove_node(&intent);
                    self.state = DropState::Idle;
                    self.last_skipped = Some(site.clone());
                    return Ok(DropAction::Skip { site });
                }
                irm.remove_node(&intent);
                let (radio, jammed) = self.release(&site, snr, obs.now, irm, rng)?;
                self.state = if jammed {
                    DropState::RetryPending {
                        site: site.clone(),
                        snr,
                    }
                } else {
                    DropState::Idle
                };
                Ok(DropAction::Drop { site, radio, jammed })
            }
            DropState::Idle => self.trigger(obs, irm, rng),
        }
    }

    fn trigger<R: Rng>(
        &mut self,
        obs: &DropObservation<'_>,
        irm: &mut Irm,
        rng: &mut R,
    ) -> Result<DropAction, BehaviorError> {
        if obs.bottleneck >= self.config.snr_floor {
            return Ok(DropAction::None);
        }
        if self.slots_left() == 0 {
            if !self.warned_empty {
                warn!("{}: drop triggered but all slots are used", self.robot);
                self.warned_empty = true;
            }
            return Ok(DropAction::None);
        }
        let (site, snr) = select_drop_site(obs.history, irm, &self.config)?;
        let position = irm.node(&site).ok_or(IrmError::UnknownNode(site.clone()))?.position;
        if should_skip_drop(&position, irm, self.config.overlap_radius) {
            if self.last_skipped.as_ref() == Some(&site) {
                return Ok(DropAction::None);
            }
            self.last_skipped = Some(site.clone());
            return Ok(DropAction::Skip { site });
        }
        let intent = self.unit_id(self.used);
        irm.upsert_node(IrmNode {
            id: intent.clone(),
            kind: NodeKind::DropIntent,
            position,
            snr: 0.0,
            timestamp: obs.now,
            origin: self.robot.clone(),
        })?;
        self.last_skipped = None;
        self.state = DropState::Committed {
            site: site.clone(),
            intent,
            snr,
        };
        if obs.at_node == Some(&site) {
            // Already standing on the site: release on this step.
            return self.step(obs, irm, rng);
        }
        Ok(DropAction::Backtrack { site })
    }

    fn unit_id(&self, index: usize) -> NodeId {
        NodeId::new(format!("radio:{}:{index}", self.robot))
    }

    fn release<R: Rng>(
        &mut self,
        site: &NodeId,
        snr: f64,
        now: f64,
        irm: &mut Irm,
        rng: &mut R,
    ) -> Result<(NodeId, bool), BehaviorError> {
        let jammed = rng.gen::<f64>() < self.config.jam_probability;
        let radio = self.unit_id(self.used);
        self.used += 1;
        if !jammed {
            self.deployed += 1;
            let position = irm.node(site).ok_or(IrmError::UnknownNode(site.clone()))?.position;
            irm.upsert_node(IrmNode {
                id: radio.clone(),
                kind: NodeKind::DroppedRadio,
                position,
                snr: snr.max(0.0),
                timestamp: now,
                origin: self.robot.clone(),
            })?;
        }
        Ok((radio, jammed))
    }
}

/// Picks the drop site among the last `backtrack_limit` history nodes.
///
/// Nodes whose recorded SNR meets the floor are candidates, scored by
/// junction status (three or more roadmap neighbors), then degree, then SNR;
/// remaining ties favor the most recent visit. With no candidate the best
/// recorded SNR in the window is used.
pub fn select_drop_site(
    history: &[HistoryEntry],
    irm: &Irm,
    config: &DropSchedulerConfig,
) -> Result<(NodeId, f64), BehaviorError> {
    if history.is_empty() {
        return Err(BehaviorError::EmptyHistory);
    }
    let window = &history[history.len().saturating_sub(config.backtrack_limit)..];
    let recent_first = window.iter().rev().filter(|e| irm.contains(&e.node));
    let candidates: Vec<&HistoryEntry> = recent_first
        .clone()
        .filter(|e| e.snr >= config.snr_floor)
        .collect();
    let pick = if candidates.is_empty() {
        recent_first.fold(None::<&HistoryEntry>, |best, e| match best {
            Some(b) if b.snr >= e.snr => Some(b),
            _ => Some(e),
        })
    } else {
        let score = |e: &HistoryEntry| {
            let d = roadmap_degree(irm, &e.node);
            (d >= 3, d)
        };
        candidates.into_iter().fold(None::<&HistoryEntry>, |best, e| match best {
            Some(b) if (score(b), b.snr) >= (score(e), e.snr) => Some(b),
            _ => Some(e),
        })
    };
    let e = pick.ok_or(BehaviorError::EmptyHistory)?;
    Ok((e.node.clone(), e.snr))
}

/// Neighbors that are places (frontiers or breadcrumbs), ignoring checkpoint
/// and radio markers attached to the node.
pub fn roadmap_degree(irm: &Irm, id: &NodeId) -> usize {
    irm.neighbors(id)
        .filter(|(n, _)| {
            irm.node(n)
                .is_some_and(|n| matches!(n.kind, NodeKind::Frontier | NodeKind::Breadcrumb))
        })
        .count()
}

/// True if a dropped radio or drop intent lies within `radius` (closed ball).
pub fn should_skip_drop(candidate: &Point3, irm: &Irm, radius: f64) -> bool {
    irm.nodes().any(|n| {
        matches!(n.kind, NodeKind::DroppedRadio | NodeKind::DropIntent)
            && distance(&n.position, candidate) <= radius
    })
}

/// Whether another deployment near `position` takes precedence over our
/// intent: any dropped radio, or an intent registered earlier (smaller
/// origin on equal time).
fn conflicting_deployment(position: &Point3, irm: &Irm, radius: f64, own: &NodeId) -> bool {
    let mine = irm.node(own).map(|n| (n.timestamp, n.origin.clone()));
    irm.nodes().any(|n| {
        if &n.id == own || distance(&n.position, position) > radius {
            return false;
        }
        match n.kind {
            NodeKind::DroppedRadio => true,
            NodeKind::DropIntent => match &mine {
                Some((t, o)) => (n.timestamp, &n.origin) < (*t, o),
                None => true,
            },
            _ => false,
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReturnToCommsConfig {
    pub upper_bytes: u64,
    pub lower_bytes: u64,
    /// Seconds.
    pub wait_timeout: f64,
}

impl Default for ReturnToCommsConfig {
    fn default() -> Self {
        Self {
            upper_bytes: 300_000,
            lower_bytes: 200_000,
            wait_timeout: 60.0,
        }
    }
}

impl ReturnToCommsConfig {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        if self.lower_bytes >= self.upper_bytes {
            return Err(BehaviorError::InvalidConfig(format!(
                "lower_bytes {} must be below upper_bytes {}",
                self.lower_bytes, self.upper_bytes
            )));
        }
        if !(self.wait_timeout > 0.0) {
            return Err(BehaviorError::InvalidConfig(format!(
                "wait_timeout must be > 0, got {}",
                self.wait_timeout
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommsMode {
    Exploring,
    ReturningToComms,
    WaitingAtCheckpoint,
    EscalatingCloser,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotCommsState {
    pub mode: CommsMode,
    pub target_node: Option<NodeId>,
    pub wait_since: Option<f64>,
    /// Cleared on a trigger and set again once the buffer is back at or
    /// below the upper threshold.
    pub armed: bool,
}

impl Default for RobotCommsState {
    fn default() -> Self {
        Self {
            mode: CommsMode::Exploring,
            target_node: None,
            wait_since: None,
            armed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionDirective {
    Explore,
    GoTo(NodeId),
    Hold,
}

/// Where the robot is, for return-to-comms purposes.
#[derive(Clone, Copy, Debug)]
pub struct RobotPlace<'a> {
    /// Nearest roadmap node, used to pick a return target.
    pub node: &'a NodeId,
    /// Whether the robot is standing on `node` rather than mid-edge.
    pub at_node: bool,
}

/// Advances the return-to-comms state machine by one step.
pub fn return_to_comms_step(
    state: &RobotCommsState,
    buffer_bytes: u64,
    irm: &Irm,
    place: RobotPlace<'_>,
    base: &NodeId,
    config: &ReturnToCommsConfig,
    now: f64,
) -> Result<(RobotCommsState, MotionDirective), BehaviorError> {
    let mut next = state.clone();
    if buffer_bytes <= config.upper_bytes {
        next.armed = true;
    }
    let arrived = |target: &NodeId| place.at_node && place.node == target;

    if state.mode != CommsMode::Exploring && buffer_bytes < config.lower_bytes {
        next.mode = CommsMode::Exploring;
        next.target_node = None;
        next.wait_since = None;
        return Ok((next, MotionDirective::Explore));
    }

    match state.mode {
        CommsMode::Exploring => {
            if buffer_bytes > config.upper_bytes && state.armed {
                let target = match irm.select_return_target(place.node)? {
                    Some(t) => t,
                    None => {
                        let reachable = irm.distances_from(place.node)?;
                        if !reachable.contains_key(base) {
                            return Err(BehaviorError::NoReturnTarget(base.clone()));
                        }
                        base.clone()
                    }
                };
                next.mode = CommsMode::ReturningToComms;
                next.armed = false;
                next.target_node = Some(target.clone());
                return Ok((next, MotionDirective::GoTo(target)));
            }
            Ok((next, MotionDirective::Explore))
        }
        CommsMode::ReturningToComms | CommsMode::EscalatingCloser => {
            let target = state.target_node.clone().expect("target set outside exploring");
            if arrived(&target) {
                next.mode = CommsMode::WaitingAtCheckpoint;
                next.wait_since = Some(now);
                return Ok((next, MotionDirective::Hold));
            }
            Ok((next, MotionDirective::GoTo(target)))
        }
        CommsMode::WaitingAtCheckpoint => {
            let target = state.target_node.clone().expect("target set outside exploring");
            let since = state.wait_since.unwrap_or(now);
            if now - since > config.wait_timeout && buffer_bytes >= config.lower_bytes {
                let closer = irm.next_closer_checkpoint(&target, base)?;
                match closer {
                    Some(c) => {
                        next.mode = CommsMode::EscalatingCloser;
                        next.wait_since = None;
                        next.target_node = Some(c.clone());
                        return Ok((next, MotionDirective::GoTo(c)));
                    }
                    None if &target != base => {
                        next.mode = CommsMode::EscalatingCloser;
                        next.wait_since = None;
                        next.target_node = Some(base.clone());
                        return Ok((next, MotionDirective::GoTo(base.clone())));
                    }
                    // Already at base: nothing closer, keep waiting.
                    None => next.wait_since = Some(now),
                }
            }
            if arrived(&target) {
                Ok((next, MotionDirective::Hold))
            } else {
                Ok((next, MotionDirective::GoTo(target)))
            }
        }
    }
}
