use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::behaviors::{DropSchedulerConfig, ReturnToCommsConfig, MAX_SLOTS};
use crate::irm::{Irm, DEFAULT_INTENT_HORIZON};
use crate::mesh::DEFAULT_STALE_HORIZON;
use crate::propagation::{PathLossModel, RadioSpec};
use crate::transport::{TopicConfig, TransportConfig};
use crate::{NodeId, Point3};

/// Radio parameters without identity or position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    /// dBm.
    pub tx_power: f64,
    /// dB, signed, subtracted as-is.
    pub noise_level: f64,
    /// Hz.
    pub bandwidth: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power: 20.0,
            noise_level: -90.0,
            bandwidth: 1e6,
        }
    }
}

impl RadioConfig {
    pub fn spec(&self, id: NodeId, position: Point3) -> RadioSpec {
        RadioSpec {
            id,
            position,
            tx_power: self.tx_power,
            noise_level: self.noise_level,
            bandwidth: self.bandwidth,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotBehavior {
    /// Frontier exploration with radio drops and return-to-comms.
    #[default]
    Explore,
    /// Parked at the start node, no behaviors.
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: String,
    pub start: NodeId,
    /// m/s.
    pub speed: f64,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub slots: usize,
    #[serde(default)]
    pub behavior: RobotBehavior,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    ToBase,
    FromBase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub t: f64,
    pub bytes: usize,
}

/// One traffic source. A steady `rate` is cut into `message_bytes`
/// messages; each burst is published as a single message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub robot: String,
    #[serde(default)]
    pub direction: Direction,
    pub topic: TopicConfig,
    /// Bytes per second.
    #[serde(default)]
    pub rate: f64,
    #[serde(default = "default_message_bytes")]
    pub message_bytes: usize,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
}

fn default_message_bytes() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Fraction of Shannon capacity usable per link.
    pub efficiency: f64,
    /// At or above this SNR (dB) no datagram is lost.
    pub loss_snr_hi: f64,
    /// At or below this SNR (dB) every datagram is lost.
    pub loss_snr_lo: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            loss_snr_hi: 10.0,
            loss_snr_lo: 0.0,
        }
    }
}

/// Forces every link of `robot` down for `start <= t < end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub robot: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorToggles {
    pub drops: bool,
    pub return_to_comms: bool,
}

impl Default for BehaviorToggles {
    fn default() -> Self {
        Self {
            drops: true,
            return_to_comms: true,
        }
    }
}

fn default_tick() -> f64 {
    0.1
}

fn default_sample_interval() -> f64 {
    1.0
}

fn default_snapshot_interval() -> f64 {
    10.0
}

fn default_stale() -> f64 {
    DEFAULT_STALE_HORIZON
}

fn default_intent() -> f64 {
    DEFAULT_INTENT_HORIZON
}

fn default_rx_noise() -> f64 {
    -90.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub irm_seed_graph: Irm,
    pub base_node: NodeId,
    #[serde(default)]
    pub base_radio: RadioConfig,
    /// Template for radios dropped by robots.
    #[serde(default)]
    pub droppable_radio: RadioConfig,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default)]
    pub model: PathLossModel,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub drop: DropSchedulerConfig,
    #[serde(default)]
    pub return_to_comms: ReturnToCommsConfig,
    #[serde(default)]
    pub behaviors: BehaviorToggles,
    #[serde(default)]
    pub outages: Vec<Outage>,
    /// Receiver noise assumed when predicting checkpoint coverage, dB.
    #[serde(default = "default_rx_noise")]
    pub rx_noise: f64,
    pub duration: f64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stale")]
    pub stale_horizon: f64,
    #[serde(default = "default_intent")]
    pub intent_horizon: f64,
    /// Period of the buffer time series, seconds.
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    /// Period of topology snapshots, seconds.
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Number of ticks the run will take.
    pub fn ticks(&self) -> usize {
        if self.tick > 0.0 && self.duration > 0.0 {
            (self.duration / self.tick).round() as usize
        } else {
            0
        }
    }

    /// Every problem with the scenario, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        check(self.tick > 0.0 && self.tick.is_finite(), format!("tick: must be > 0, got {}", self.tick));
        check(
            self.duration == 0.0 || self.duration >= self.tick,
            format!("duration: must be 0 or >= tick, got {}", self.duration),
        );
        check(self.duration >= 0.0 && self.duration.is_finite(), format!("duration: invalid {}", self.duration));
        check(
            self.irm_seed_graph.contains(&self.base_node),
            format!("base_node: {} not in irm_seed_graph", self.base_node),
        );
        if let Err(e) = self.model.validate() {
            check(false, format!("model: {e}"));
        }
        for (name, r) in [("base_radio", &self.base_radio), ("droppable_radio", &self.droppable_radio)] {
            check(r.bandwidth > 0.0, format!("{name}.bandwidth: must be > 0, got {}", r.bandwidth));
        }
        let ch = &self.channel;
        check(
            ch.efficiency > 0.0 && ch.efficiency <= 1.0,
            format!("channel.efficiency: must be in (0, 1], got {}", ch.efficiency),
        );
        check(
            ch.loss_snr_lo < ch.loss_snr_hi,
            format!(
                "channel: loss_snr_lo {} must be below loss_snr_hi {}",
                ch.loss_snr_lo, ch.loss_snr_hi
            ),
        );
        if let Err(e) = self.drop.validate() {
            check(false, format!("drop: {e}"));
        }
        if let Err(e) = self.return_to_comms.validate() {
            check(false, format!("return_to_comms: {e}"));
        }
        let t = &self.transport;
        check(t.retransmit_timeout > 0.0, format!("transport.retransmit_timeout: must be > 0, got {}", t.retransmit_timeout));
        check(t.window_chunks > 0, "transport.window_chunks: must be > 0".into());
        check(
            t.rate_smoothing > 0.0 && t.rate_smoothing < 1.0,
            format!("transport.rate_smoothing: must be in (0, 1), got {}", t.rate_smoothing),
        );
        check(
            t.time_sensitive_share >= 0.0 && t.time_sensitive_share <= 1.0,
            format!("transport.time_sensitive_share: must be in [0, 1], got {}", t.time_sensitive_share),
        );
        check(self.sample_interval > 0.0, "sample_interval: must be > 0".into());
        check(self.snapshot_interval > 0.0, "snapshot_interval: must be > 0".into());
        check(self.stale_horizon > 0.0, "stale_horizon: must be > 0".into());
        check(self.intent_horizon > 0.0, "intent_horizon: must be > 0".into());

        let mut ids = BTreeSet::new();
        for (i, r) in self.robots.iter().enumerate() {
            let at = format!("robots[{i}]");
            check(!r.id.is_empty(), format!("{at}.id: empty"));
            check(ids.insert(r.id.as_str()), format!("{at}.id: duplicate {}", r.id));
            check(
                r.id != self.base_node.as_str() && !r.id.starts_with("radio:"),
                format!("{at}.id: {} clashes with a network node name", r.id),
            );
            check(
                self.irm_seed_graph.contains(&r.start),
                format!("{at}.start: {} not in irm_seed_graph", r.start),
            );
            check(
                r.speed >= 0.0 && r.speed.is_finite() && (r.speed > 0.0 || r.behavior == RobotBehavior::Stationary),
                format!("{at}.speed: must be > 0 for exploring robots, got {}", r.speed),
            );
            check(r.slots <= MAX_SLOTS, format!("{at}.slots: at most {MAX_SLOTS}, got {}", r.slots));
            check(r.radio.bandwidth > 0.0, format!("{at}.radio.bandwidth: must be > 0"));
        }
        let mut topics = BTreeSet::new();
        for (i, tr) in self.traffic.iter().enumerate() {
            let at = format!("traffic[{i}]");
            check(ids.contains(tr.robot.as_str()), format!("{at}.robot: unknown robot {}", tr.robot));
            if let Err(e) = tr.topic.validate() {
                check(false, format!("{at}.topic: {e}"));
            }
            check(
                topics.insert((tr.robot.as_str(), tr.topic.topic_id)),
                format!("{at}.topic: id {} reused for robot {}", tr.topic.topic_id, tr.robot),
            );
            check(tr.rate >= 0.0 && tr.rate.is_finite(), format!("{at}.rate: must be >= 0"));
            check(tr.message_bytes > 0, format!("{at}.message_bytes: must be > 0"));
        }
        for (i, o) in self.outages.iter().enumerate() {
            check(ids.contains(o.robot.as_str()), format!("outages[{i}].robot: unknown robot {}", o.robot));
            check(o.start < o.end, format!("outages[{i}]: start {} must precede end {}", o.start, o.end));
        }
        v
    }
}
