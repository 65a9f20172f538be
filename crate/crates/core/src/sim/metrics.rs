use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{Direction, Scenario};
use super::SimError;
use crate::behaviors::{CommsMode, DropAction};
use crate::transport::{DataClass, TopicId};

/// Width of the sliding window for peak data rates, seconds.
pub const PEAK_WINDOW: f64 = 10.0;

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start {
        t: f64,
        seed: u64,
        duration: f64,
        tick: f64,
        robots: Vec<String>,
    },
    /// Per-robot state at the end of a tick.
    Sample {
        t: f64,
        robot: String,
        /// Aggregate reliable bytes awaiting ACKs on the robot.
        buffer_bytes: u64,
        /// Cumulative ACK-confirmed bytes sent by the robot.
        acked_bytes: u64,
        connected: bool,
        bottleneck_db: f64,
        /// Roadmap distance from base.
        distance_m: f64,
        mode: CommsMode,
    },
    /// Message payload bytes delivered at and from the base during a tick.
    Traffic {
        t: f64,
        to_base_bytes: u64,
        from_base_bytes: u64,
    },
    Delivery {
        t: f64,
        robot: String,
        direction: Direction,
        topic: TopicId,
        class: DataClass,
        seq: u32,
        latency: f64,
    },
    #[serde(rename = "drop")]
    RadioDrop {
        t: f64,
        robot: String,
        action: DropAction,
    },
    Mode {
        t: f64,
        robot: String,
        from: CommsMode,
        to: CommsMode,
        target: Option<String>,
    },
    BehaviorError {
        t: f64,
        robot: String,
        message: String,
    },
    End {
        t: f64,
    },
}

/// Mission summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Longest stretch any robot held data without ACK progress, seconds.
    pub max_delay: f64,
    /// Farthest roadmap distance from base reached while connected, meters.
    pub effective_comm_range: f64,
    /// Best robot's connected time with a low buffer, seconds.
    pub up_time: f64,
    /// `up_time` as a percentage of the duration.
    pub up_time_percent: f64,
    pub up_time_per_robot: BTreeMap<String, f64>,
    /// Bits per second.
    pub peak_rate_to_base: f64,
    /// Bits per second.
    pub peak_rate_from_base: f64,
    pub deployed_radios: usize,
    pub jammed_drops: usize,
    /// Mean delivery latency per data class, seconds.
    pub mean_latency: BTreeMap<String, f64>,
    pub messages_delivered: usize,
    pub duration: f64,
}

/// Serializes events as JSON lines.
pub fn event_log_lines(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_event_log(text: &str) -> Result<Vec<Event>, SimError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SimError::Log(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn class_name(class: DataClass) -> &'static str {
    match class {
        DataClass::Key => "key",
        DataClass::MissionCritical => "mission_critical",
        DataClass::TimeSensitive => "time_sensitive",
    }
}

#[derive(Default)]
struct RobotTrack {
    last_ok: f64,
    stalled: bool,
    prev_acked: u64,
    up_ticks: u64,
}

/// Derives the mission metrics from a complete event log.
pub fn compute_metrics(events: &[Event], scenario: &Scenario) -> Result<MetricsReport, SimError> {
    let (start, duration, tick) = match events.first() {
        Some(Event::Start {
            t, duration, tick, ..
        }) => (*t, *duration, *tick),
        _ => return Err(SimError::Log("log does not begin with a start event".into())),
    };
    let end = match events.last() {
        Some(Event::End { t }) => *t,
        _ => return Err(SimError::Log("log is truncated: no end event".into())),
    };
    let lower = scenario.return_to_comms.lower_bytes;

    let mut report = MetricsReport {
        duration,
        ..Default::default()
    };
    let mut tracks: BTreeMap<&str, RobotTrack> = BTreeMap::new();
    let mut to_base = Vec::new();
    let mut from_base = Vec::new();
    let mut latency: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();

    for e in events {
        match e {
            Event::Sample {
                t,
                robot,
                buffer_bytes,
                acked_bytes,
                connected,
                distance_m,
                ..
            } => {
                let tr = tracks.entry(robot).or_insert_with(|| RobotTrack {
                    last_ok: start,
                    ..Default::default()
                });
                let progress = *buffer_bytes == 0 || *acked_bytes > tr.prev_acked;
                if progress {
                    if tr.stalled {
                        report.max_delay = report.max_delay.max(t - tr.last_ok);
                    }
                    tr.last_ok = *t;
                    tr.stalled = false;
                } else {
                    tr.stalled = true;
                }
                tr.prev_acked = *acked_bytes;
                if *connected {
                    report.effective_comm_range = report.effective_comm_range.max(*distance_m);
                    if *buffer_bytes < lower {
                        tr.up_ticks += 1;
                    }
                }
            }
            Event::Traffic {
                to_base_bytes,
                from_base_bytes,
                ..
            } => {
                to_base.push(*to_base_bytes);
                from_base.push(*from_base_bytes);
            }
            Event::Delivery {
                class, latency: l, ..
            } => {
                let entry = latency.entry(class_name(*class)).or_default();
                entry.0 += l;
                entry.1 += 1;
                report.messages_delivered += 1;
            }
            Event::RadioDrop {
                action: DropAction::Drop { jammed, .. } | DropAction::Retry { jammed, .. },
                ..
            } => {
                if *jammed {
                    report.jammed_drops += 1;
                } else {
                    report.deployed_radios += 1;
                }
            }
            _ => {}
        }
    }
    for (robot, tr) in &tracks {
        if tr.stalled {
            report.max_delay = report.max_delay.max(end - tr.last_ok);
        }
        let up = tr.up_ticks as f64 * tick;
        report.up_time = report.up_time.max(up);
        report.up_time_per_robot.insert(robot.to_string(), up);
    }
    if duration > 0.0 {
        report.up_time_percent = 100.0 * report.up_time / duration;
    }
    report.peak_rate_to_base = peak_rate(&to_base, tick);
    report.peak_rate_from_base = peak_rate(&from_base, tick);
    report.mean_latency = latency
        .into_iter()
        .map(|(k, (sum, n))| (k.to_string(), sum / n as f64))
        .collect();
    Ok(report)
}

/// Highest mean bit rate over any window of [`PEAK_WINDOW`] seconds of
/// per-tick byte counts. Shorter series use their full length.
fn peak_rate(bytes_per_tick: &[u64], tick: f64) -> f64 {
    if bytes_per_tick.is_empty() || tick <= 0.0 {
        return 0.0;
    }
    let n = ((PEAK_WINDOW / tick).round() as usize).clamp(1, bytes_per_tick.len());
    let mut sum: u64 = bytes_per_tick[..n].iter().sum();
    let mut best = sum;
    for i in n..bytes_per_tick.len() {
        sum = sum + bytes_per_tick[i] - bytes_per_tick[i - n];
        best = best.max(sum);
    }
    best as f64 * 8.0 / (n as f64 * tick)
}
