//! Comms-aware networking for intermittently connected robot teams.
//!
//! The crate is organised bottom-up:
//!
//! - [`propagation`]: log-distance path loss, SNR prediction, Shannon
//!   capacity, model fitting and connectivity rasters.
//! - [`mesh`]: the time-stamped SNR link graph and bottleneck (max-min)
//!   routing over it.
//! - [`transport`]: the data reporter. Per-topic reliable queues, chunking,
//!   selective-repeat ARQ, in-order delivery for key data and token-bucket
//!   shaping, all over a small big-endian datagram format.
//! - [`irm`]: the shared information roadmap with comms checkpoints, dropped
//!   radios and drop intents.
//! - [`behaviors`]: radio-drop scheduling and the return-to-comms state
//!   machine.
//! - [`sim`]: a deterministic fixed-tick simulator that ties everything
//!   together and computes mission metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behaviors;
pub mod irm;
pub mod mesh;
pub mod propagation;
pub mod sim;
pub mod transport;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Position in meters, `[x, y, z]`.
pub type Point3 = [f64; 3];

/// Euclidean distance between two points.
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Identifier shared by radios, mesh nodes and roadmap nodes.
///
/// Ordering is lexicographic on the underlying string and is used for every
/// deterministic tie-break in the crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}
