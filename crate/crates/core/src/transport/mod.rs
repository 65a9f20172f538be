//! The data reporter: disruption-tolerant, prioritized message transfer.
//!
//! Publishers hand messages to an [`Endpoint`], which keeps per-topic
//! outbound queues, chunks messages into [`Datagram`]s, paces them through
//! per-topic token buckets and retransmits unacknowledged chunks
//! (selective-repeat ARQ). The peer endpoint reassembles chunks, ACKs every
//! reliable chunk and delivers messages according to their [`DataClass`]:
//!
//! - `Key`: reliable and delivered strictly in sequence order.
//! - `MissionCritical`: reliable and delivered as soon as complete.
//! - `TimeSensitive`: best effort from a single latest-only slot.
//!
//! Queue sizes, smoothed ACK rates and estimated drain times are exposed via
//! [`Endpoint::buffer_stats`] for comms-aware behaviors.

mod bucket;
mod endpoint;
mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bucket::TokenBucket;
pub use endpoint::{BufferReport, BufferStats, Endpoint, Received};
pub use wire::{Datagram, DatagramKind, HEADER_LEN, MAGIC, VERSION};

pub type TopicId = u16;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("unknown topic {0}")]
    UnknownTopic(TopicId),
    #[error("topic {0} configured twice")]
    DuplicateTopic(TopicId),
    #[error("invalid topic {topic}: {reason}")]
    InvalidTopic { topic: TopicId, reason: String },
    #[error("message of {0} bytes needs more than 65535 chunks")]
    MessageTooLarge(usize),
    #[error("sequence numbers exhausted on topic {0}")]
    SequenceExhausted(TopicId),
    #[error("malformed datagram: {0}")]
    Malformed(String),
    #[error("unsupported datagram version {0}")]
    Version(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataClass {
    Key,
    MissionCritical,
    TimeSensitive,
}

impl DataClass {
    pub fn is_reliable(self) -> bool {
        !matches!(self, DataClass::TimeSensitive)
    }

    /// Lower ranks are served first when topics compete.
    pub fn priority_rank(self) -> u8 {
        match self {
            DataClass::MissionCritical => 0,
            DataClass::Key => 1,
            DataClass::TimeSensitive => 2,
        }
    }
}

fn default_compression_ratio() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub topic_id: TopicId,
    pub class: DataClass,
    /// Bucket refill, bytes per second. A time-sensitive topic may leave this
    /// at zero to draw from the reserved share instead.
    pub token_rate: f64,
    /// Bucket capacity, bytes.
    pub bucket_depth: f64,
    /// Largest datagram for this topic, header included.
    pub max_payload: usize,
    /// Compressed size over raw size, in (0, 1].
    #[serde(default = "default_compression_ratio")]
    pub compression_ratio: f64,
}

impl TopicConfig {
    pub fn new(topic_id: TopicId, class: DataClass, token_rate: f64, max_payload: usize) -> Self {
        Self {
            topic_id,
            class,
            token_rate,
            bucket_depth: (token_rate).max(max_payload as f64),
            max_payload,
            compression_ratio: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let fail = |reason: String| {
            Err(TransportError::InvalidTopic {
                topic: self.topic_id,
                reason,
            })
        };
        if self.class.is_reliable() && !(self.token_rate > 0.0) {
            return fail(format!("token_rate must be > 0, got {}", self.token_rate));
        }
        if !(self.token_rate >= 0.0) || !self.token_rate.is_finite() {
            return fail(format!("token_rate must be >= 0, got {}", self.token_rate));
        }
        if self.max_payload <= HEADER_LEN {
            return fail(format!(
                "max_payload {} must exceed the {HEADER_LEN}-byte header",
                self.max_payload
            ));
        }
        if self.max_payload > HEADER_LEN + u16::MAX as usize {
            return fail(format!("max_payload {} too large", self.max_payload));
        }
        if !(self.bucket_depth >= self.max_payload as f64) {
            return fail(format!(
                "bucket_depth {} smaller than max_payload {}",
                self.bucket_depth, self.max_payload
            ));
        }
        if !(self.compression_ratio > 0.0 && self.compression_ratio <= 1.0) {
            return fail(format!(
                "compression_ratio must be in (0, 1], got {}",
                self.compression_ratio
            ));
        }
        Ok(())
    }

    /// Payload bytes per chunk.
    pub fn chunk_capacity(&self) -> usize {
        self.max_payload - HEADER_LEN
    }

    /// Size of the transmitted blob for a raw payload of `len` bytes.
    pub fn compressed_len(&self, len: usize) -> usize {
        if self.compression_ratio >= 1.0 {
            len
        } else {
            (len as f64 * self.compression_ratio).ceil() as usize
        }
    }
}

/// Endpoint-wide protocol parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    /// Seconds before an unacknowledged chunk is sent again.
    pub retransmit_timeout: f64,
    /// Unacknowledged chunks allowed in flight per topic.
    pub window_chunks: usize,
    /// Smoothing factor per second for the ACK-rate average.
    pub rate_smoothing: f64,
    /// Share of the aggregate reliable rate given to time-sensitive topics
    /// configured with a zero token rate.
    pub time_sensitive_share: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            retransmit_timeout: 1.0,
            window_chunks: 64,
            rate_smoothing: 0.2,
            time_sensitive_share: 0.05,
        }
    }
}

/// A published message. On the receive side `created_at` is the time the
/// message became deliverable.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub topic_id: TopicId,
    pub seq: u32,
    pub payload: Vec<u8>,
    pub created_at: f64,
}
