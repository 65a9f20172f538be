use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

use super::{
    DataClass, Datagram, DatagramKind, Message, TokenBucket, TopicConfig, TopicId, TransportConfig,
    TransportError,
};

#[derive(Clone, Copy, Debug, PartialEq)]
enum ChunkState {
    Unsent,
    InFlight,
    Acked,
}

#[derive(Clone, Debug)]
struct Outbound {
    seq: u32,
    blob: Vec<u8>,
    chunks: Vec<ChunkState>,
    acked: usize,
    /// Next chunk never sent yet.
    next_fresh: usize,
}

impl Outbound {
    fn new(seq: u32, blob: Vec<u8>, chunk_capacity: usize) -> Self {
        let count = blob.len().div_ceil(chunk_capacity).max(1);
        Self {
            seq,
            blob,
            chunks: vec![ChunkState::Unsent; count],
            acked: 0,
            next_fresh: 0,
        }
    }

    fn chunk_bytes(&self, index: usize, capacity: usize) -> &[u8] {
        let start = (index * capacity).min(self.blob.len());
        let end = ((index + 1) * capacity).min(self.blob.len());
        &self.blob[start..end]
    }

    fn datagram(&self, topic: &TopicConfig, index: usize) -> Datagram {
        Datagram {
            kind: DatagramKind::Data,
            reliable: topic.class.is_reliable(),
            topic_id: topic.topic_id,
            msg_seq: self.seq,
            chunk_index: index as u16,
            chunk_count: self.chunks.len() as u16,
            payload: self.chunk_bytes(index, topic.chunk_capacity()).to_vec(),
        }
    }
}

/// Exponential moving average of confirmed bytes per second.
#[derive(Clone, Debug)]
struct RateMeter {
    rate: f64,
    pending: f64,
    last: f64,
    smoothing: f64,
}

impl RateMeter {
    fn new(now: f64, smoothing: f64) -> Self {
        Self {
            rate: 0.0,
            pending: 0.0,
            last: now,
            smoothing,
        }
    }

    fn update(&mut self, now: f64) {
        let dt = now - self.last;
        if dt > 0.0 {
            let instant = self.pending / dt;
            let alpha = 1.0 - (1.0 - self.smoothing).powf(dt);
            self.rate += alpha * (instant - self.rate);
            self.pending = 0.0;
            self.last = now;
        }
    }
}

#[derive(Clone, Debug)]
struct Reassembly {
    chunks: Vec<Option<Vec<u8>>>,
    received: usize,
}

#[derive(Clone, Debug, Default)]
struct Inbound {
    partial: BTreeMap<u32, Reassembly>,
    /// Every seq below this has been delivered.
    delivered_below: u32,
    delivered_above: BTreeSet<u32>,
    /// Complete key messages waiting for their predecessors.
    held: BTreeMap<u32, Vec<u8>>,
    latest_time_sensitive: Option<u32>,
}

impl Inbound {
    fn is_delivered(&self, seq: u32) -> bool {
        seq < self.delivered_below || self.delivered_above.contains(&seq)
    }

    fn mark_delivered(&mut self, seq: u32) {
        self.delivered_above.insert(seq);
        while self.delivered_above.remove(&self.delivered_below) {
            self.delivered_below += 1;
        }
    }
}

#[derive(Clone, Debug)]
struct Topic {
    config: TopicConfig,
    bucket: TokenBucket,
    next_seq: u32,
    /// Reliable messages awaiting ACKs, by seq.
    outbound: BTreeMap<u32, Outbound>,
    /// Seqs below this have no unsent chunks.
    fresh_cursor: u32,
    /// Unacknowledged chunks and their last send time.
    in_flight: BTreeMap<(u32, u16), f64>,
    /// Latest-only slot for time-sensitive data.
    slot: Option<Outbound>,
    queued_bytes: u64,
    acked_total: u64,
    rate: RateMeter,
    inbound: Inbound,
}

/// Per-topic (or aggregate, when `topic_id` is `None`) buffer statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferStats {
    pub topic_id: Option<TopicId>,
    pub queued_bytes: u64,
    /// Smoothed ACK-confirmed bytes per second.
    pub measured_rate: f64,
    /// `queued_bytes / measured_rate`, infinite when nothing is confirmed.
    pub estimated_transfer_time: f64,
}

impl BufferStats {
    fn new(topic_id: Option<TopicId>, queued_bytes: u64, measured_rate: f64) -> Self {
        let estimated_transfer_time = if measured_rate > 0.0 {
            queued_bytes as f64 / measured_rate
        } else if queued_bytes == 0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            topic_id,
            queued_bytes,
            measured_rate,
            estimated_transfer_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferReport {
    pub topics: Vec<BufferStats>,
    pub aggregate: BufferStats,
}

/// Result of handling one inbound datagram.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Received {
    pub deliverable: Vec<Message>,
    pub acks: Vec<Datagram>,
}

/// One side of a data reporter session with a single peer.
///
/// An endpoint both sends (outbound queues) and receives (reassembly and
/// ordering) and must be driven by one caller at a time.
#[derive(Clone, Debug)]
pub struct Endpoint {
    config: TransportConfig,
    topics: BTreeMap<TopicId, Topic>,
    /// Topic ids in service order.
    priority: Vec<TopicId>,
}

impl Endpoint {
    /// Buckets start empty at `now`.
    pub fn new(
        topics: &[TopicConfig],
        config: TransportConfig,
        now: f64,
    ) -> Result<Self, TransportError> {
        let reliable_rate: f64 = topics
            .iter()
            .filter(|t| t.class.is_reliable())
            .map(|t| t.token_rate)
            .sum();
        let mut map = BTreeMap::new();
        for cfg in topics {
            cfg.validate()?;
            let rate = if cfg.class == DataClass::TimeSensitive && cfg.token_rate == 0.0 {
                (reliable_rate * config.time_sensitive_share).max(f64::MIN_POSITIVE)
            } else {
                cfg.token_rate
            };
            let topic = Topic {
                config: cfg.clone(),
                bucket: TokenBucket::new(rate, cfg.bucket_depth, now),
                next_seq: 0,
                outbound: BTreeMap::new(),
                fresh_cursor: 0,
                in_flight: BTreeMap::new(),
                slot: None,
                queued_bytes: 0,
                acked_total: 0,
                rate: RateMeter::new(now, config.rate_smoothing),
                inbound: Inbound::default(),
            };
            if map.insert(cfg.topic_id, topic).is_some() {
                return Err(TransportError::DuplicateTopic(cfg.topic_id));
            }
        }
        let mut priority: Vec<TopicId> = map.keys().copied().collect();
        priority.sort_by_key(|id| (map[id].config.class.priority_rank(), *id));
        Ok(Self {
            config,
            topics: map,
            priority,
        })
    }

    pub fn config(&self) -> &TransportConfig {
        &self.config
    }

    pub fn topic_config(&self, topic_id: TopicId) -> Option<&TopicConfig> {
        self.topics.get(&topic_id).map(|t| &t.config)
    }

    /// Queues a message and returns its sequence number.
    ///
    /// Compression is modeled by size: the transmitted blob is the leading
    /// `ceil(len * compression_ratio)` bytes of the payload.
    pub fn publish(
        &mut self,
        topic_id: TopicId,
        payload: &[u8],
        _now: f64,
    ) -> Result<u32, TransportError> {
        let topic = self
            .topics
            .get_mut(&topic_id)
            .ok_or(TransportError::UnknownTopic(topic_id))?;
        let blob_len = topic.config.compressed_len(payload.len());
        let capacity = topic.config.chunk_capacity();
        if blob_len.div_ceil(capacity) > u16::MAX as usize {
            return Err(TransportError::MessageTooLarge(payload.len()));
        }
        let seq = topic.next_seq;
        topic.next_seq = seq
            .checked_add(1)
            .ok_or(TransportError::SequenceExhausted(topic_id))?;
        let out = Outbound::new(seq, payload[..blob_len].to_vec(), capacity);

        if topic.config.class.is_reliable() {
            topic.queued_bytes += blob_len as u64;
            topic.outbound.insert(seq, out);
        } else {
            topic.slot = Some(out);
        }
        Ok(seq)
    }

    /// Emits what the buckets allow: expired retransmissions first, then
    /// fresh chunks, each pass in priority order.
    pub fn service_transmit(&mut self, now: f64) -> Vec<Datagram> {
        let rto = self.config.retransmit_timeout;
        let window = self.config.window_chunks;
        let mut out = Vec::new();
        for topic in self.topics.values_mut() {
            topic.bucket.refill(now);
            topic.rate.update(now);
        }

        for id in &self.priority {
            let topic = self.topics.get_mut(id).expect("priority lists known topics");
            if !topic.config.class.is_reliable() {
                continue;
            }
            let expired: Vec<(u32, u16)> = topic
                .in_flight
                .iter()
                .filter(|(_, &sent)| now - sent >= rto)
                .map(|(&k, _)| k)
                .collect();
            for (seq, index) in expired {
                let msg = &topic.outbound[&seq];
                let dg = msg.datagram(&topic.config, index as usize);
                if !topic.bucket.try_consume(dg.wire_len()) {
                    break;
                }
                topic.in_flight.insert((seq, index), now);
                out.push(dg);
            }
        }

        for id in &self.priority {
            let topic = self.topics.get_mut(id).expect("priority lists known topics");
            if topic.config.class.is_reliable() {
                send_fresh_reliable(topic, window, now, &mut out);
            } else {
                send_time_sensitive(topic, &mut out);
            }
        }
        out
    }

    /// Processes one inbound datagram. ACKs are applied to the outbound side
    /// and produce nothing.
    pub fn handle_datagram(
        &mut self,
        datagram: &Datagram,
        now: f64,
    ) -> Result<Received, TransportError> {
        if datagram.is_ack() {
            self.handle_ack(datagram);
            return Ok(Received::default());
        }
        if datagram.chunk_index >= datagram.chunk_count {
            return Err(TransportError::Malformed(format!(
                "chunk_index {} >= chunk_count {}",
                datagram.chunk_index, datagram.chunk_count
            )));
        }
        let topic = self
            .topics
            .get_mut(&datagram.topic_id)
            .ok_or(TransportError::UnknownTopic(datagram.topic_id))?;
        let class = topic.config.class;
        let mut result = Received::default();
        if class.is_reliable() {
            result.acks.push(datagram.ack());
        }

        let inbound = &mut topic.inbound;
        let seq = datagram.msg_seq;
        let stale = match class {
            DataClass::Key => inbound.is_delivered(seq) || inbound.held.contains_key(&seq),
            DataClass::MissionCritical => inbound.is_delivered(seq),
            DataClass::TimeSensitive => inbound.latest_time_sensitive.is_some_and(|l| seq <= l),
        };
        if stale {
            return Ok(result);
        }

        let entry = inbound.partial.entry(seq).or_insert_with(|| Reassembly {
            chunks: vec![None; datagram.chunk_count as usize],
            received: 0,
        });
        if entry.chunks.len() != datagram.chunk_count as usize {
            return Err(TransportError::Malformed(format!(
                "chunk_count {} disagrees with earlier chunks of seq {seq}",
                datagram.chunk_count
            )));
        }
        let slot = &mut entry.chunks[datagram.chunk_index as usize];
        if slot.is_none() {
            *slot = Some(datagram.payload.clone());
            entry.received += 1;
        }
        if entry.received < entry.chunks.len() {
            return Ok(result);
        }

        let done = inbound.partial.remove(&seq).expect("entry exists");
        let payload: Vec<u8> = done.chunks.into_iter().flatten().flatten().collect();
        let topic_id = datagram.topic_id;
        let message = |seq, payload| Message {
            topic_id,
            seq,
            payload,
            created_at: now,
        };
        match class {
            DataClass::MissionCritical => {
                inbound.mark_delivered(seq);
                result.deliverable.push(message(seq, payload));
            }
            DataClass::Key => {
                inbound.held.insert(seq, payload);
                while let Some(p) = inbound.held.remove(&inbound.delivered_below) {
                    let s = inbound.delivered_below;
                    inbound.mark_delivered(s);
                    result.deliverable.push(message(s, p));
                }
            }
            DataClass::TimeSensitive => {
                inbound.latest_time_sensitive = Some(seq);
                inbound.partial.retain(|&s, _| s > seq);
                result.deliverable.push(message(seq, payload));
            }
        }
        Ok(result)
    }

    /// Decodes raw bytes and handles them.
    pub fn handle_bytes(&mut self, bytes: &[u8], now: f64) -> Result<Received, TransportError> {
        let dg = Datagram::decode(bytes)?;
        self.handle_datagram(&dg, now)
    }

    /// Marks the referenced chunk delivered. Unknown or repeated ACKs are
    /// ignored.
    pub fn handle_ack(&mut self, ack: &Datagram) {
        let Some(topic) = self.topics.get_mut(&ack.topic_id) else {
            debug!("ACK for unknown topic {}", ack.topic_id);
            return;
        };
        let capacity = topic.config.chunk_capacity();
        let Some(msg) = topic.outbound.get_mut(&ack.msg_seq) else {
            debug!("stale ACK for topic {} seq {}", ack.topic_id, ack.msg_seq);
            return;
        };
        let index = ack.chunk_index as usize;
        if index >= msg.chunks.len() || msg.chunks[index] != ChunkState::InFlight {
            return;
        }
        msg.chunks[index] = ChunkState::Acked;
        msg.acked += 1;
        topic.in_flight.remove(&(ack.msg_seq, ack.chunk_index));
        let bytes = msg.chunk_bytes(index, capacity).len();
        topic.rate.pending += bytes as f64;
        topic.acked_total += bytes as u64;
        if msg.acked == msg.chunks.len() {
            let size = msg.blob.len() as u64;
            topic.outbound.remove(&ack.msg_seq);
            topic.queued_bytes -= size;
        }
    }

    pub fn buffer_stats(&mut self, now: f64) -> BufferReport {
        let mut topics = Vec::with_capacity(self.topics.len());
        let mut queued = 0;
        let mut rate = 0.0;
        for (id, topic) in self.topics.iter_mut() {
            topic.rate.update(now);
            let q = topic_queued(topic);
            queued += q;
            rate += topic.rate.rate;
            topics.push(BufferStats::new(Some(*id), q, topic.rate.rate));
        }
        BufferReport {
            topics,
            aggregate: BufferStats::new(None, queued, rate),
        }
    }

    /// Bytes awaiting acknowledgement across reliable topics.
    pub fn reliable_queued_bytes(&self) -> u64 {
        self.topics
            .values()
            .filter(|t| t.config.class.is_reliable())
            .map(|t| t.queued_bytes)
            .sum()
    }

    pub fn queued_bytes(&self, topic_id: TopicId) -> Option<u64> {
        self.topics.get(&topic_id).map(topic_queued)
    }

    /// Reliable messages not yet fully acknowledged.
    pub fn queued_messages(&self, topic_id: TopicId) -> usize {
        self.topics.get(&topic_id).map_or(0, |t| t.outbound.len())
    }

    /// Sequence numbers of reliable messages still awaiting ACKs.
    pub fn queued_seqs(&self, topic_id: TopicId) -> Vec<u32> {
        self.topics
            .get(&topic_id)
            .map_or_else(Vec::new, |t| t.outbound.keys().copied().collect())
    }

    /// Complete messages received out of order and held for their
    /// predecessors.
    pub fn held_seqs(&self, topic_id: TopicId) -> Vec<u32> {
        self.topics
            .get(&topic_id)
            .map_or_else(Vec::new, |t| t.inbound.held.keys().copied().collect())
    }

    /// Payload bytes confirmed by ACKs since creation, all topics.
    pub fn acked_bytes_total(&self) -> u64 {
        self.topics.values().map(|t| t.acked_total).sum()
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = TopicId> + '_ {
        self.topics.keys().copied()
    }

    pub fn in_flight_chunks(&self, topic_id: TopicId) -> usize {
        self.topics.get(&topic_id).map_or(0, |t| t.in_flight.len())
    }
}

fn topic_queued(topic: &Topic) -> u64 {
    if topic.config.class.is_reliable() {
        topic.queued_bytes
    } else {
        topic.slot.as_ref().map_or(0, |s| s.blob.len() as u64)
    }
}

fn send_fresh_reliable(topic: &mut Topic, window: usize, now: f64, out: &mut Vec<Datagram>) {
    let cursor = topic.fresh_cursor;
    let mut next_cursor = cursor;
    'messages: for (&seq, msg) in topic.outbound.range_mut(cursor..) {
        while msg.next_fresh < msg.chunks.len() {
            if topic.in_flight.len() >= window {
                break 'messages;
            }
            let index = msg.next_fresh;
            let dg = msg.datagram(&topic.config, index);
            if !topic.bucket.try_consume(dg.wire_len()) {
                break 'messages;
            }
            msg.chunks[index] = ChunkState::InFlight;
            msg.next_fresh += 1;
            topic.in_flight.insert((seq, index as u16), now);
            out.push(dg);
        }
        next_cursor = seq + 1;
    }
    topic.fresh_cursor = next_cursor;
}

fn send_time_sensitive(topic: &mut Topic, out: &mut Vec<Datagram>) {
    let Some(msg) = topic.slot.as_mut() else {
        return;
    };
    while msg.next_fresh < msg.chunks.len() {
        let dg = msg.datagram(&topic.config, msg.next_fresh);
        if !topic.bucket.try_consume(dg.wire_len()) {
            return;
        }
        msg.next_fresh += 1;
        out.push(dg);
    }
    topic.slot = None;
}
