//! Datagram wire format.
//!
//! ```text
//!  0      2     3     4         6           10          12          14          16
//!  +------+-----+-----+---------+-----------+-----------+-----------+-----------+-------
//!  |magic |ver  |flags|topic_id | msg_seq   |chunk_index|chunk_count|payload_len| payload
//!  +------+-----+-----+---------+-----------+-----------+-----------+-----------+-------
//! ```
//!
//! All multi-byte fields are big-endian. Flag bit 0 marks an ACK (clear for
//! DATA), bit 1 marks a reliable topic. ACKs carry no payload.

use super::{TopicId, TransportError};

pub const MAGIC: [u8; 2] = [0xAC, 0x0D];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 16;

const FLAG_ACK: u8 = 0b01;
const FLAG_RELIABLE: u8 = 0b10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatagramKind {
    Data,
    Ack,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Datagram {
    pub kind: DatagramKind,
    pub reliable: bool,
    pub topic_id: TopicId,
    pub msg_seq: u32,
    pub chunk_index: u16,
    pub chunk_count: u16,
    pub payload: Vec<u8>,
}

impl Datagram {
    /// The ACK echoing this datagram's `(topic_id, msg_seq, chunk_index)`.
    pub fn ack(&self) -> Datagram {
        Datagram {
            kind: DatagramKind::Ack,
            reliable: self.reliable,
            topic_id: self.topic_id,
            msg_seq: self.msg_seq,
            chunk_index: self.chunk_index,
            chunk_count: self.chunk_count,
            payload: Vec::new(),
        }
    }

    pub fn is_ack(&self) -> bool {
        self.kind == DatagramKind::Ack
    }

    /// Encoded size in bytes.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.wire_len());
        self.encode_into(&mut buf);
        buf
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        let mut flags = 0u8;
        if self.kind == DatagramKind::Ack {
            flags |= FLAG_ACK;
        }
        if self.reliable {
            flags |= FLAG_RELIABLE;
        }
        buf.extend_from_slice(&MAGIC);
        buf.push(VERSION);
        buf.push(flags);
        buf.extend_from_slice(&self.topic_id.to_be_bytes());
        buf.extend_from_slice(&self.msg_seq.to_be_bytes());
        buf.extend_from_slice(&self.chunk_index.to_be_bytes());
        buf.extend_from_slice(&self.chunk_count.to_be_bytes());
        buf.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        buf.extend_from_slice(&self.payload);
    }

    pub fn decode(bytes: &[u8]) -> Result<Datagram, TransportError> {
        if bytes.len() < HEADER_LEN {
            return Err(TransportError::Malformed(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[0..2] != MAGIC {
            return Err(TransportError::Malformed(format!(
                "bad magic {:02x}{:02x}",
                bytes[0], bytes[1]
            )));
        }
        if bytes[2] != VERSION {
            return Err(TransportError::Version(bytes[2]));
        }
        let flags = bytes[3];
        let be16 = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
        let topic_id = be16(4);
        let msg_seq = u32::from_be_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
        let chunk_index = be16(10);
        let chunk_count = be16(12);
        let payload_len = be16(14) as usize;

        if bytes.len() != HEADER_LEN + payload_len {
            return Err(TransportError::Malformed(format!(
                "payload_len {payload_len} but {} payload bytes",
                bytes.len() - HEADER_LEN
            )));
        }
        if chunk_index >= chunk_count {
            return Err(TransportError::Malformed(format!(
                "chunk_index {chunk_index} >= chunk_count {chunk_count}"
            )));
        }
        let kind = if flags & FLAG_ACK != 0 {
            DatagramKind::Ack
        } else {
            DatagramKind::Data
        };
        if kind == DatagramKind::Ack && payload_len != 0 {
            return Err(TransportError::Malformed("ACK with payload".into()));
        }
        Ok(Datagram {
            kind,
            reliable: flags & FLAG_RELIABLE != 0,
            topic_id,
            msg_seq,
            chunk_index,
            chunk_count,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}
