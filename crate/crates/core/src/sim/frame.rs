//! CAN-FD frames: timing, fragmentation and reassembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const MAX_PAYLOAD: usize = 64;
pub const FRAG_HEADER_LEN: usize = 5;
/// Message bytes carried per frame after the fragment header.
pub const FRAG_DATA_LEN: usize = MAX_PAYLOAD - FRAG_HEADER_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    /// Arbitration phase rate, bit/s.
    pub arb_rate: f64,
    /// Data phase rate, bit/s.
    pub data_rate: f64,
    pub arb_phase_bits: u32,
    pub data_overhead_bits: u32,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            arb_rate: 500_000.0,
            data_rate: 4_000_000.0,
            arb_phase_bits: 32,
            data_overhead_bits: 45,
        }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.arb_rate.is_finite() && self.data_rate.is_finite() && self.arb_rate > 0.0 && self.data_rate > 0.0 {
            Ok(())
        } else {
            Err(SimError::Config("bus rates must be positive".into()))
        }
    }
}

/// `arb_bits / arb_rate + (overhead_bits + 8 * len) / data_rate`, in seconds.
pub fn frame_time(payload_len: usize, cfg: &BusConfig) -> Result<f64, SimError> {
    if payload_len > MAX_PAYLOAD {
        return Err(SimError::OversizePayload(payload_len));
    }
    cfg.validate()?;
    let data_bits = cfg.data_overhead_bits as f64 + 8.0 * payload_len as f64;
    Ok(cfg.arb_phase_bits as f64 / cfg.arb_rate + data_bits / cfg.data_rate)
}

/// [`frame_time`] in whole nanoseconds, each phase rounded up.
pub fn frame_time_ns(payload_len: usize, cfg: &BusConfig) -> Result<u64, SimError> {
    frame_time(payload_len, cfg)?;
    let phase = |bits: f64, rate: f64| (bits * 1e9 / rate).ceil() as u64;
    let data_bits = cfg.data_overhead_bits as f64 + 8.0 * payload_len as f64;
    Ok(phase(cfg.arb_phase_bits as f64, cfg.arb_rate) + phase(data_bits, cfg.data_rate))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanFdFrame {
    /// 11-bit identifier; lower wins arbitration.
    pub can_id: u16,
    /// Fragment header followed by up to 59 message bytes.
    pub payload: Vec<u8>,
}

impl CanFdFrame {
    pub fn msg_id(&self) -> u8 {
        self.payload[0]
    }

    pub fn frag_index(&self) -> u16 {
        u16::from_be_bytes([self.payload[1], self.payload[2]])
    }

    pub fn frag_total(&self) -> u16 {
        u16::from_be_bytes([self.payload[3], self.payload[4]])
    }

    pub fn data(&self) -> &[u8] {
        &self.payload[FRAG_HEADER_LEN..]
    }
}

/// Splits `msg` into frames of at most 59 data bytes each. An empty message
/// still yields one (header-only) frame.
pub fn fragment(msg: &[u8], msg_id: u8, can_id: u16) -> Result<Vec<CanFdFrame>, SimError> {
    let chunks: Vec<&[u8]> = if msg.is_empty() {
        vec![&[]]
    } else {
        msg.chunks(FRAG_DATA_LEN).collect()
    };
    let total = u16::try_from(chunks.len()).map_err(|_| SimError::MessageTooLong(msg.len()))?;
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut payload = Vec::with_capacity(FRAG_HEADER_LEN + c.len());
            payload.push(msg_id);
            payload.extend_from_slice(&(i as u16).to_be_bytes());
            payload.extend_from_slice(&total.to_be_bytes());
            payload.extend_from_slice(c);
            CanFdFrame { can_id, payload }
        })
        .collect())
}

/// Rebuilds one message from its complete frame set, in any order.
pub fn reassemble(frames: &[CanFdFrame]) -> Result<Vec<u8>, SimError> {
    let first = frames.first().ok_or(SimError::Incomplete { have: 0, total: 0 })?;
    let (id, total) = (first.msg_id(), first.frag_total());
    let mut parts = BTreeMap::new();
    for f in frames {
        if f.payload.len() < FRAG_HEADER_LEN || f.msg_id() != id || f.frag_total() != total {
            return Err(SimError::MixedFragments);
        }
        if f.frag_index() >= total {
            return Err(SimError::MixedFragments);
        }
        parts.insert(f.frag_index(), f.data());
    }
    if parts.len() != total as usize {
        return Err(SimError::Incomplete {
            have: parts.len(),
            total: total as usize,
        });
    }
    Ok(parts.into_values().flatten().copied().collect())
}

/// Incremental reassembly for one message.
#[derive(Debug, Default)]
pub(crate) struct Reassembly {
    frames: Vec<CanFdFrame>,
}

impl Reassembly {
    /// Adds a frame; returns the message once all fragments arrived.
    pub fn push(&mut self, f: CanFdFrame) -> Option<Result<Vec<u8>, SimError>> {
        let total = f.frag_total() as usize;
        self.frames.push(f);
        (self.frames.len() == total).then(|| reassemble(&self.frames))
    }
}
