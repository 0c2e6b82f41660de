//! Reliable-transport framing: payload split into MSS-sized data segments,
//! each carrying a fixed header and answered by one acknowledgement frame.

use crate::config::TransportParams;
use crate::message::MessageClass;
use crate::time::{SimTime, TICKS_PER_SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDirection {
    Data,
    Ack,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFrame {
    pub id: u64,
    pub parent_msg_id: u64,
    pub class: MessageClass,
    pub seg_index: u32,
    pub seg_count: u32,
    pub bytes_on_wire: u32,
    pub direction: FrameDirection,
}

/// Number of data segments for `payload` bytes (at least one).
pub fn segment_count(payload: u32, params: &TransportParams) -> u32 {
    payload.div_ceil(params.mss_bytes).max(1)
}

/// Splits a message into data frames; ids are taken from `next_id`.
pub fn segment(
    msg_id: u64,
    class: MessageClass,
    payload: u32,
    params: &TransportParams,
    next_id: &mut u64,
) -> Vec<TransportFrame> {
    let count = segment_count(payload, params);
    (0..count)
        .map(|i| {
            let chunk = if i + 1 < count { params.mss_bytes } else { payload - params.mss_bytes * (count - 1) };
            let id = *next_id;
            *next_id += 1;
            TransportFrame {
                id,
                parent_msg_id: msg_id,
                class,
                seg_index: i,
                seg_count: count,
                bytes_on_wire: chunk + params.header_bytes,
                direction: FrameDirection::Data,
            }
        })
        .collect()
}

pub fn ack_for(data: &TransportFrame, params: &TransportParams, id: u64) -> TransportFrame {
    TransportFrame {
        id,
        parent_msg_id: data.parent_msg_id,
        class: data.class,
        seg_index: data.seg_index,
        seg_count: data.seg_count,
        bytes_on_wire: params.ack_bytes,
        direction: FrameDirection::Ack,
    }
}

/// Bytes a message puts on its link, data segments plus their acks.
pub fn message_wire_bytes(payload: u32, params: &TransportParams) -> u64 {
    let segs = segment_count(payload, params) as u64;
    payload as u64 + segs * (params.header_bytes as u64 + params.ack_bytes as u64)
}

/// Bits on the wire for one request/response exchange.
pub fn exchange_wire_bits(request: u32, response: u32, params: &TransportParams) -> u64 {
    8 * (message_wire_bytes(request, params) + message_wire_bytes(response, params))
}

/// Serialization time of `bytes` at `capacity_bps`, rounded up to a tick.
pub fn transmission_time(bytes: u64, capacity_bps: u64) -> SimTime {
    let num = bytes as u128 * 8 * TICKS_PER_SECOND as u128;
    SimTime(num.div_ceil(capacity_bps as u128) as u64)
}
