//! JSON-lines framing: one `{"t":…,"slot":…,"body":{…}}` object per line.
//! Times travel as integer ticks; there are no floats on the wire.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::message::SimMessage;
use crate::time::TimeslotIndex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederateEnvelope {
    pub slot: TimeslotIndex,
    pub body: EnvelopeBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvelopeBody {
    Join {
        name: String,
    },
    JoinAck {
        fid: u32,
        tau_ticks: u64,
    },
    Grant {
        end_ticks: u64,
    },
    /// federate → RTI only
    Publish {
        at_ticks: u64,
        msg: SimMessage,
    },
    /// RTI → federate only
    Deliver {
        at_ticks: u64,
        msg: SimMessage,
    },
    AckSlot,
    Done,
    Error {
        code: String,
        detail: String,
    },
}

impl EnvelopeBody {
    pub fn type_str(&self) -> &'static str {
        match self {
            EnvelopeBody::Join { .. } => "JOIN",
            EnvelopeBody::JoinAck { .. } => "JOIN_ACK",
            EnvelopeBody::Grant { .. } => "GRANT",
            EnvelopeBody::Publish { .. } => "PUBLISH",
            EnvelopeBody::Deliver { .. } => "DELIVER",
            EnvelopeBody::AckSlot => "ACK_SLOT",
            EnvelopeBody::Done => "DONE",
            EnvelopeBody::Error { .. } => "ERROR",
        }
    }
}

impl FederateEnvelope {
    pub fn new(slot: TimeslotIndex, body: EnvelopeBody) -> Self {
        FederateEnvelope { slot, body }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("DecodeError at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

#[derive(Serialize)]
struct Frame<'a, B: Serialize> {
    t: &'a str,
    slot: u64,
    body: B,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    t: String,
    slot: u64,
    body: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinBody {
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinAckBody {
    fid: u32,
    tau_ticks: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantBody {
    end_ticks: u64,
}

#[derive(Serialize)]
struct MsgBodyRef<'a> {
    at_ticks: u64,
    msg: &'a SimMessage,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MsgBody {
    at_ticks: u64,
    msg: SimMessage,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyBody {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorBody {
    code: String,
    detail: String,
}

fn frame_bytes<B: Serialize>(t: &str, slot: u64, body: B) -> Vec<u8> {
    let mut out = serde_json::to_vec(&Frame { t, slot, body }).expect("envelope serializes");
    out.push(b'\n');
    out
}

/// Encodes one envelope as a newline-terminated frame.
pub fn encode_envelope(env: &FederateEnvelope) -> Vec<u8> {
    let slot = env.slot.0;
    let t = env.body.type_str();
    match &env.body {
        EnvelopeBody::Join { name } => frame_bytes(t, slot, JoinBody { name: name.clone() }),
        EnvelopeBody::JoinAck { fid, tau_ticks } => {
            frame_bytes(t, slot, JoinAckBody { fid: *fid, tau_ticks: *tau_ticks })
        }
        EnvelopeBody::Grant { end_ticks } => frame_bytes(t, slot, GrantBody { end_ticks: *end_ticks }),
        EnvelopeBody::Publish { at_ticks, msg } | EnvelopeBody::Deliver { at_ticks, msg } => {
            frame_bytes(t, slot, MsgBodyRef { at_ticks: *at_ticks, msg })
        }
        EnvelopeBody::AckSlot | EnvelopeBody::Done => frame_bytes(t, slot, EmptyBody {}),
        EnvelopeBody::Error { code, detail } => {
            frame_bytes(t, slot, ErrorBody { code: code.clone(), detail: detail.clone() })
        }
    }
}

fn json_offset(frame: &[u8], err: &serde_json::Error) -> usize {
    // Frames are single-line, so the column is the byte position.
    let mut line = 1;
    let mut offset = 0;
    for (i, b) in frame.iter().enumerate() {
        if line == err.line() {
            offset = i;
            break;
        }
        if *b == b'\n' {
            line += 1;
        }
    }
    (offset + err.column().saturating_sub(1)).min(frame.len())
}

/// Decodes one frame. A single trailing newline is accepted and ignored.
pub fn decode_envelope(frame: &[u8]) -> Result<FederateEnvelope, DecodeError> {
    let body_bytes = frame.strip_suffix(b"\n").unwrap_or(frame);
    if let Some(pos) = body_bytes.iter().position(|&b| b == b'\n') {
        return Err(DecodeError { offset: pos, reason: "embedded newline".into() });
    }
    let raw: RawFrame = serde_json::from_slice(body_bytes)
        .map_err(|e| DecodeError { offset: json_offset(body_bytes, &e), reason: e.to_string() })?;
    let body_offset = find_subslice(body_bytes, b"\"body\"").unwrap_or(0);
    let bad_body = |e: serde_json::Error| DecodeError { offset: body_offset, reason: e.to_string() };
    let body = match raw.t.as_str() {
        "JOIN" => {
            let b: JoinBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Join { name: b.name }
        }
        "JOIN_ACK" => {
            let b: JoinAckBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::JoinAck { fid: b.fid, tau_ticks: b.tau_ticks }
        }
        "GRANT" => {
            let b: GrantBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Grant { end_ticks: b.end_ticks }
        }
        "PUBLISH" => {
            let b: MsgBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Publish { at_ticks: b.at_ticks, msg: b.msg }
        }
        "DELIVER" => {
            let b: MsgBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Deliver { at_ticks: b.at_ticks, msg: b.msg }
        }
        "ACK_SLOT" => {
            let _: EmptyBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::AckSlot
        }
        "DONE" => {
            let _: EmptyBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Done
        }
        "ERROR" => {
            let b: ErrorBody = serde_json::from_value(raw.body).map_err(bad_body)?;
            EnvelopeBody::Error { code: b.code, detail: b.detail }
        }
        other => {
            return Err(DecodeError {
                offset: find_subslice(body_bytes, b"\"t\"").unwrap_or(0),
                reason: format!("unknown envelope type `{other}`"),
            })
        }
    };
    Ok(FederateEnvelope { slot: TimeslotIndex(raw.slot), body })
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}
