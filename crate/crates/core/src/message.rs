//! Application messages exchanged between the DMS and grid nodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Index of a node in the generated topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Traffic class; each class has its own delay limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    Monitoring,
    Control,
}

impl MessageClass {
    pub const ALL: [MessageClass; 2] = [MessageClass::Monitoring, MessageClass::Control];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageClass::Monitoring => "monitoring",
            MessageClass::Control => "control",
        }
    }

    pub fn index(self) -> usize {
        match self {
            MessageClass::Monitoring => 0,
            MessageClass::Control => 1,
        }
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Request,
    Response,
    ControlCommand,
    ControlAck,
    /// Notification from the DMR interface telling the DMS to change its
    /// per-node polling period. Never carried over a link.
    RateUpdate {
        poll_period_ticks: u64,
    },
}

impl MessageKind {
    /// True for messages that open an exchange at the DMS.
    pub fn is_outbound(self) -> bool {
        matches!(self, MessageKind::Request | MessageKind::ControlCommand)
    }

    pub fn is_reply(self) -> bool {
        matches!(self, MessageKind::Response | MessageKind::ControlAck)
    }
}

/// A monitoring or control message with the timestamps each perspective
/// records for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimMessage {
    pub id: u64,
    pub class: MessageClass,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bytes: u32,
    pub kind: MessageKind,
    pub created_at_it: SimTime,
    pub delivered_at_it: Option<SimTime>,
    pub sent_at_comm: Option<SimTime>,
    pub delivered_at_comm: Option<SimTime>,
    pub correlation_id: Option<u64>,
}

impl SimMessage {
    pub fn new(
        id: u64,
        class: MessageClass,
        kind: MessageKind,
        src: NodeId,
        dst: NodeId,
        payload_bytes: u32,
        created_at_it: SimTime,
    ) -> Self {
        debug_assert!(payload_bytes > 0 || matches!(kind, MessageKind::RateUpdate { .. }));
        SimMessage {
            id,
            class,
            src,
            dst,
            payload_bytes,
            kind,
            created_at_it,
            delivered_at_it: None,
            sent_at_comm: None,
            delivered_at_comm: None,
            correlation_id: None,
        }
    }

    pub fn with_correlation(mut self, request_id: u64) -> Self {
        self.correlation_id = Some(request_id);
        self
    }

    /// Network-perspective delay, once the network has delivered it.
    pub fn comm_delay(&self) -> Option<SimTime> {
        match (self.sent_at_comm, self.delivered_at_comm) {
            (Some(sent), Some(done)) => Some(done - sent),
            _ => None,
        }
    }

    /// Application-perspective delay, once the receiving application has it.
    pub fn it_delay(&self) -> Option<SimTime> {
        self.delivered_at_it.map(|d| d - self.created_at_it)
    }
}
