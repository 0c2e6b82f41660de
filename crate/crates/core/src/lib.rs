//! Co-simulation of a distribution-grid control system (IT side) and its
//! wireless communication network, coupled through a time-slotted runtime
//! infrastructure (RTI).

pub mod config;
pub mod it;
pub mod message;
pub mod metrics;
pub mod net;
pub mod proto;
pub mod rti;
pub mod time;
pub mod topology;

pub use config::{ConfigError, QosMode, ScenarioConfig};
pub use message::{MessageClass, MessageKind, NodeId, SimMessage};
pub use time::{SimTime, TimeslotIndex};
