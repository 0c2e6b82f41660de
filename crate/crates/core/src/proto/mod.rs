//! Federate-side contract and the transports that connect federates to the
//! RTI.
//!
//! A federate only ever sees [`Federate::step`] (advance to a granted time
//! with the messages delivered at the last synchronization point) and
//! [`Federate::absorb`] (messages delivered after it stopped stepping). The
//! RTI talks to each federate through a [`FederateLink`], either in-process
//! ([`InProcLink`]) or over a newline-delimited JSON stream ([`socket`]).

mod envelope;
mod inproc;
pub mod socket;

pub use envelope::{decode_envelope, encode_envelope, DecodeError, EnvelopeBody, FederateEnvelope};
pub use inproc::InProcLink;

use thiserror::Error;

use crate::message::SimMessage;
use crate::time::{SimTime, TimeslotIndex};

/// Permission to simulate the half-open span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub slot: TimeslotIndex,
    pub start: SimTime,
    pub end: SimTime,
}

/// A message emitted by a federate, timestamped inside its granted slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Published {
    pub at: SimTime,
    pub msg: SimMessage,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct StepOutput {
    pub outbox: Vec<Published>,
    pub done: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("federate error {code}: {detail}")]
pub struct FederateError {
    pub code: String,
    pub detail: String,
}

impl FederateError {
    pub fn new(code: impl Into<String>, detail: impl Into<String>) -> Self {
        FederateError { code: code.into(), detail: detail.into() }
    }
}

pub trait Federate {
    /// Simulates up to `grant.end`. `inbox` holds the messages the RTI
    /// delivered at `grant.start`, in delivery order.
    fn step(&mut self, grant: &Grant, inbox: Vec<SimMessage>) -> Result<StepOutput, FederateError>;

    /// Receives messages delivered after the federate finished stepping.
    fn absorb(&mut self, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), FederateError>;
}

impl<F: Federate + ?Sized> Federate for &mut F {
    fn step(&mut self, grant: &Grant, inbox: Vec<SimMessage>) -> Result<StepOutput, FederateError> {
        (**self).step(grant, inbox)
    }

    fn absorb(&mut self, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), FederateError> {
        (**self).absorb(at, msgs)
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("peer disconnected")]
    Disconnected,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Federate(#[from] FederateError),
}

impl TransportError {
    pub(crate) fn from_io(err: std::io::Error) -> Self {
        match err.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => TransportError::Timeout,
            std::io::ErrorKind::UnexpectedEof
            | std::io::ErrorKind::ConnectionReset
            | std::io::ErrorKind::BrokenPipe => TransportError::Disconnected,
            _ => TransportError::Io(err),
        }
    }
}

/// RTI-side endpoint of one federate.
///
/// Per slot the RTI calls [`grant`](FederateLink::grant) on every active
/// federate, then [`collect`](FederateLink::collect) on each, then
/// [`deliver`](FederateLink::deliver) at the synchronization point.
pub trait FederateLink {
    fn grant(&mut self, grant: Grant) -> Result<(), TransportError>;

    /// Waits for the federate's messages and slot acknowledgement.
    fn collect(&mut self, grant: Grant) -> Result<StepOutput, TransportError>;

    /// Hands over messages at synchronization time `at`, ending `slot`.
    fn deliver(&mut self, slot: TimeslotIndex, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), TransportError>;

    /// Ends the federation; pending deliveries are absorbed by the federate.
    fn finish(&mut self, slot: TimeslotIndex, at: SimTime) -> Result<(), TransportError>;
}
