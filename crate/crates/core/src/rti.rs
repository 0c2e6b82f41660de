//! Runtime infrastructure: lock-step time management and message routing
//! between federates.
//!
//! Time advances in fixed slots of width τ. In each slot every active
//! federate is granted `[sτ, (s+1)τ)`, runs, and acknowledges; only when all
//! have acknowledged are the slot's messages delivered, stamped with the slot
//! end. A message published at `t` therefore reaches its subscriber at
//! `⌊t/τ⌋·τ + τ`, and no federate ever sees a grant for slot `s+1` before
//! every federate finished slot `s`.

use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::message::SimMessage;
use crate::proto::{FederateLink, Grant, Published, TransportError};
use crate::time::{SimTime, SlotClock, TimeslotIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FederateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FederateStatus {
    Joined,
    Granted,
    Advancing,
    Done,
}

#[derive(Debug, Error)]
pub enum RtiError {
    #[error("federation already started")]
    FederationStarted,
    #[error("duplicate federate name `{0}`")]
    DuplicateName(String),
    #[error("a federation needs at least two federates, got {0}")]
    TooFewFederates(usize),
    #[error("federate {} timed out in slot {}", fid.0, slot.0)]
    FederateTimeout { fid: FederateId, slot: TimeslotIndex },
    #[error("protocol violation by federate {}: {detail}", fid.0)]
    ProtocolViolation { fid: FederateId, detail: String },
    #[error("federate {} failed in slot {}: {source}", fid.0, slot.0)]
    Transport {
        fid: FederateId,
        slot: TimeslotIndex,
        #[source]
        source: TransportError,
    },
}

impl RtiError {
    fn from_transport(fid: FederateId, slot: TimeslotIndex, err: TransportError) -> Self {
        match err {
            TransportError::Timeout => RtiError::FederateTimeout { fid, slot },
            TransportError::Protocol(detail) => RtiError::ProtocolViolation { fid, detail },
            source => RtiError::Transport { fid, slot, source },
        }
    }
}

/// One delivered message in the federation trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub slot: TimeslotIndex,
    pub dest: FederateId,
    pub msg_id: u64,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub slot: TimeslotIndex,
    pub sync_time: SimTime,
    pub published: usize,
    pub delivered: usize,
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FederateTiming {
    pub name: String,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FederationResult {
    pub slots: u64,
    pub messages_published: u64,
    pub messages_delivered: u64,
    pub wallclock_s: f64,
    pub per_federate: Vec<FederateTiming>,
    /// SHA-256 over the delivery trace, lowercase hex.
    pub trace_sha256: String,
    #[serde(skip)]
    pub trace: Option<Vec<TraceEntry>>,
}

/// A failed run together with what was completed before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct FederationFailure {
    #[source]
    pub error: RtiError,
    pub partial: FederationResult,
}

struct Member<'a> {
    name: String,
    status: FederateStatus,
    link: Box<dyn FederateLink + 'a>,
    wallclock: Duration,
    outbox: Vec<Published>,
}

pub struct Rti<'a> {
    clock: SlotClock,
    members: Vec<Member<'a>>,
    routes: Vec<Option<FederateId>>,
    slot: TimeslotIndex,
    started: bool,
    hasher: Sha256,
    trace: Option<Vec<TraceEntry>>,
    published: u64,
    delivered: u64,
    wallclock: Duration,
}

impl<'a> Rti<'a> {
    pub fn new(tau: SimTime) -> Self {
        Rti {
            clock: SlotClock::new(tau),
            members: Vec::new(),
            routes: Vec::new(),
            slot: TimeslotIndex(0),
            started: false,
            hasher: Sha256::new(),
            trace: None,
            published: 0,
            delivered: 0,
            wallclock: Duration::ZERO,
        }
    }

    /// Keeps every delivery in memory besides hashing it.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn clock(&self) -> &SlotClock {
        &self.clock
    }

    /// Registers a federate; ids are assigned 0, 1, … in call order.
    pub fn register(&mut self, name: &str, link: Box<dyn FederateLink + 'a>) -> Result<FederateId, RtiError> {
        if self.started {
            return Err(RtiError::FederationStarted);
        }
        if self.members.iter().any(|m| m.name == name) {
            return Err(RtiError::DuplicateName(name.to_string()));
        }
        self.members.push(Member {
            name: name.to_string(),
            status: FederateStatus::Joined,
            link,
            wallclock: Duration::ZERO,
            outbox: Vec::new(),
        });
        self.routes.push(None);
        Ok(FederateId(self.members.len() as u32 - 1))
    }

    /// Routes everything `from` publishes to `to`.
    pub fn connect(&mut self, from: FederateId, to: FederateId) {
        self.routes[from.0 as usize] = Some(to);
    }

    pub fn status(&self, fid: FederateId) -> FederateStatus {
        self.members[fid.0 as usize].status
    }

    pub fn current_slot(&self) -> TimeslotIndex {
        self.slot
    }

    fn active(&self) -> usize {
        self.members.iter().filter(|m| m.status != FederateStatus::Done).count()
    }

    /// Queues `msg` from `fid` for delivery at the end of the current slot.
    /// `at` must fall inside the current slot.
    pub fn publish(&mut self, fid: FederateId, msg: SimMessage, at: SimTime) -> Result<(), RtiError> {
        let idx = fid.0 as usize;
        let violation = |detail: String| Err(RtiError::ProtocolViolation { fid, detail });
        if idx >= self.members.len() {
            return violation("unknown federate".into());
        }
        let (start, end) = (self.clock.start(self.slot), self.clock.end(self.slot));
        if at < start || at >= end {
            return violation(format!(
                "message {} stamped {} outside granted slot {} [{}, {})",
                msg.id, at, self.slot.0, start, end
            ));
        }
        let Some(dest) = self.routes[idx] else {
            return violation(format!("federate `{}` has no subscriber", self.members[idx].name));
        };
        self.members[dest.0 as usize].outbox.push(Published { at, msg });
        self.published += 1;
        Ok(())
    }

    /// Runs one slot: grant, collect, synchronize, deliver.
    pub fn advance_slot(&mut self) -> Result<SyncReport, RtiError> {
        if self.members.len() < 2 {
            return Err(RtiError::TooFewFederates(self.members.len()));
        }
        self.started = true;
        let slot = self.slot;
        let grant = Grant { slot, start: self.clock.start(slot), end: self.clock.end(slot) };
        let slot_started = Instant::now();

        for (i, m) in self.members.iter_mut().enumerate() {
            if m.status == FederateStatus::Done {
                continue;
            }
            m.link.grant(grant).map_err(|e| RtiError::from_transport(FederateId(i as u32), slot, e))?;
            m.status = FederateStatus::Granted;
        }

        let published_before = self.published;
        for i in 0..self.members.len() {
            if self.members[i].status == FederateStatus::Done {
                continue;
            }
            let fid = FederateId(i as u32);
            let t0 = Instant::now();
            let reply = self.members[i].link.collect(grant).map_err(|e| RtiError::from_transport(fid, slot, e))?;
            let m = &mut self.members[i];
            m.wallclock += t0.elapsed();
            m.status = if reply.done { FederateStatus::Done } else { FederateStatus::Advancing };
            for p in reply.outbox {
                self.publish(fid, p.msg, p.at)?;
            }
        }

        let sync_time = grant.end;
        let mut delivered = 0usize;
        for i in 0..self.members.len() {
            let mut batch = std::mem::take(&mut self.members[i].outbox);
            if batch.is_empty() {
                continue;
            }
            batch.sort_by_key(|p| (p.at, p.msg.id));
            let dest = FederateId(i as u32);
            for p in &batch {
                let entry = TraceEntry { slot, dest, msg_id: p.msg.id, at: sync_time };
                self.hasher.update(slot.0.to_le_bytes());
                self.hasher.update(dest.0.to_le_bytes());
                self.hasher.update(p.msg.id.to_le_bytes());
                self.hasher.update(sync_time.ticks().to_le_bytes());
                if let Some(trace) = &mut self.trace {
                    trace.push(entry);
                }
            }
            delivered += batch.len();
            let msgs = batch.into_iter().map(|p| p.msg).collect();
            self.members[i].link.deliver(slot, sync_time, msgs).map_err(|e| RtiError::from_transport(dest, slot, e))?;
        }
        self.delivered += delivered as u64;
        self.wallclock += slot_started.elapsed();
        self.slot = TimeslotIndex(slot.0 + 1);
        Ok(SyncReport {
            slot,
            sync_time,
            published: (self.published - published_before) as usize,
            delivered,
            active: self.active(),
        })
    }

    /// Advances until `n_slots` slots ran or every federate reported done,
    /// then lets federates absorb what is still pending.
    #[allow(clippy::result_large_err)] // carries the partial result on purpose
    pub fn run(&mut self, n_slots: u64) -> Result<FederationResult, FederationFailure> {
        let outcome = self.run_inner(n_slots);
        let partial = self.result();
        match outcome {
            Ok(()) => Ok(partial),
            Err(error) => Err(FederationFailure { error, partial }),
        }
    }

    fn run_inner(&mut self, n_slots: u64) -> Result<(), RtiError> {
        if self.members.len() < 2 {
            return Err(RtiError::TooFewFederates(self.members.len()));
        }
        while self.slot.0 < n_slots && self.active() > 0 {
            self.advance_slot()?;
        }
        self.finish()
    }

    fn finish(&mut self) -> Result<(), RtiError> {
        self.started = true;
        let at = self.clock.start(self.slot);
        let last = TimeslotIndex(self.slot.0.saturating_sub(1));
        let t0 = Instant::now();
        for (i, m) in self.members.iter_mut().enumerate() {
            m.link.finish(last, at).map_err(|e| RtiError::from_transport(FederateId(i as u32), last, e))?;
            m.status = FederateStatus::Done;
        }
        self.wallclock += t0.elapsed();
        Ok(())
    }

    pub fn result(&self) -> FederationResult {
        let digest = self.hasher.clone().finalize();
        FederationResult {
            slots: self.slot.0,
            messages_published: self.published,
            messages_delivered: self.delivered,
            wallclock_s: self.wallclock.as_secs_f64(),
            per_federate: self
                .members
                .iter()
                .map(|m| FederateTiming { name: m.name.clone(), wallclock_s: m.wallclock.as_secs_f64() })
                .collect(),
            trace_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            trace: self.trace.clone(),
        }
    }
}

/// Runs a federation over the scenario horizon.
///
/// Federates are registered in the given order and connected in a ring
/// (each publishes to the next), which for two federates is the usual
/// bidirectional pairing.
#[allow(clippy::result_large_err)]
pub fn run_federation<'a>(
    cfg: &ScenarioConfig,
    federates: Vec<(&str, Box<dyn FederateLink + 'a>)>,
    record_trace: bool,
) -> Result<FederationResult, FederationFailure> {
    let mut rti = Rti::new(cfg.tau());
    rti.record_trace(record_trace);
    let n = federates.len();
    for (name, link) in federates {
        if let Err(error) = rti.register(name, link) {
            return Err(FederationFailure { error, partial: rti.result() });
        }
    }
    if n < 2 {
        return Err(FederationFailure { error: RtiError::TooFewFederates(n), partial: rti.result() });
    }
    for i in 0..n {
        rti.connect(FederateId(i as u32), FederateId(((i + 1) % n) as u32));
    }
    let n_slots = rti.clock().slots_to_cover(cfg.horizon());
    rti.run(n_slots)
}
