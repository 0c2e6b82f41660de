//! IT federate: the DMS application polling grid endpoints and commanding
//! switches, and the endpoints answering.
//!
//! Both ends of every exchange live here; the network federate sits in
//! between. An exchange is a request or command from the DMS plus the
//! endpoint's response or acknowledgement.

mod schedule;

pub use schedule::{DueWork, PollingSchedule};

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{PayloadTable, ScenarioConfig};
use crate::message::{MessageClass, MessageKind, NodeId, SimMessage};
use crate::metrics::IntervalMetrics;
use crate::net::transport::exchange_wire_bits;
use crate::proto::{Federate, FederateError, Grant, Published, StepOutput};
use crate::time::{IntervalIndex, SimTime};
use crate::topology::{NodeKind, Topology};

// Keeps traffic draws independent of the topology stream.
const TRAFFIC_STREAM: u64 = 0x7472_6166;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ItError {
    #[error("UnknownCorrelation: reply {msg_id} matches no open request")]
    UnknownCorrelation { msg_id: u64 },
    #[error("interval {0} is not complete yet")]
    IntervalNotComplete(u64),
}

/// Payload an endpoint of `kind` sends back.
pub fn response_payload(payload: &PayloadTable, kind: NodeKind) -> u32 {
    match kind {
        NodeKind::Substation => payload.substation,
        NodeKind::HvaLv => payload.hva_lv,
        NodeKind::PvPlant | NodeKind::WindFarm => payload.der,
        _ => payload.switch,
    }
}

/// Wire bits of one monitoring exchange with an endpoint of `kind`.
pub fn monitoring_exchange_bits(cfg: &ScenarioConfig, kind: NodeKind) -> u64 {
    exchange_wire_bits(cfg.payload.dms_request, response_payload(&cfg.payload, kind), &cfg.transport)
}

/// Wire bits of one command and its acknowledgement.
pub fn control_exchange_bits(cfg: &ScenarioConfig) -> u64 {
    exchange_wire_bits(cfg.payload.dms_command, cfg.payload.switch, &cfg.transport)
}

/// Monitoring load offered to the network at the nominal polling rate.
pub fn monitoring_offered_bps(cfg: &ScenarioConfig, topo: &Topology) -> f64 {
    topo.monitored().map(|n| monitoring_exchange_bits(cfg, n.kind) as f64).sum::<f64>() * cfg.lambda_m_hz
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeRecord {
    pub node: NodeId,
    pub class: MessageClass,
    pub request: SimMessage,
    pub response: Option<SimMessage>,
}

impl ExchangeRecord {
    /// Reply delivered at the DMS minus request creation.
    pub fn it_delay(&self) -> Option<SimTime> {
        let delivered = self.response.as_ref()?.delivered_at_it?;
        Some(delivered - self.request.created_at_it)
    }

    /// Network delay of both legs.
    pub fn comm_delay(&self) -> Option<SimTime> {
        Some(self.request.comm_delay()? + self.response.as_ref()?.comm_delay()?)
    }

    /// When the outcome became known, and whether it met `limit`; `None`
    /// while it is still open at `now`.
    pub fn outcome(&self, limit: SimTime, now: SimTime) -> Option<(SimTime, bool)> {
        if let Some(d) = self.it_delay() {
            if d <= limit {
                return Some((self.request.created_at_it + d, true));
            }
        }
        let deadline = self.request.created_at_it + limit;
        (deadline <= now).then_some((deadline, false))
    }
}

/// A message delivered to its IT endpoint, as seen by the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeliveredLeg {
    pub class: MessageClass,
    pub delivered_at_comm: SimTime,
    pub comm_delay: SimTime,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ItStats {
    /// Messages handed to the network, per class (rate updates excluded).
    pub published: [u64; 2],
    pub received: [u64; 2],
    pub unknown_correlation: u64,
    pub rate_updates: u64,
}

pub struct ItFederate {
    cfg: ScenarioConfig,
    topo: Topology,
    schedule: PollingSchedule,
    exchange_bits: Vec<u64>,
    next_msg_id: u64,
    open: HashMap<u64, usize>,
    records: Vec<ExchangeRecord>,
    legs: Vec<DeliveredLeg>,
    stats: ItStats,
    horizon: SimTime,
}

impl ItFederate {
    pub fn new(cfg: &ScenarioConfig, topo: &Topology) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(TRAFFIC_STREAM);
        let monitored: Vec<NodeId> = topo.monitored().map(|n| n.id).collect();
        let switches: Vec<NodeId> = topo.of_kind(NodeKind::SwitchNode).map(|n| n.id).collect();
        let ders: Vec<NodeId> = topo.nodes().iter().filter(|n| n.kind.is_der()).map(|n| n.id).collect();
        let schedule = PollingSchedule::new(
            &monitored,
            cfg.poll_period(),
            cfg.arrivals,
            switches,
            cfg.control_period(),
            cfg.control_burst_size as usize,
            ders,
            cfg.der_control_period_s.map(SimTime::from_secs_f64),
            rng,
        );
        let exchange_bits = topo.nodes().iter().map(|n| monitoring_exchange_bits(cfg, n.kind)).collect();
        let offered = monitoring_offered_bps(cfg, topo);
        let lte_total = cfg.lte_bs_capacity_bps as f64 * cfg.lte_bs_count as f64;
        if offered >= lte_total {
            log::warn!("monitoring load {offered:.0} bit/s exceeds the LTE capacity {lte_total:.0} bit/s");
        }
        if offered <= cfg.dmr_capacity_bps as f64 {
            log::warn!(
                "monitoring load {offered:.0} bit/s fits the DMR channel ({} bit/s); failover will not overload it",
                cfg.dmr_capacity_bps
            );
        }
        ItFederate {
            cfg: cfg.clone(),
            topo: topo.clone(),
            schedule,
            exchange_bits,
            next_msg_id: 1,
            open: HashMap::new(),
            records: Vec::new(),
            legs: Vec::new(),
            stats: ItStats::default(),
            horizon: cfg.horizon(),
        }
    }

    pub fn records(&self) -> &[ExchangeRecord] {
        &self.records
    }

    pub fn legs(&self) -> &[DeliveredLeg] {
        &self.legs
    }

    pub fn stats(&self) -> ItStats {
        self.stats
    }

    pub fn poll_period(&self) -> SimTime {
        self.schedule.period()
    }

    fn new_id(&mut self) -> u64 {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        id
    }

    fn open_exchange(&mut self, at: SimTime, node: NodeId, class: MessageClass) -> SimMessage {
        let (kind, payload) = match class {
            MessageClass::Monitoring => (MessageKind::Request, self.cfg.payload.dms_request),
            MessageClass::Control => (MessageKind::ControlCommand, self.cfg.payload.dms_command),
        };
        let id = self.new_id();
        let msg = SimMessage::new(id, class, kind, self.topo.dms(), node, payload, at);
        self.open.insert(id, self.records.len());
        self.records.push(ExchangeRecord { node, class, request: msg.clone(), response: None });
        msg
    }

    /// DMS requests and commands due within the slot, in time order.
    pub fn generate_slot_traffic(&mut self, grant: &Grant) -> Vec<SimMessage> {
        let work = self.schedule.pop_due(grant.end, self.horizon);
        let mut out = Vec::with_capacity(work.polls.len() + work.commands.len());
        for (t, node) in work.polls {
            out.push(self.open_exchange(t, node, MessageClass::Monitoring));
        }
        for (t, node) in work.commands {
            out.push(self.open_exchange(t, node, MessageClass::Control));
        }
        out.sort_by_key(|m| (m.created_at_it, m.id));
        out
    }

    /// Handles one message arriving from the network at `now`; returns the
    /// endpoint's reply, if any.
    pub fn on_deliver(&mut self, mut msg: SimMessage, now: SimTime) -> Result<Option<SimMessage>, ItError> {
        msg.delivered_at_it = Some(now);
        if let MessageKind::RateUpdate { poll_period_ticks } = msg.kind {
            self.stats.rate_updates += 1;
            let bits = &self.exchange_bits;
            log::info!("polling period set to {} at {}", SimTime(poll_period_ticks), now);
            self.schedule.reschedule(now, SimTime(poll_period_ticks), |n| bits[n.0 as usize]);
            return Ok(None);
        }
        self.stats.received[msg.class.index()] += 1;
        if let (Some(delivered_at_comm), Some(comm_delay)) = (msg.delivered_at_comm, msg.comm_delay()) {
            self.legs.push(DeliveredLeg { class: msg.class, delivered_at_comm, comm_delay });
        }
        match msg.kind {
            MessageKind::Request | MessageKind::ControlCommand => {
                if let Some(&idx) = self.open.get(&msg.id) {
                    self.records[idx].request = msg.clone();
                }
                let node = msg.dst;
                let (kind, payload) = match msg.kind {
                    MessageKind::Request => {
                        (MessageKind::Response, response_payload(&self.cfg.payload, self.topo.kind(node)))
                    }
                    _ => (MessageKind::ControlAck, self.cfg.payload.switch),
                };
                let id = self.new_id();
                let reply = SimMessage::new(id, msg.class, kind, node, msg.src, payload, now).with_correlation(msg.id);
                Ok(Some(reply))
            }
            MessageKind::Response | MessageKind::ControlAck => {
                let corr = msg.correlation_id.unwrap_or(u64::MAX);
                match self.open.remove(&corr) {
                    Some(idx) => {
                        self.records[idx].response = Some(msg);
                        Ok(None)
                    }
                    None => {
                        self.stats.unknown_correlation += 1;
                        Err(ItError::UnknownCorrelation { msg_id: msg.id })
                    }
                }
            }
            MessageKind::RateUpdate { .. } => unreachable!("handled above"),
        }
    }

    fn deliver_all(&mut self, inbox: Vec<SimMessage>, now: SimTime) -> Vec<SimMessage> {
        let mut replies = Vec::new();
        for msg in inbox {
            match self.on_deliver(msg, now) {
                Ok(Some(reply)) => replies.push(reply),
                Ok(None) => {}
                Err(e) => log::warn!("{e}"),
            }
        }
        replies
    }

    /// `(d_it, d_comm)` of every completed exchange.
    pub fn delay_pairs(&self) -> Vec<(SimTime, SimTime)> {
        self.records.iter().filter_map(|r| Some((r.it_delay()?, r.comm_delay()?))).collect()
    }

    /// Number of complete reporting intervals within the horizon.
    pub fn interval_count(&self) -> u64 {
        let w = self.cfg.metrics_interval().ticks();
        self.horizon.ticks().checked_div(w).unwrap_or(0)
    }

    /// Per-class metrics for every complete interval, as observed at `now`.
    ///
    /// An exchange counts in the interval where its outcome became known:
    /// on reply delivery if within the limit, otherwise at creation plus the
    /// limit. Exchanges still open at `now` are left out.
    pub fn interval_metrics(&self, now: SimTime) -> Vec<IntervalMetrics> {
        let w = self.cfg.metrics_interval();
        let n = self.interval_count() as usize;
        let mut outcomes: Vec<[BTreeMap<NodeId, Vec<bool>>; 2]> = vec![Default::default(); n];
        for r in &self.records {
            let Some((t, ok)) = r.outcome(self.cfg.delay_limit(r.class), now) else {
                continue;
            };
            let i = (t.ticks() / w.ticks()) as usize;
            if i < n {
                outcomes[i][r.class.index()].entry(r.node).or_default().push(ok);
            }
        }
        let mut delays: Vec<[Vec<f64>; 2]> = vec![Default::default(); n];
        for leg in &self.legs {
            let i = (leg.delivered_at_comm.ticks() / w.ticks()) as usize;
            if i < n {
                delays[i][leg.class.index()].push(leg.comm_delay.as_secs_f64());
            }
        }
        let mut out = Vec::with_capacity(2 * n);
        for (i, (per_class, delay)) in outcomes.into_iter().zip(delays).enumerate() {
            for class in MessageClass::ALL {
                let c = class.index();
                let count = per_class[c].values().map(Vec::len).sum();
                let per_node = per_class[c]
                    .iter()
                    .map(|(&node, oks)| (node, oks.iter().filter(|&&ok| ok).count() as f64 / oks.len() as f64))
                    .collect();
                out.push(IntervalMetrics::from_parts(IntervalIndex(i as u64), class, per_node, count, &delay[c]));
            }
        }
        out
    }

    /// Per-class metrics of one interval; it must have ended by `now`.
    pub fn snapshot_reliability(&self, interval: IntervalIndex, now: SimTime) -> Result<Vec<IntervalMetrics>, ItError> {
        let end = SimTime((interval.0 + 1) * self.cfg.metrics_interval().ticks());
        if end > now || interval.0 >= self.interval_count() {
            return Err(ItError::IntervalNotComplete(interval.0));
        }
        Ok(self.interval_metrics(now).into_iter().filter(|m| m.interval_index == interval).collect())
    }
}

impl Federate for ItFederate {
    fn step(&mut self, grant: &Grant, inbox: Vec<SimMessage>) -> Result<StepOutput, FederateError> {
        let replies = self.deliver_all(inbox, grant.start);
        let requests = self.generate_slot_traffic(grant);
        let mut outbox: Vec<Published> =
            replies.into_iter().chain(requests).map(|msg| Published { at: msg.created_at_it, msg }).collect();
        outbox.sort_by_key(|p| (p.at, p.msg.id));
        for p in &outbox {
            self.stats.published[p.msg.class.index()] += 1;
        }
        Ok(StepOutput { outbox, done: grant.end >= self.horizon })
    }

    fn absorb(&mut self, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), FederateError> {
        // replies produced now would never leave; only the bookkeeping matters
        self.deliver_all(msgs, at);
        Ok(())
    }
}
