//! Communication-network federate: discrete-event model of the LTE cells and
//! the DMR fallback channel carrying DMS traffic.
//!
//! Every message entering the network is split into transport segments,
//! queued on one link chosen by class and link state, serialized by the
//! link's single transmitter, and delayed by the access latency. A message
//! is delivered when its last data segment arrives; each data segment is
//! answered by an acknowledgement that occupies the same channel.

pub mod link;
pub mod queue;
pub mod rate;
pub mod transport;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::config::{QosMode, ScenarioConfig, Technology};
use crate::message::{MessageClass, MessageKind, NodeId, SimMessage};
use crate::proto::{Federate, FederateError, Grant, Published, StepOutput};
use crate::time::SimTime;
use crate::topology::Topology;

use link::{LinkId, LinkModel, LinkSample};
use queue::{ClassQueues, QueueDiscipline};
use rate::RateBudget;
use transport::{ack_for, segment, FrameDirection};

/// Ids of messages the network originates; disjoint from IT-side ids.
pub const NET_MSG_ID_BASE: u64 = 1 << 62;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("NoRoute: no link up for message {msg_id}")]
    NoRoute { msg_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    TxDone { link: LinkId, epoch: u32 },
    Arrive { link: LinkId, epoch: u32 },
    LteDown,
    LteRestore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

#[derive(Debug)]
struct Transit {
    msg: SimMessage,
    remaining_segments: u32,
}

/// Per-class message counters, indexed by [`MessageClass::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub accepted: [u64; 2],
    pub delivered: [u64; 2],
    pub lost_on_failure: [u64; 2],
    pub dropped_no_route: [u64; 2],
    pub dropped_overflow: [u64; 2],
    pub rate_updates_sent: u64,
}

#[derive(Debug, Clone, Copy)]
struct RateAdaptation {
    adapted_period: SimTime,
    base_period: SimTime,
}

pub struct NetFederate {
    links: Vec<LinkModel>,
    dmr: LinkId,
    lte: Vec<LinkId>,
    /// Per node: LTE links from nearest to farthest.
    nearest_lte: Vec<Vec<LinkId>>,
    der_nodes: Vec<bool>,
    dms: NodeId,
    der_control_via: Technology,
    transport: crate::config::TransportParams,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    transit: HashMap<u64, Transit>,
    next_frame_id: u64,
    next_msg_id: u64,
    stats: NetStats,
    unprocessed: Vec<SimMessage>,
    samples: Vec<LinkSample>,
    sample_every: SimTime,
    next_sample: SimTime,
    horizon: SimTime,
    ra: Option<RateAdaptation>,
    outbox: Vec<Published>,
}

impl NetFederate {
    pub fn new(cfg: &ScenarioConfig, topo: &Topology) -> Result<Self, rate::RateError> {
        let discipline = match cfg.qos {
            QosMode::Fifo => QueueDiscipline::Fifo,
            QosMode::Wfq | QosMode::WfqRa => {
                QueueDiscipline::Wfq { w_monitoring: cfg.w_monitoring, w_control: cfg.w_control }
            }
        };
        let queues = || ClassQueues::new(discipline, cfg.queue_limit_bytes);
        let mut links = Vec::new();
        let lte_latency = cfg.access_latency(Technology::Lte);
        for i in 0..cfg.lte_bs_count as usize {
            links.push(LinkModel::new(
                i,
                format!("lte{i}"),
                Technology::Lte,
                cfg.lte_bs_capacity_bps,
                lte_latency,
                queues(),
            ));
        }
        let lte: Vec<LinkId> = (0..links.len()).collect();
        let dmr = links.len();
        links.push(LinkModel::new(
            dmr,
            "dmr",
            Technology::Dmr,
            cfg.dmr_capacity_bps,
            cfg.access_latency(Technology::Dmr),
            queues(),
        ));
        let nearest_lte = topo.nodes().iter().map(|n| topo.base_stations_by_distance(n.id)).collect();
        let der_nodes = topo.nodes().iter().map(|n| n.kind.is_der()).collect();

        let ra = if cfg.qos == QosMode::WfqRa {
            let budget = RateBudget::for_topology(cfg, topo);
            let adapted_period =
                if cfg.eq5_literal { budget.literal_period(cfg)? } else { budget.adapted_period(cfg)? };
            log::info!(
                "rate adaptation: polling period {:.1} s after failover (round {} bits, control reserve {:.2} bit/s)",
                adapted_period.as_secs_f64(),
                budget.round_bits,
                budget.control_reserve_bps
            );
            Some(RateAdaptation { adapted_period, base_period: cfg.poll_period() })
        } else {
            None
        };

        let mut net = NetFederate {
            links,
            dmr,
            lte,
            nearest_lte,
            der_nodes,
            dms: topo.dms(),
            der_control_via: cfg.der_control_via,
            transport: cfg.transport,
            events: BinaryHeap::new(),
            seq: 0,
            transit: HashMap::new(),
            next_frame_id: 0,
            next_msg_id: NET_MSG_ID_BASE,
            stats: NetStats::default(),
            unprocessed: Vec::new(),
            samples: Vec::new(),
            sample_every: cfg.metrics_interval(),
            next_sample: cfg.metrics_interval(),
            horizon: cfg.horizon(),
            ra,
            outbox: Vec::new(),
        };
        if let Some(t) = cfg.lte_fail_at() {
            net.schedule(t, EventKind::LteDown);
        }
        if let Some(t) = cfg.lte_restore_at() {
            net.schedule(t, EventKind::LteRestore);
        }
        Ok(net)
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse(Event { time, seq: self.seq, kind }));
    }

    pub fn links(&self) -> &[LinkModel] {
        &self.links
    }

    pub fn dmr_link(&self) -> LinkId {
        self.dmr
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn samples(&self) -> &[LinkSample] {
        &self.samples
    }

    /// Messages inside the network, plus any handed over after it stopped.
    pub fn in_flight(&self, class: MessageClass) -> u64 {
        let transit = self.transit.values().filter(|t| t.msg.class == class).count();
        let pending = self.unprocessed.iter().filter(|m| m.class == class).count();
        (transit + pending) as u64
    }

    /// Picks the link for `msg` given which links are currently up.
    ///
    /// Control traffic prefers the DMR channel and falls back to LTE;
    /// monitoring (and DER control configured for LTE) uses the nearest
    /// working base station and falls back to DMR.
    pub fn route(&self, msg: &SimMessage) -> Result<LinkId, NetError> {
        let endpoint = if msg.src == self.dms { msg.dst } else { msg.src };
        let is_der = self.der_nodes.get(endpoint.0 as usize).copied().unwrap_or(false);
        let prefers_dmr = msg.class == MessageClass::Control && !(is_der && self.der_control_via == Technology::Lte);
        let nearest_up = self
            .nearest_lte
            .get(endpoint.0 as usize)
            .into_iter()
            .flatten()
            .map(|&bs| self.lte[bs])
            .find(|&l| self.links[l].is_up());
        let dmr_up = self.links[self.dmr].is_up().then_some(self.dmr);
        let choice = if prefers_dmr { dmr_up.or(nearest_up) } else { nearest_up.or(dmr_up) };
        choice.ok_or(NetError::NoRoute { msg_id: msg.id })
    }

    fn kick(&mut self, link: LinkId, now: SimTime) {
        if let Some(done) = self.links[link].start_next(now) {
            let epoch = self.links[link].epoch();
            self.schedule(done, EventKind::TxDone { link, epoch });
        }
    }

    /// Takes a message in from the IT side at `now`.
    pub fn accept(&mut self, mut msg: SimMessage, now: SimTime) {
        let c = msg.class.index();
        msg.sent_at_comm = Some(now);
        self.stats.accepted[c] += 1;
        let link = match self.route(&msg) {
            Ok(l) => l,
            Err(e) => {
                log::debug!("{e}");
                self.stats.dropped_no_route[c] += 1;
                return;
            }
        };
        let frames = segment(msg.id, msg.class, msg.payload_bytes, &self.transport, &mut self.next_frame_id);
        let id = msg.id;
        self.transit.insert(id, Transit { msg, remaining_segments: frames.len() as u32 });
        for frame in frames {
            if self.links[link].enqueue(frame).is_err() {
                // frames already queued become orphans and are ignored on arrival
                self.transit.remove(&id);
                self.stats.dropped_overflow[c] += 1;
                break;
            }
        }
        self.kick(link, now);
    }

    /// Fails one link at `now`; messages that lose a data segment are lost.
    pub fn fail_link(&mut self, link: LinkId, now: SimTime) {
        let lost = self.links[link].fail();
        for frame in lost {
            if frame.direction == FrameDirection::Data && self.transit.remove(&frame.parent_msg_id).is_some() {
                self.stats.lost_on_failure[frame.class.index()] += 1;
            }
        }
        log::info!("link {} down at {}", self.links[link].name, now);
    }

    pub fn restore_link(&mut self, link: LinkId, now: SimTime) {
        self.links[link].restore();
        log::info!("link {} up at {}", self.links[link].name, now);
        self.kick(link, now);
    }

    fn publish_rate(&mut self, period: SimTime, now: SimTime) {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        let msg = SimMessage::new(
            id,
            MessageClass::Control,
            MessageKind::RateUpdate { poll_period_ticks: period.ticks() },
            self.dms,
            self.dms,
            0,
            now,
        );
        self.stats.rate_updates_sent += 1;
        self.outbox.push(Published { at: now, msg });
    }

    fn process(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::TxDone { link, epoch } => {
                if epoch != self.links[link].epoch() {
                    return;
                }
                let arrival = self.links[link].complete_transmission(now);
                self.schedule(arrival, EventKind::Arrive { link, epoch });
                self.kick(link, now);
            }
            EventKind::Arrive { link, epoch } => {
                if epoch != self.links[link].epoch() {
                    return;
                }
                let frame = self.links[link].arrive(now);
                if frame.direction == FrameDirection::Ack {
                    return;
                }
                let ack = ack_for(&frame, &self.transport, self.next_frame_id);
                self.next_frame_id += 1;
                // a full queue drops the ack; the message is unaffected
                let _ = self.links[link].enqueue(ack);
                self.kick(link, now);
                if let Some(t) = self.transit.get_mut(&frame.parent_msg_id) {
                    t.remaining_segments -= 1;
                    if t.remaining_segments == 0 {
                        let mut msg = self.transit.remove(&frame.parent_msg_id).expect("present").msg;
                        msg.delivered_at_comm = Some(now);
                        self.stats.delivered[msg.class.index()] += 1;
                        self.outbox.push(Published { at: now, msg });
                    }
                }
            }
            EventKind::LteDown => {
                for l in self.lte.clone() {
                    self.fail_link(l, now);
                }
                if let Some(ra) = self.ra {
                    self.publish_rate(ra.adapted_period, now);
                }
            }
            EventKind::LteRestore => {
                for l in self.lte.clone() {
                    self.restore_link(l, now);
                }
                if let Some(ra) = self.ra {
                    self.publish_rate(ra.base_period, now);
                }
            }
        }
    }

    fn take_sample(&mut self) {
        let t = self.next_sample;
        for l in &mut self.links {
            self.samples.push(l.sample(t));
        }
        self.next_sample = t + self.sample_every;
    }

    fn sample_due(&self, limit: SimTime) -> bool {
        self.sample_every > SimTime::ZERO && self.next_sample <= limit && self.next_sample <= self.horizon
    }

    /// Processes every event before `end`, taking link samples on the way.
    fn run_until(&mut self, end: SimTime) {
        loop {
            let next = self.events.peek().map(|Reverse(e)| e.time).filter(|&t| t < end);
            match next {
                Some(t) if self.sample_due(t) => self.take_sample(),
                Some(_) => {
                    let Reverse(ev) = self.events.pop().expect("peeked");
                    self.process(ev);
                }
                None => break,
            }
        }
        while self.sample_every > SimTime::ZERO && self.next_sample < end && self.next_sample <= self.horizon {
            self.take_sample();
        }
    }
}

impl Federate for NetFederate {
    fn step(&mut self, grant: &Grant, inbox: Vec<SimMessage>) -> Result<StepOutput, FederateError> {
        while self.sample_due(grant.start) {
            self.take_sample();
        }
        for msg in inbox {
            if matches!(msg.kind, MessageKind::RateUpdate { .. }) {
                return Err(FederateError::new("unexpected", format!("rate update {} sent to the network", msg.id)));
            }
            self.accept(msg, grant.start);
        }
        self.run_until(grant.end);
        let done = grant.end >= self.horizon;
        if done {
            while self.sample_due(self.horizon) {
                self.take_sample();
            }
        }
        let mut outbox = std::mem::take(&mut self.outbox);
        outbox.sort_by_key(|p| (p.at, p.msg.id));
        Ok(StepOutput { outbox, done })
    }

    fn absorb(&mut self, _at: SimTime, msgs: Vec<SimMessage>) -> Result<(), FederateError> {
        self.unprocessed.extend(msgs);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TopologyCounts;
    use crate::topology::NodeKind;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            topology: TopologyCounts { hva_lv: 4, switch: 2, substation: 1, pv_plant: 1, wind_farm: 1 },
            duration_s: 100.0,
            ..ScenarioConfig::default()
        }
    }

    fn request(id: u64, class: MessageClass, node: NodeId, dms: NodeId, bytes: u32) -> SimMessage {
        let kind = match class {
            MessageClass::Monitoring => MessageKind::Request,
            MessageClass::Control => MessageKind::ControlCommand,
        };
        SimMessage::new(id, class, kind, dms, node, bytes, SimTime::ZERO)
    }

    fn node_of(topo: &Topology, kind: NodeKind) -> NodeId {
        topo.of_kind(kind).next().unwrap().id
    }

    #[test]
    fn routing_follows_class_and_link_state() {
        let cfg = small_cfg();
        let topo = Topology::generate(&cfg);
        let mut net = NetFederate::new(&cfg, &topo).unwrap();
        let hva = node_of(&topo, NodeKind::HvaLv);
        let sw = node_of(&topo, NodeKind::SwitchNode);
        let mon = request(1, MessageClass::Monitoring, hva, topo.dms(), 64);
        let ctl = request(2, MessageClass::Control, sw, topo.dms(), 184);
        let nearest = topo.base_stations_by_distance(hva)[0];
        assert_eq!(net.route(&mon), Ok(nearest));
        assert_eq!(net.route(&ctl), Ok(net.dmr_link()));

        for l in 0..2 {
            net.fail_link(l, SimTime::ZERO);
        }
        assert_eq!(net.route(&mon), Ok(net.dmr_link()));
        assert_eq!(net.route(&ctl), Ok(net.dmr_link()));

        net.restore_link(0, SimTime::ZERO);
        net.fail_link(net.dmr_link(), SimTime::ZERO);
        assert_eq!(net.route(&ctl), Ok(0));
        net.fail_link(0, SimTime::ZERO);
        assert_eq!(net.route(&ctl), Err(NetError::NoRoute { msg_id: 2 }));
    }

    #[test]
    fn der_control_can_ride_lte() {
        let cfg = ScenarioConfig { der_control_via: Technology::Lte, ..small_cfg() };
        let topo = Topology::generate(&cfg);
        let net = NetFederate::new(&cfg, &topo).unwrap();
        let pv = node_of(&topo, NodeKind::PvPlant);
        let cmd = request(1, MessageClass::Control, pv, topo.dms(), 184);
        assert_eq!(net.route(&cmd), Ok(topo.base_stations_by_distance(pv)[0]));
    }

    fn run_single(cfg: &ScenarioConfig, msg_class: MessageClass, bytes: u32) -> (SimTime, SimMessage) {
        let topo = Topology::generate(cfg);
        let mut net = NetFederate::new(cfg, &topo).unwrap();
        let node = match msg_class {
            MessageClass::Monitoring => node_of(&topo, NodeKind::HvaLv),
            MessageClass::Control => node_of(&topo, NodeKind::SwitchNode),
        };
        let grant = Grant { slot: crate::time::TimeslotIndex(0), start: SimTime::ZERO, end: cfg.horizon() };
        let out = net.step(&grant, vec![request(1, msg_class, node, topo.dms(), bytes)]).unwrap();
        assert_eq!(out.outbox.len(), 1);
        let p = out.outbox.into_iter().next().unwrap();
        (p.at, p.msg)
    }

    #[test]
    fn single_segment_delay_on_dmr() {
        // 500 B payload + 40 B header at 1920 bit/s is 2.25 s, then 50 ms access
        let (at, msg) = run_single(&small_cfg(), MessageClass::Control, 500);
        assert_eq!(at, SimTime::from_secs_f64(2.3));
        assert_eq!(msg.comm_delay(), Some(SimTime::from_secs_f64(2.3)));
    }

    #[test]
    fn single_segment_delay_on_lte() {
        let (at, _) = run_single(&small_cfg(), MessageClass::Monitoring, 500);
        assert_eq!(at, SimTime::from_secs_f64(0.0864 + 0.02));
    }

    #[test]
    fn multi_segment_waits_for_acks_in_between() {
        // two segments back to back, then the last one arrives; the ack of
        // the first segment is queued behind the second and does not delay it
        let (at, _) = run_single(&small_cfg(), MessageClass::Control, 2000);
        let tx1 = transport::transmission_time(1500, 1920);
        let tx2 = transport::transmission_time(580, 1920);
        assert_eq!(at, tx1 + tx2 + SimTime::from_secs_f64(0.05));
    }

    #[test]
    fn failure_loses_messages_on_lte() {
        let cfg = ScenarioConfig { lte_fail_at_s: Some(0.05), ..small_cfg() };
        let topo = Topology::generate(&cfg);
        let mut net = NetFederate::new(&cfg, &topo).unwrap();
        let hva = node_of(&topo, NodeKind::HvaLv);
        let grant = Grant { slot: crate::time::TimeslotIndex(0), start: SimTime::ZERO, end: cfg.horizon() };
        let out = net.step(&grant, vec![request(1, MessageClass::Monitoring, hva, topo.dms(), 5000)]).unwrap();
        assert!(out.outbox.is_empty());
        assert_eq!(net.stats().lost_on_failure, [1, 0]);
        assert_eq!(net.in_flight(MessageClass::Monitoring), 0);
        assert!(net.links().iter().filter(|l| l.technology == Technology::Lte).all(|l| !l.is_up()));
    }

    #[test]
    fn rate_update_on_failover() {
        let cfg = ScenarioConfig { lte_fail_at_s: Some(10.0), qos: QosMode::WfqRa, ..small_cfg() };
        let topo = Topology::generate(&cfg);
        let mut net = NetFederate::new(&cfg, &topo).unwrap();
        let grant = Grant { slot: crate::time::TimeslotIndex(0), start: SimTime::ZERO, end: cfg.horizon() };
        let out = net.step(&grant, Vec::new()).unwrap();
        assert_eq!(out.outbox.len(), 1);
        assert_eq!(out.outbox[0].at, SimTime::from_secs_f64(10.0));
        assert!(
            matches!(out.outbox[0].msg.kind, MessageKind::RateUpdate { poll_period_ticks } if poll_period_ticks > 0)
        );
        assert!(out.outbox[0].msg.id >= NET_MSG_ID_BASE);
    }

    #[test]
    fn samples_every_interval() {
        let cfg = small_cfg();
        let topo = Topology::generate(&cfg);
        let mut net = NetFederate::new(&cfg, &topo).unwrap();
        let tau = cfg.tau();
        let mut slot = 0;
        loop {
            let grant = Grant {
                slot: crate::time::TimeslotIndex(slot),
                start: SimTime(slot * tau.ticks()),
                end: SimTime((slot + 1) * tau.ticks()),
            };
            if net.step(&grant, Vec::new()).unwrap().done {
                break;
            }
            slot += 1;
        }
        // 100 s horizon, 25 s interval, 3 links
        assert_eq!(net.samples().len(), 4 * 3);
        assert_eq!(net.samples().last().unwrap().t, SimTime::from_secs_f64(100.0));
    }
}
