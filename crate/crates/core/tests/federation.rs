//! End-to-end federation behaviour on small scenarios.

use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use multisim_core::config::{QosMode, ScenarioConfig, TopologyCounts};
use multisim_core::it::ItFederate;
use multisim_core::message::{MessageClass, MessageKind, NodeId, SimMessage};
use multisim_core::net::NetFederate;
use multisim_core::proto::socket::{accept_federates, connect, serve_federate};
use multisim_core::proto::{Federate, FederateError, FederateLink, Grant, InProcLink, Published, StepOutput};
use multisim_core::rti::{run_federation, FederationResult};
use multisim_core::time::SimTime;
use multisim_core::topology::Topology;
use proptest::prelude::*;

const NAMES: [&str; 2] = ["it", "net"];

fn small(qos: QosMode, seed: u64, fail_at: Option<f64>) -> ScenarioConfig {
    ScenarioConfig {
        qos,
        seed,
        tau_s: 0.05,
        duration_s: 300.0,
        lte_fail_at_s: fail_at,
        topology: TopologyCounts { hva_lv: 30, switch: 6, substation: 1, pv_plant: 1, wind_farm: 1 },
        ..ScenarioConfig::default()
    }
}

fn run_inproc(cfg: &ScenarioConfig, trace: bool) -> (FederationResult, ItFederate, NetFederate) {
    let topo = Topology::generate(cfg);
    let mut it = ItFederate::new(cfg, &topo);
    let mut net = NetFederate::new(cfg, &topo).unwrap();
    let links: Vec<(&str, Box<dyn FederateLink + '_>)> =
        vec![(NAMES[0], Box::new(InProcLink::new(&mut it))), (NAMES[1], Box::new(InProcLink::new(&mut net)))];
    let result = run_federation(cfg, links, trace).unwrap();
    (result, it, net)
}

/// Runs `federates` as socket peers of an RTI on an ephemeral port.
fn run_socket<F: Federate + Send>(cfg: &ScenarioConfig, federates: [&mut F; 2]) -> FederationResult {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::scope(|s| {
        let handles: Vec<_> = federates
            .into_iter()
            .zip(NAMES)
            .map(|(f, name)| s.spawn(move || serve_federate(connect(addr, Duration::from_secs(10))?, name, f)))
            .collect();
        let links = accept_federates(&listener, &NAMES, cfg.tau(), Some(Duration::from_secs(30))).unwrap();
        let boxed: Vec<(&str, Box<dyn FederateLink>)> =
            NAMES.iter().copied().zip(links).map(|(n, l)| (n, Box::new(l) as Box<dyn FederateLink>)).collect();
        let result = run_federation(cfg, boxed, true).unwrap();
        for h in handles {
            h.join().unwrap().unwrap();
        }
        result
    })
}

#[test]
fn socket_and_inproc_traces_match() {
    let cfg = small(QosMode::WfqRa, 7, Some(100.0));
    let (inproc, it_a, _) = run_inproc(&cfg, true);

    let topo = Topology::generate(&cfg);
    let mut it = ItFederate::new(&cfg, &topo);
    let mut net = NetFederate::new(&cfg, &topo).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let socket = std::thread::scope(|s| {
        let a = s.spawn(|| serve_federate(connect(addr, Duration::from_secs(10))?, "it", &mut it));
        let b = s.spawn(|| serve_federate(connect(addr, Duration::from_secs(10))?, "net", &mut net));
        let links = accept_federates(&listener, &NAMES, cfg.tau(), Some(Duration::from_secs(30))).unwrap();
        let boxed: Vec<(&str, Box<dyn FederateLink>)> =
            NAMES.iter().copied().zip(links).map(|(n, l)| (n, Box::new(l) as Box<dyn FederateLink>)).collect();
        let r = run_federation(&cfg, boxed, true).unwrap();
        assert_eq!(a.join().unwrap().unwrap(), 0);
        assert_eq!(b.join().unwrap().unwrap(), 1);
        r
    });

    assert!(inproc.messages_delivered > 0);
    assert_eq!(inproc.trace, socket.trace);
    assert_eq!(inproc.trace_sha256, socket.trace_sha256);
    assert_eq!(inproc.slots, socket.slots);
    assert_eq!(it_a.records(), it.records());
}

/// Publishes one message per slot at 0.8τ and logs every event it sees.
struct Probe {
    name: &'static str,
    next_id: u64,
    log: Arc<Mutex<Vec<Event>>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Event {
    Step { who: &'static str, slot: u64, inbox: Vec<(u64, SimTime)> },
}

impl Federate for Probe {
    fn step(&mut self, grant: &Grant, inbox: Vec<SimMessage>) -> Result<StepOutput, FederateError> {
        let seen = inbox.iter().map(|m| (m.id, m.created_at_it)).collect();
        self.log.lock().unwrap().push(Event::Step { who: self.name, slot: grant.slot.0, inbox: seen });
        let at = grant.start + SimTime((grant.end - grant.start).ticks() * 4 / 5);
        self.next_id += 1;
        let msg =
            SimMessage::new(self.next_id, MessageClass::Monitoring, MessageKind::Request, NodeId(0), NodeId(1), 10, at);
        Ok(StepOutput { outbox: vec![Published { at, msg }], done: false })
    }

    fn absorb(&mut self, _at: SimTime, _msgs: Vec<SimMessage>) -> Result<(), FederateError> {
        Ok(())
    }
}

#[test]
fn lock_step_over_sockets() {
    let cfg = ScenarioConfig { tau_s: 1.0, duration_s: 6.0, ..ScenarioConfig::default() };
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut a = Probe { name: "it", next_id: 0, log: log.clone() };
    let mut b = Probe { name: "net", next_id: 1000, log: log.clone() };
    let result = run_socket(&cfg, [&mut a, &mut b]);
    assert_eq!(result.slots, 6);

    let log = log.lock().unwrap();
    let slots: Vec<u64> = log.iter().map(|Event::Step { slot, .. }| *slot).collect();
    // no federate starts slot k+1 before both finished slot k
    assert!(slots.windows(2).all(|w| w[1] >= w[0]), "{slots:?}");
    assert_eq!(slots.len(), 12);

    let tau = cfg.tau();
    for Event::Step { who, slot, inbox } in log.iter() {
        if *slot == 0 {
            assert!(inbox.is_empty());
            continue;
        }
        // the peer's message from the previous slot, stamped 0.8τ into it
        assert_eq!(inbox.len(), 1, "{who} slot {slot}");
        let (id, created) = inbox[0];
        let expected_id = if *who == "it" { 1000 + slot } else { *slot };
        assert_eq!(id, expected_id);
        assert_eq!(created, SimTime(tau.ticks() * (slot - 1)) + SimTime(tau.ticks() * 4 / 5));
    }
    let trace = result.trace.as_ref().unwrap();
    assert!(trace.iter().all(|e| e.at == SimTime((e.slot.0 + 1) * tau.ticks())));
}

fn check_accounting(it: &ItFederate, net: &NetFederate) -> Result<(), TestCaseError> {
    let it_stats = it.stats();
    let n = net.stats();
    for class in MessageClass::ALL {
        let c = class.index();
        let lost = n.lost_on_failure[c] + n.dropped_no_route[c] + n.dropped_overflow[c];
        prop_assert_eq!(it_stats.published[c], it_stats.received[c] + lost + net.in_flight(class), "{:?}", class);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_sync_bound(
        seed in any::<u64>(),
        qos in prop_oneof![Just(QosMode::Fifo), Just(QosMode::Wfq), Just(QosMode::WfqRa)],
        fail in proptest::option::of(20.0f64..280.0),
    ) {
        let cfg = small(qos, seed, fail.map(|f| f.round()));
        let (_, it, net) = run_inproc(&cfg, false);
        check_accounting(&it, &net)?;
        let bound = SimTime(4 * cfg.tau().ticks());
        for r in it.records() {
            if let (Some(d_it), Some(d_comm)) = (r.it_delay(), r.comm_delay()) {
                prop_assert!(d_it >= d_comm && d_it - d_comm <= bound, "{:?} {:?}", d_it, d_comm);
            }
        }
        for leg in it.legs() {
            prop_assert!(leg.comm_delay > SimTime::ZERO);
        }
    }

    #[test]
    fn reruns_are_identical(seed in any::<u64>()) {
        let cfg = small(QosMode::WfqRa, seed, Some(60.0));
        let (a, _, _) = run_inproc(&cfg, false);
        let (b, _, _) = run_inproc(&cfg, false);
        prop_assert_eq!(a.trace_sha256, b.trace_sha256);
        prop_assert_eq!(a.messages_delivered, b.messages_delivered);
    }
}
