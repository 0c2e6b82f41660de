//! Builds a federation from a scenario, runs it, and collects the results.

use std::net::TcpListener;
use std::time::Duration;

use multisim_core::config::ScenarioConfig;
use multisim_core::it::{DeliveredLeg, ExchangeRecord, ItFederate, ItStats};
use multisim_core::message::MessageClass;
use multisim_core::metrics::{ddf, DdfReport, IntervalMetrics};
use multisim_core::net::link::LinkSample;
use multisim_core::net::rate::RateError;
use multisim_core::net::{NetFederate, NetStats};
use multisim_core::proto::socket::{accept_federates, connect, serve_federate};
use multisim_core::proto::{FederateLink, InProcLink, TransportError};
use multisim_core::rti::{run_federation, FederationFailure, FederationResult};
use multisim_core::time::SimTime;
use multisim_core::topology::Topology;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TransportKind {
    Inproc,
    Socket,
}

impl TransportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransportKind::Inproc => "inproc",
            TransportKind::Socket => "socket",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub transport: TransportKind,
    /// Address the RTI listens on for the socket transport.
    pub rti_listen: String,
    /// Longest the RTI waits for a federate's reply.
    pub timeout: Duration,
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            transport: TransportKind::Inproc,
            rti_listen: "127.0.0.1:0".into(),
            timeout: Duration::from_secs(60),
            record_trace: false,
        }
    }
}

/// Federate names, in registration order.
pub const FEDERATES: [&str; 2] = ["it", "net"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("federation failed: {0}")]
    Federation(Box<FederationFailure>),
    #[error("federate `{name}`: {source}")]
    Federate {
        name: &'static str,
        #[source]
        source: TransportError,
    },
    #[error("rti: {0}")]
    Rti(#[source] TransportError),
    #[error("cannot listen on {addr}: {source}")]
    Listen {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Partial federation figures, when the run got that far.
    pub fn partial(&self) -> Option<&FederationResult> {
        match self {
            RunError::Federation(f) => Some(&f.partial),
            _ => None,
        }
    }
}

/// Messages per class that entered the network, and where they ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Conservation {
    pub class: MessageClass,
    pub published: u64,
    pub received: u64,
    pub lost: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.published == self.received + self.lost + self.in_flight
    }
}

/// Everything a finished run produced.
pub struct RunOutcome {
    pub cfg: ScenarioConfig,
    pub topology: Topology,
    pub federation: FederationResult,
    pub intervals: Vec<IntervalMetrics>,
    pub ddf: Option<DdfReport>,
    pub records: Vec<ExchangeRecord>,
    pub legs: Vec<DeliveredLeg>,
    pub it_stats: ItStats,
    pub net_stats: NetStats,
    pub in_flight: [u64; 2],
    pub link_samples: Vec<LinkSample>,
    pub final_poll_period: SimTime,
}

impl RunOutcome {
    pub fn conservation(&self) -> [Conservation; 2] {
        MessageClass::ALL.map(|class| {
            let c = class.index();
            let n = &self.net_stats;
            Conservation {
                class,
                published: self.it_stats.published[c],
                received: self.it_stats.received[c],
                lost: n.lost_on_failure[c] + n.dropped_no_route[c] + n.dropped_overflow[c],
                in_flight: self.in_flight[c],
            }
        })
    }

    /// Completed exchanges whose application delay is not within
    /// `[d_comm, d_comm + 4τ]`; four slot crossings bound the gap.
    pub fn sync_violations(&self) -> Vec<&ExchangeRecord> {
        let bound = SimTime(4 * self.cfg.tau().ticks());
        self.records
            .iter()
            .filter(|r| match (r.it_delay(), r.comm_delay()) {
                (Some(d_it), Some(d_comm)) => d_it < d_comm || d_it - d_comm > bound,
                _ => false,
            })
            .collect()
    }

    /// Bits offered to `link` per second over samples in `(from, to]`.
    pub fn offered_bps(&self, link: &str, from: SimTime, to: SimTime) -> Option<f64> {
        let span = to.saturating_sub(from);
        if span == SimTime::ZERO {
            return None;
        }
        let bits: u64 = self
            .link_samples
            .iter()
            .filter(|s| s.link == link && s.t > from && s.t <= to)
            .map(|s| s.bits_offered)
            .sum();
        Some(bits as f64 / span.as_secs_f64())
    }
}

/// Runs one scenario end to end.
pub fn simulate(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let topology = Topology::generate(cfg);
    let mut it = ItFederate::new(cfg, &topology);
    let mut net = NetFederate::new(cfg, &topology)?;

    let federation = match opts.transport {
        TransportKind::Inproc => {
            let links: Vec<(&str, Box<dyn FederateLink + '_>)> = vec![
                (FEDERATES[0], Box::new(InProcLink::new(&mut it))),
                (FEDERATES[1], Box::new(InProcLink::new(&mut net))),
            ];
            run_federation(cfg, links, opts.record_trace).map_err(|f| RunError::Federation(Box::new(f)))?
        }
        TransportKind::Socket => run_over_sockets(cfg, opts, &mut it, &mut net)?,
    };

    let now = cfg.horizon().max(SimTime(federation.slots * cfg.tau().ticks()));
    let intervals = it.interval_metrics(now);
    let pairs = it.delay_pairs();
    let ddf = ddf(&pairs, cfg.tau()).ok();
    Ok(RunOutcome {
        cfg: cfg.clone(),
        federation,
        intervals,
        ddf,
        records: it.records().to_vec(),
        legs: it.legs().to_vec(),
        it_stats: it.stats(),
        net_stats: net.stats(),
        in_flight: MessageClass::ALL.map(|c| net.in_flight(c)),
        link_samples: net.samples().to_vec(),
        final_poll_period: it.poll_period(),
        topology,
    })
}

fn run_over_sockets(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    it: &mut ItFederate,
    net: &mut NetFederate,
) -> Result<FederationResult, RunError> {
    let listener = TcpListener::bind(&opts.rti_listen)
        .map_err(|source| RunError::Listen { addr: opts.rti_listen.clone(), source })?;
    let addr = listener.local_addr().map_err(|e| RunError::Rti(e.into()))?;
    log::info!("rti listening on {addr}");
    std::thread::scope(|s| {
        let patience = opts.timeout;
        let it_thread = s.spawn(move || serve_federate(connect(addr, patience)?, FEDERATES[0], it));
        let net_thread = s.spawn(move || serve_federate(connect(addr, patience)?, FEDERATES[1], net));
        let outcome = match accept_federates(&listener, &FEDERATES, cfg.tau(), Some(opts.timeout)) {
            Ok(links) => {
                let boxed: Vec<(&str, Box<dyn FederateLink>)> = FEDERATES
                    .iter()
                    .copied()
                    .zip(links)
                    .map(|(name, link)| (name, Box::new(link) as Box<dyn FederateLink>))
                    .collect();
                run_federation(cfg, boxed, opts.record_trace).map_err(|f| RunError::Federation(Box::new(f)))
            }
            Err(e) => Err(RunError::Rti(e)),
        };
        drop(listener);
        let joined = [it_thread.join(), net_thread.join()];
        let result = outcome?;
        for (name, j) in FEDERATES.iter().zip(joined) {
            match j {
                Ok(Ok(_)) => {}
                Ok(Err(source)) => return Err(RunError::Federate { name, source }),
                Err(panic) => std::panic::resume_unwind(panic),
            }
        }
        Ok(result)
    })
}

/// One row of a slot-width sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub tau_s: f64,
    pub ddf_percent: Option<f64>,
    pub wallclock_s: f64,
}

/// Runs the scenario once per slot width with everything else fixed.
///
/// With `repeat > 1` the widths are run round-robin `repeat` times and the
/// smallest wallclock per width is kept. Interleaving spreads slow drifts in
/// machine state (frequency scaling, other load) over all widths instead of
/// whichever happens to run first.
pub fn run_tau_sweep(
    cfg: &ScenarioConfig,
    taus: &[f64],
    opts: &RunOptions,
    repeat: usize,
) -> Result<Vec<SweepRow>, RunError> {
    let mut best: Vec<Option<SweepRow>> = vec![None; taus.len()];
    for _ in 0..repeat.max(1) {
        for (slot, &tau) in best.iter_mut().zip(taus) {
            let run_cfg = ScenarioConfig { tau_s: tau, ..cfg.clone() };
            let outcome = simulate(&run_cfg, opts)?;
            let row = SweepRow {
                tau_s: tau,
                ddf_percent: outcome.ddf.as_ref().map(|d| d.ddf_percent),
                wallclock_s: outcome.federation.wallclock_s,
            };
            if slot.as_ref().is_none_or(|b| row.wallclock_s < b.wallclock_s) {
                *slot = Some(row);
            }
        }
    }
    let rows: Vec<SweepRow> = best.into_iter().map(|r| r.expect("at least one repetition")).collect();
    for row in &rows {
        log::info!("tau {} s: ddf {:?} %, wallclock {:.3} s", row.tau_s, row.ddf_percent, row.wallclock_s);
    }
    Ok(rows)
}
