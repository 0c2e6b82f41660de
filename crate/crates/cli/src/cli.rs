//! Command-line front end.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use multisim_core::config::{ConfigError, QosMode, ScenarioConfig};
use multisim_core::it::ItFederate;
use multisim_core::metrics::ddf;
use multisim_core::net::NetFederate;
use multisim_core::proto::socket::{accept_federates, connect, serve_federate};
use multisim_core::proto::FederateLink;
use multisim_core::rti::run_federation;
use multisim_core::time::{SimTime, SlotClock};
use multisim_core::topology::Topology;
use thiserror::Error;

use crate::output::{self, ExperimentStatus, RunManifest};
use crate::run::{run_tau_sweep, simulate, RunOptions, SweepRow, TransportKind, FEDERATES};

#[derive(Debug, Parser)]
#[command(name = "multisim", version, about = "Smart-grid IT/communication co-simulation")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its metrics.
    Run(RunArgs),
    /// Run the scenario for several slot widths and tabulate DDF against wallclock.
    Sweep(SweepArgs),
    /// Host the RTI for federates running as separate processes.
    Rti(RtiArgs),
    /// Run one federate against a separately started RTI.
    Federate(FederateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file (`key = value` lines); defaults apply without it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Slot width in seconds.
    #[arg(long, value_name = "S")]
    pub tau: Option<f64>,
    #[arg(long, value_name = "MODE", value_parser = parse_qos)]
    pub qos: Option<QosMode>,
    /// Take the LTE cells down at this simulated second.
    #[arg(long, value_name = "S")]
    pub fail_at: Option<f64>,
    /// Bring the LTE cells back at this simulated second.
    #[arg(long, value_name = "S")]
    pub restore_at: Option<f64>,
    /// Simulated duration in seconds.
    #[arg(long, value_name = "S")]
    pub duration: Option<f64>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Use the unmodified adaptation formula instead of the capacity budget.
    #[arg(long)]
    pub eq5_literal: bool,
    /// Override any scenario key, e.g. `--set alpha_e=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn parse_qos(s: &str) -> Result<QosMode, String> {
    s.parse()
}

#[derive(Debug, Error)]
pub enum UsageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<ScenarioConfig, UsageError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        let mut set = |key: &str, value: String| -> Result<(), UsageError> {
            let Some(&canonical) = ScenarioConfig::keys().iter().find(|k| **k == key) else {
                return Err(UsageError::Usage(format!("unknown scenario key `{key}`")));
            };
            cfg.set(canonical, &value).map_err(|detail| ConfigError::Validation { key: canonical, detail }.into())
        };
        for item in &self.overrides {
            let Some((k, v)) = item.split_once('=') else {
                return Err(UsageError::Usage(format!("--set expects KEY=VALUE, got `{item}`")));
            };
            set(k.trim(), v.trim().to_string())?;
        }
        if let Some(v) = self.tau {
            set("tau_s", v.to_string())?;
        }
        if let Some(v) = self.qos {
            set("qos", v.as_str().to_string())?;
        }
        if let Some(v) = self.fail_at {
            set("lte_fail_at_s", v.to_string())?;
        }
        if let Some(v) = self.restore_at {
            set("lte_restore_at_s", v.to_string())?;
        }
        if let Some(v) = self.duration {
            set("duration_s", v.to_string())?;
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if self.eq5_literal {
            set("eq5_literal", "true".into())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TransportArgs {
    #[arg(long, value_enum, default_value_t = TransportKind::Inproc)]
    pub transport: TransportKind,
    /// RTI listen address for the socket transport.
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:0")]
    pub rti_listen: String,
    /// Seconds the RTI waits for a federate before giving up.
    #[arg(long, value_name = "S", default_value_t = 60.0)]
    pub timeout: f64,
}

impl TransportArgs {
    fn options(&self, record_trace: bool) -> RunOptions {
        RunOptions {
            transport: self.transport,
            rti_listen: self.rti_listen.clone(),
            timeout: Duration::from_secs_f64(self.timeout),
            record_trace,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub transport: TransportArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Also write the generated node layout.
    #[arg(long)]
    pub dump_topology: bool,
    /// Also write one row per exchange.
    #[arg(long)]
    pub exchange_log: bool,
    /// Also write per-link queue and throughput samples.
    #[arg(long)]
    pub link_log: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub transport: TransportArgs,
    /// Slot widths in seconds, comma separated (at least two).
    #[arg(long, value_name = "S,S,...", value_delimiter = ',', required = true)]
    pub taus: Vec<f64>,
    /// Runs per width; the fastest wallclock is kept.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RtiArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:7300")]
    pub rti_listen: String,
    #[arg(long, value_name = "S", default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FederateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Which federate to run: `it` or `net`.
    #[arg(long, value_parser = ["it", "net"])]
    pub name: String,
    /// RTI address.
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:7300")]
    pub rti: String,
    /// Seconds to keep retrying the connection.
    #[arg(long, value_name = "S", default_value_t = 30.0)]
    pub connect_timeout: f64,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Rti(args) => cmd_rti(args),
        Command::Federate(args) => cmd_federate(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.resolve()?;
    prepare_out(&args.out)?;
    let started = Instant::now();
    let mut manifest = RunManifest::new("run", &cfg, args.transport.transport.as_str());
    let outcome = simulate(&cfg, &args.transport.options(false));
    manifest.wallclock_s = started.elapsed().as_secs_f64();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            manifest.experiments.push(ExperimentStatus {
                tau_s: cfg.tau_s,
                status: "failed".into(),
                wallclock_s: e.partial().map(|p| p.wallclock_s),
                slots: e.partial().map(|p| p.slots),
                trace_sha256: e.partial().map(|p| p.trace_sha256.clone()),
                error: Some(e.to_string()),
            });
            manifest.write(&args.out)?;
            return Err(e.into());
        }
    };

    let out = &args.out;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> std::io::Result<()>| -> anyhow::Result<()> {
        let path = out.join(name);
        f(&path).with_context(|| format!("writing {}", path.display()))?;
        written.push(file_name(&path));
        Ok(())
    };
    emit(output::RELIABILITY_CSV, &|p| output::write_reliability(p, &cfg, &outcome.intervals))?;
    emit(output::DELAY_CSV, &|p| output::write_delay(p, &cfg, &outcome.intervals))?;
    let rows: Vec<SweepRow> = outcome
        .ddf
        .iter()
        .map(|d| SweepRow {
            tau_s: cfg.tau_s,
            ddf_percent: Some(d.ddf_percent),
            wallclock_s: outcome.federation.wallclock_s,
        })
        .collect();
    emit(output::DDF_CSV, &|p| output::write_ddf(p, &rows))?;
    if args.dump_topology {
        emit(output::TOPOLOGY_CSV, &|p| output::write_topology(p, &outcome))?;
    }
    if args.exchange_log {
        emit(output::EXCHANGE_LOG_CSV, &|p| output::write_exchange_log(p, &outcome))?;
    }
    if args.link_log {
        emit(output::LINK_LOG_CSV, &|p| output::write_link_log(p, &outcome))?;
    }

    for c in outcome.conservation() {
        if !c.holds() {
            log::error!("message accounting mismatch: {c:?}");
        }
    }
    let violations = outcome.sync_violations().len();
    if violations > 0 {
        log::error!("{violations} exchanges exceed the synchronization bound");
    }

    manifest.status = "ok".into();
    manifest.outputs = written;
    manifest.outputs.push(output::MANIFEST_JSON.into());
    manifest.experiments.push(ExperimentStatus {
        tau_s: cfg.tau_s,
        status: "ok".into(),
        wallclock_s: Some(outcome.federation.wallclock_s),
        slots: Some(outcome.federation.slots),
        trace_sha256: Some(outcome.federation.trace_sha256.clone()),
        error: None,
    });
    manifest.write(out)?;
    log::info!(
        "{} slots, {} messages delivered, {:.2} s wallclock",
        outcome.federation.slots,
        outcome.federation.messages_delivered,
        outcome.federation.wallclock_s
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    if args.taus.len() < 2 {
        return Err(UsageError::Usage("a sweep needs at least two --taus values".into()).into());
    }
    let cfg = args.scenario.resolve()?;
    for &tau in &args.taus {
        ScenarioConfig { tau_s: tau, ..cfg.clone() }.validate()?;
    }
    prepare_out(&args.out)?;
    let started = Instant::now();
    let mut manifest = RunManifest::new("sweep", &cfg, args.transport.transport.as_str());
    let result = run_tau_sweep(&cfg, &args.taus, &args.transport.options(false), args.repeat);
    manifest.wallclock_s = started.elapsed().as_secs_f64();
    match result {
        Ok(rows) => {
            output::write_ddf(&args.out.join(output::DDF_CSV), &rows)?;
            manifest.status = "ok".into();
            manifest.outputs = vec![output::DDF_CSV.into(), output::MANIFEST_JSON.into()];
            manifest.experiments = rows
                .iter()
                .map(|r| ExperimentStatus {
                    tau_s: r.tau_s,
                    status: "ok".into(),
                    wallclock_s: Some(r.wallclock_s),
                    slots: None,
                    trace_sha256: None,
                    error: None,
                })
                .collect();
            manifest.write(&args.out)?;
            Ok(())
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            manifest.write(&args.out)?;
            Err(e.into())
        }
    }
}

fn cmd_rti(args: RtiArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.resolve()?;
    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new("rti", &cfg, TransportKind::Socket.as_str());
    let started = Instant::now();
    let listener =
        TcpListener::bind(&args.rti_listen).with_context(|| format!("cannot listen on {}", args.rti_listen))?;
    eprintln!("rti listening on {}", listener.local_addr()?);
    let timeout = Duration::from_secs_f64(args.timeout);
    let links = accept_federates(&listener, &FEDERATES, cfg.tau(), Some(timeout))?;
    let boxed: Vec<(&str, Box<dyn FederateLink>)> =
        FEDERATES.iter().copied().zip(links).map(|(n, l)| (n, Box::new(l) as Box<dyn FederateLink>)).collect();
    let result = run_federation(&cfg, boxed, false);
    manifest.wallclock_s = started.elapsed().as_secs_f64();
    manifest.outputs = vec![output::MANIFEST_JSON.into()];
    let (partial, error) = match &result {
        Ok(r) => (r, None),
        Err(f) => (&f.partial, Some(f.to_string())),
    };
    manifest.status = if error.is_some() { "failed" } else { "ok" }.into();
    manifest.error = error.clone();
    manifest.experiments.push(ExperimentStatus {
        tau_s: cfg.tau_s,
        status: manifest.status.clone(),
        wallclock_s: Some(partial.wallclock_s),
        slots: Some(partial.slots),
        trace_sha256: Some(partial.trace_sha256.clone()),
        error,
    });
    manifest.write(&args.out)?;
    result?;
    Ok(())
}

fn cmd_federate(args: FederateArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.resolve()?;
    prepare_out(&args.out)?;
    let topo = Topology::generate(&cfg);
    let stream = connect(args.rti.as_str(), Duration::from_secs_f64(args.connect_timeout))
        .with_context(|| format!("connecting to the rti at {}", args.rti))?;
    let started = Instant::now();
    match args.name.as_str() {
        "it" => {
            let mut it = ItFederate::new(&cfg, &topo);
            serve_federate(stream, "it", &mut it)?;
            let wallclock = started.elapsed().as_secs_f64();
            let slots = SlotClock::new(cfg.tau()).slots_to_cover(cfg.horizon());
            let now = cfg.horizon().max(SimTime(slots * cfg.tau().ticks()));
            let intervals = it.interval_metrics(now);
            output::write_reliability(&args.out.join(output::RELIABILITY_CSV), &cfg, &intervals)?;
            output::write_delay(&args.out.join(output::DELAY_CSV), &cfg, &intervals)?;
            let rows: Vec<SweepRow> = ddf(&it.delay_pairs(), cfg.tau())
                .ok()
                .map(|d| SweepRow { tau_s: cfg.tau_s, ddf_percent: Some(d.ddf_percent), wallclock_s: wallclock })
                .into_iter()
                .collect();
            output::write_ddf(&args.out.join(output::DDF_CSV), &rows)?;
        }
        "net" => {
            let mut net = NetFederate::new(&cfg, &topo)?;
            serve_federate(stream, "net", &mut net)?;
        }
        other => bail!("unknown federate `{other}`"),
    }
    Ok(())
}
