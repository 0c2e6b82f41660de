//! CSV and JSON artifacts of a run.
//!
//! Floats are printed with fixed precision so that identical runs produce
//! byte-identical files. Absent values are empty fields.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use multisim_core::config::ScenarioConfig;
use multisim_core::metrics::IntervalMetrics;
use multisim_core::time::SimTime;
use serde::Serialize;

use crate::run::{RunOutcome, SweepRow};

pub const RELIABILITY_CSV: &str = "reliability.csv";
pub const DELAY_CSV: &str = "delay.csv";
pub const DDF_CSV: &str = "ddf.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const TOPOLOGY_CSV: &str = "topology.csv";
pub const EXCHANGE_LOG_CSV: &str = "exchange_log.csv";
pub const LINK_LOG_CSV: &str = "link_log.csv";

fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    // avoid "-0.000000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|v| fixed(v, digits)).unwrap_or_default()
}

fn secs(t: SimTime) -> String {
    fixed(t.as_secs_f64(), 5)
}

fn interval_end(cfg: &ScenarioConfig, m: &IntervalMetrics) -> SimTime {
    SimTime((m.interval_index.0 + 1) * cfg.metrics_interval().ticks())
}

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn finish(mut w: csv::Writer<fs::File>) -> io::Result<()> {
    w.flush()
}

pub fn write_reliability(path: &Path, cfg: &ScenarioConfig, intervals: &[IntervalMetrics]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t_s", "class", "mean", "ci_low", "ci_high", "low_clamped", "high_clamped"])?;
    for m in intervals {
        let flag = |raw: Option<f64>, clamped: Option<f64>| match (raw, clamped) {
            (Some(r), Some(c)) => (r != c).to_string(),
            _ => String::new(),
        };
        w.write_record([
            secs(interval_end(cfg, m)),
            m.class.as_str().to_string(),
            opt(m.mean, 6),
            opt(m.ci_low_clamped(), 6),
            opt(m.ci_high_clamped(), 6),
            flag(m.ci_low(), m.ci_low_clamped()),
            flag(m.ci_high(), m.ci_high_clamped()),
        ])?;
    }
    finish(w)
}

pub fn write_delay(path: &Path, cfg: &ScenarioConfig, intervals: &[IntervalMetrics]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t_s", "class", "mean_s", "p95_s"])?;
    for m in intervals {
        w.write_record([
            secs(interval_end(cfg, m)),
            m.class.as_str().to_string(),
            opt(m.delay_mean_s, 5),
            opt(m.delay_p95_s, 5),
        ])?;
    }
    finish(w)
}

pub fn write_ddf(path: &Path, rows: &[SweepRow]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["tau_s", "ddf_percent", "wallclock_s"])?;
    for r in rows {
        w.write_record([fixed(r.tau_s, 5), opt(r.ddf_percent, 6), fixed(r.wallclock_s, 6)])?;
    }
    finish(w)
}

pub fn write_topology(path: &Path, outcome: &RunOutcome) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "kind", "x_km", "y_km"])?;
    for n in outcome.topology.nodes() {
        w.write_record([n.id.0.to_string(), n.kind.as_str().to_string(), fixed(n.x_km, 6), fixed(n.y_km, 6)])?;
    }
    finish(w)
}

pub fn write_exchange_log(path: &Path, outcome: &RunOutcome) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "class", "node", "created_s", "delivered_s", "d_it_s", "d_comm_s", "within_limit"])?;
    for r in &outcome.records {
        let delivered = r.response.as_ref().and_then(|m| m.delivered_at_it);
        let within = r.it_delay().is_some_and(|d| d <= outcome.cfg.delay_limit(r.class));
        w.write_record([
            r.request.id.to_string(),
            r.class.as_str().to_string(),
            r.node.0.to_string(),
            secs(r.request.created_at_it),
            delivered.map(secs).unwrap_or_default(),
            r.it_delay().map(secs).unwrap_or_default(),
            r.comm_delay().map(secs).unwrap_or_default(),
            within.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_link_log(path: &Path, outcome: &RunOutcome) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "t_s",
        "link",
        "up",
        "queue_bytes_monitoring",
        "queue_bytes_control",
        "bits_served",
        "bits_offered",
    ])?;
    for s in &outcome.link_samples {
        w.write_record([
            secs(s.t),
            s.link.clone(),
            s.up.to_string(),
            s.queue_bytes[0].to_string(),
            s.queue_bytes[1].to_string(),
            s.bits_served.to_string(),
            s.bits_offered.to_string(),
        ])?;
    }
    finish(w)
}

/// Status of one federation run inside a manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentStatus {
    pub tau_s: f64,
    pub status: String,
    pub wallclock_s: Option<f64>,
    pub slots: Option<u64>,
    pub trace_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub transport: String,
    pub config: ScenarioConfig,
    pub wallclock_s: f64,
    pub outputs: Vec<String>,
    pub experiments: Vec<ExperimentStatus>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ScenarioConfig, transport: &str) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            status: "running".into(),
            error: None,
            seed: cfg.seed,
            transport: transport.to_string(),
            config: cfg.clone(),
            wallclock_s: 0.0,
            outputs: Vec::new(),
            experiments: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(MANIFEST_JSON);
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
