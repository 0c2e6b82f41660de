//! Scenario configuration and its flat `key = value` file format.
//!
//! Every key is optional; a missing key keeps the case-study default from
//! [`ScenarioConfig::default`]. Map-valued settings use dotted keys, e.g.
//! `payload.hva_lv = 500` or `delay_limits_s.control = 10`. Optional times
//! accept `none`.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::MessageClass;
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ParseError at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("ValidationError({key}): {detail}")]
    Validation { key: &'static str, detail: String },
}

impl ConfigError {
    /// Key named by a validation error.
    pub fn key(&self) -> Option<&'static str> {
        match self {
            ConfigError::Validation { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Queueing discipline selector applied on every link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QosMode {
    Fifo,
    Wfq,
    WfqRa,
}

impl QosMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QosMode::Fifo => "fifo",
            QosMode::Wfq => "wfq",
            QosMode::WfqRa => "wfq-ra",
        }
    }
}

impl FromStr for QosMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fifo" => Ok(QosMode::Fifo),
            "wfq" => Ok(QosMode::Wfq),
            "wfq-ra" | "wfq_ra" => Ok(QosMode::WfqRa),
            other => Err(format!("unknown qos `{other}` (fifo, wfq, wfq-ra)")),
        }
    }
}

/// Resolved QoS parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qos {
    Fifo,
    Wfq { w_monitoring: f64, w_control: f64 },
    WfqRa { w_monitoring: f64, w_control: f64, alpha_e: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrivals {
    Periodic,
    Poisson,
}

impl FromStr for Arrivals {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "periodic" => Ok(Arrivals::Periodic),
            "poisson" => Ok(Arrivals::Poisson),
            other => Err(format!("unknown arrivals `{other}` (periodic, poisson)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technology {
    Lte,
    Dmr,
}

impl Technology {
    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Lte => "lte",
            Technology::Dmr => "dmr",
        }
    }
}

impl FromStr for Technology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lte" => Ok(Technology::Lte),
            "dmr" => Ok(Technology::Dmr),
            other => Err(format!("unknown technology `{other}` (lte, dmr)")),
        }
    }
}

/// Average payload lengths in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadTable {
    pub dms_request: u32,
    pub dms_command: u32,
    pub hva_lv: u32,
    pub substation: u32,
    pub der: u32,
    pub switch: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayLimits {
    pub monitoring: f64,
    pub control: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyCounts {
    pub hva_lv: u32,
    pub switch: u32,
    pub substation: u32,
    pub pv_plant: u32,
    pub wind_farm: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportParams {
    pub header_bytes: u32,
    pub mss_bytes: u32,
    pub ack_bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessLatency {
    pub lte: f64,
    pub dmr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub tau_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Polling rate per monitored node.
    pub lambda_m_hz: f64,
    /// Aggregate switch command rate.
    pub lambda_c_hz: f64,
    pub control_burst_size: u32,
    pub arrivals: Arrivals,
    pub payload: PayloadTable,
    pub delay_limits_s: DelayLimits,
    pub lte_bs_count: u32,
    pub lte_bs_capacity_bps: u64,
    pub dmr_capacity_bps: u64,
    pub qos: QosMode,
    pub w_monitoring: f64,
    pub w_control: f64,
    pub alpha_e: f64,
    pub eq5_literal: bool,
    pub lte_fail_at_s: Option<f64>,
    pub lte_restore_at_s: Option<f64>,
    pub metrics_interval_s: f64,
    pub region_side_km: f64,
    pub topology: TopologyCounts,
    pub transport: TransportParams,
    pub access_latency_s: AccessLatency,
    /// Per-link buffer limit; `None` is unbounded.
    pub queue_limit_bytes: Option<u64>,
    pub der_control_via: Technology,
    /// Period of DER power-setpoint commands; `None` disables them.
    pub der_control_period_s: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            tau_s: 0.01,
            duration_s: 1600.0,
            seed: 1,
            lambda_m_hz: 1.0 / 30.0,
            lambda_c_hz: 2.0 / 600.0,
            control_burst_size: 2,
            arrivals: Arrivals::Periodic,
            payload: PayloadTable {
                dms_request: 64,
                dms_command: 184,
                hva_lv: 500,
                substation: 5000,
                der: 224,
                switch: 100,
            },
            delay_limits_s: DelayLimits { monitoring: 30.0, control: 10.0 },
            lte_bs_count: 2,
            lte_bs_capacity_bps: 50_000,
            dmr_capacity_bps: 1_920,
            qos: QosMode::Fifo,
            w_monitoring: 0.1,
            w_control: 0.9,
            alpha_e: 0.3,
            eq5_literal: false,
            lte_fail_at_s: None,
            lte_restore_at_s: None,
            metrics_interval_s: 25.0,
            region_side_km: 15.0,
            topology: TopologyCounts { hva_lv: 332, switch: 26, substation: 1, pv_plant: 1, wind_farm: 1 },
            transport: TransportParams { header_bytes: 40, mss_bytes: 1460, ack_bytes: 40 },
            access_latency_s: AccessLatency { lte: 0.020, dmr: 0.050 },
            queue_limit_bytes: None,
            der_control_via: Technology::Lte,
            der_control_period_s: None,
        }
    }
}

const KEYS: &[&str] = &[
    "tau_s",
    "duration_s",
    "seed",
    "lambda_m_hz",
    "lambda_c_hz",
    "control_burst_size",
    "arrivals",
    "payload.dms_request",
    "payload.dms_command",
    "payload.hva_lv",
    "payload.substation",
    "payload.der",
    "payload.switch",
    "delay_limits_s.monitoring",
    "delay_limits_s.control",
    "lte_bs_count",
    "lte_bs_capacity_bps",
    "dmr_capacity_bps",
    "qos",
    "w_monitoring",
    "w_control",
    "alpha_e",
    "eq5_literal",
    "lte_fail_at_s",
    "lte_restore_at_s",
    "metrics_interval_s",
    "region_side_km",
    "topology.hva_lv",
    "topology.switch",
    "topology.substation",
    "topology.pv_plant",
    "topology.wind_farm",
    "header_bytes",
    "mss_bytes",
    "ack_bytes",
    "access_latency_s.lte",
    "access_latency_s.dmr",
    "queue_limit_bytes",
    "der_control_via",
    "der_control_period_s",
];

fn parse_value<T: FromStr>(raw: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| format!("invalid value `{raw}`: {e}"))
}

fn parse_optional<T: FromStr>(raw: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if raw.eq_ignore_ascii_case("none") || raw.is_empty() {
        Ok(None)
    } else {
        parse_value(raw).map(Some)
    }
}

fn fmt_optional<T: fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "none".to_string(),
    }
}

impl ScenarioConfig {
    /// Reads, parses and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse_str(&text)
    }

    /// Parses a scenario from text and validates it.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                detail: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Parse { line: line_no, detail: format!("duplicate key `{key}`") });
            }
            cfg.set(key, value).map_err(|detail| ConfigError::Parse { line: line_no, detail })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "tau_s" => self.tau_s = parse_value(value)?,
            "duration_s" => self.duration_s = parse_value(value)?,
            "seed" => self.seed = parse_value(value)?,
            "lambda_m_hz" => self.lambda_m_hz = parse_value(value)?,
            "lambda_c_hz" => self.lambda_c_hz = parse_value(value)?,
            "control_burst_size" => self.control_burst_size = parse_value(value)?,
            "arrivals" => self.arrivals = parse_value(value)?,
            "payload.dms_request" => self.payload.dms_request = parse_value(value)?,
            "payload.dms_command" => self.payload.dms_command = parse_value(value)?,
            "payload.hva_lv" => self.payload.hva_lv = parse_value(value)?,
            "payload.substation" => self.payload.substation = parse_value(value)?,
            "payload.der" => self.payload.der = parse_value(value)?,
            "payload.switch" => self.payload.switch = parse_value(value)?,
            "delay_limits_s.monitoring" => self.delay_limits_s.monitoring = parse_value(value)?,
            "delay_limits_s.control" => self.delay_limits_s.control = parse_value(value)?,
            "lte_bs_count" => self.lte_bs_count = parse_value(value)?,
            "lte_bs_capacity_bps" => self.lte_bs_capacity_bps = parse_value(value)?,
            "dmr_capacity_bps" => self.dmr_capacity_bps = parse_value(value)?,
            "qos" => self.qos = parse_value(value)?,
            "w_monitoring" => self.w_monitoring = parse_value(value)?,
            "w_control" => self.w_control = parse_value(value)?,
            "alpha_e" => self.alpha_e = parse_value(value)?,
            "eq5_literal" => self.eq5_literal = parse_value(value)?,
            "lte_fail_at_s" => self.lte_fail_at_s = parse_optional(value)?,
            "lte_restore_at_s" => self.lte_restore_at_s = parse_optional(value)?,
            "metrics_interval_s" => self.metrics_interval_s = parse_value(value)?,
            "region_side_km" => self.region_side_km = parse_value(value)?,
            "topology.hva_lv" => self.topology.hva_lv = parse_value(value)?,
            "topology.switch" => self.topology.switch = parse_value(value)?,
            "topology.substation" => self.topology.substation = parse_value(value)?,
            "topology.pv_plant" => self.topology.pv_plant = parse_value(value)?,
            "topology.wind_farm" => self.topology.wind_farm = parse_value(value)?,
            "header_bytes" => self.transport.header_bytes = parse_value(value)?,
            "mss_bytes" => self.transport.mss_bytes = parse_value(value)?,
            "ack_bytes" => self.transport.ack_bytes = parse_value(value)?,
            "access_latency_s.lte" => self.access_latency_s.lte = parse_value(value)?,
            "access_latency_s.dmr" => self.access_latency_s.dmr = parse_value(value)?,
            "queue_limit_bytes" => self.queue_limit_bytes = parse_optional(value)?,
            "der_control_via" => self.der_control_via = parse_value(value)?,
            "der_control_period_s" => self.der_control_period_s = parse_optional(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Textual value of a key, in the form [`ScenarioConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "tau_s" => self.tau_s.to_string(),
            "duration_s" => self.duration_s.to_string(),
            "seed" => self.seed.to_string(),
            "lambda_m_hz" => self.lambda_m_hz.to_string(),
            "lambda_c_hz" => self.lambda_c_hz.to_string(),
            "control_burst_size" => self.control_burst_size.to_string(),
            "arrivals" => match self.arrivals {
                Arrivals::Periodic => "periodic".into(),
                Arrivals::Poisson => "poisson".into(),
            },
            "payload.dms_request" => self.payload.dms_request.to_string(),
            "payload.dms_command" => self.payload.dms_command.to_string(),
            "payload.hva_lv" => self.payload.hva_lv.to_string(),
            "payload.substation" => self.payload.substation.to_string(),
            "payload.der" => self.payload.der.to_string(),
            "payload.switch" => self.payload.switch.to_string(),
            "delay_limits_s.monitoring" => self.delay_limits_s.monitoring.to_string(),
            "delay_limits_s.control" => self.delay_limits_s.control.to_string(),
            "lte_bs_count" => self.lte_bs_count.to_string(),
            "lte_bs_capacity_bps" => self.lte_bs_capacity_bps.to_string(),
            "dmr_capacity_bps" => self.dmr_capacity_bps.to_string(),
            "qos" => self.qos.as_str().into(),
            "w_monitoring" => self.w_monitoring.to_string(),
            "w_control" => self.w_control.to_string(),
            "alpha_e" => self.alpha_e.to_string(),
            "eq5_literal" => self.eq5_literal.to_string(),
            "lte_fail_at_s" => fmt_optional(&self.lte_fail_at_s),
            "lte_restore_at_s" => fmt_optional(&self.lte_restore_at_s),
            "metrics_interval_s" => self.metrics_interval_s.to_string(),
            "region_side_km" => self.region_side_km.to_string(),
            "topology.hva_lv" => self.topology.hva_lv.to_string(),
            "topology.switch" => self.topology.switch.to_string(),
            "topology.substation" => self.topology.substation.to_string(),
            "topology.pv_plant" => self.topology.pv_plant.to_string(),
            "topology.wind_farm" => self.topology.wind_farm.to_string(),
            "header_bytes" => self.transport.header_bytes.to_string(),
            "mss_bytes" => self.transport.mss_bytes.to_string(),
            "ack_bytes" => self.transport.ack_bytes.to_string(),
            "access_latency_s.lte" => self.access_latency_s.lte.to_string(),
            "access_latency_s.dmr" => self.access_latency_s.dmr.to_string(),
            "queue_limit_bytes" => fmt_optional(&self.queue_limit_bytes),
            "der_control_via" => self.der_control_via.as_str().into(),
            "der_control_period_s" => fmt_optional(&self.der_control_period_s),
            _ => return None,
        })
    }

    /// Renders every key in canonical order; parses back to an equal config.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("every listed key is gettable");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, detail: impl Into<String>) -> ConfigError {
            ConfigError::Validation { key, detail: detail.into() }
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;

        if !finite_pos(self.tau_s) {
            return Err(bad("tau_s", "must be > 0"));
        }
        let tau = SimTime::try_from_secs_exact(self.tau_s)
            .filter(|t| t.ticks() > 0)
            .ok_or_else(|| bad("tau_s", "must be a whole multiple of the 10 µs base unit"))?;
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(bad("duration_s", "must be >= 0"));
        }
        if !finite_pos(self.lambda_m_hz) {
            return Err(bad("lambda_m_hz", "must be > 0"));
        }
        if !(self.lambda_c_hz.is_finite() && self.lambda_c_hz >= 0.0) {
            return Err(bad("lambda_c_hz", "must be >= 0"));
        }
        if self.control_burst_size == 0 {
            return Err(bad("control_burst_size", "must be >= 1"));
        }
        let p = &self.payload;
        for (key, v) in [
            ("payload.dms_request", p.dms_request),
            ("payload.dms_command", p.dms_command),
            ("payload.hva_lv", p.hva_lv),
            ("payload.substation", p.substation),
            ("payload.der", p.der),
            ("payload.switch", p.switch),
        ] {
            if v == 0 {
                return Err(bad(key, "payload must be > 0 bytes"));
            }
        }
        if !finite_pos(self.delay_limits_s.monitoring) {
            return Err(bad("delay_limits_s.monitoring", "must be > 0"));
        }
        if !finite_pos(self.delay_limits_s.control) {
            return Err(bad("delay_limits_s.control", "must be > 0"));
        }
        if self.lte_bs_capacity_bps == 0 {
            return Err(bad("lte_bs_capacity_bps", "must be > 0"));
        }
        if self.dmr_capacity_bps == 0 {
            return Err(bad("dmr_capacity_bps", "must be > 0"));
        }
        if !finite_pos(self.w_monitoring) {
            return Err(bad("w_monitoring", "must be > 0"));
        }
        if !finite_pos(self.w_control) {
            return Err(bad("w_control", "must be > 0"));
        }
        if !(self.alpha_e.is_finite() && (0.0..1.0).contains(&self.alpha_e)) {
            return Err(bad("alpha_e", "must satisfy 0 <= alpha_e < 1"));
        }
        for (key, v) in [("lte_fail_at_s", self.lte_fail_at_s), ("lte_restore_at_s", self.lte_restore_at_s)] {
            if let Some(t) = v {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(bad(key, "must be >= 0 or none"));
                }
            }
        }
        if !finite_pos(self.metrics_interval_s) {
            return Err(bad("metrics_interval_s", "must be > 0"));
        }
        let interval = SimTime::try_from_secs_exact(self.metrics_interval_s)
            .ok_or_else(|| bad("metrics_interval_s", "must be a whole number of ticks"))?;
        if interval.ticks() % tau.ticks() != 0 {
            return Err(bad("metrics_interval_s", "must be a multiple of tau_s"));
        }
        if !finite_pos(self.region_side_km) {
            return Err(bad("region_side_km", "must be > 0"));
        }
        if self.transport.mss_bytes == 0 {
            return Err(bad("mss_bytes", "must be > 0"));
        }
        if self.transport.ack_bytes == 0 {
            return Err(bad("ack_bytes", "must be > 0"));
        }
        for (key, v) in
            [("access_latency_s.lte", self.access_latency_s.lte), ("access_latency_s.dmr", self.access_latency_s.dmr)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(key, "must be >= 0"));
            }
        }
        if self.queue_limit_bytes == Some(0) {
            return Err(bad("queue_limit_bytes", "must be > 0 or none"));
        }
        if let Some(p) = self.der_control_period_s {
            if !finite_pos(p) {
                return Err(bad("der_control_period_s", "must be > 0 or none"));
            }
        }
        Ok(())
    }

    pub fn qos_params(&self) -> Qos {
        match self.qos {
            QosMode::Fifo => Qos::Fifo,
            QosMode::Wfq => Qos::Wfq { w_monitoring: self.w_monitoring, w_control: self.w_control },
            QosMode::WfqRa => {
                Qos::WfqRa { w_monitoring: self.w_monitoring, w_control: self.w_control, alpha_e: self.alpha_e }
            }
        }
    }

    pub fn tau(&self) -> SimTime {
        SimTime::from_secs_f64(self.tau_s)
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn metrics_interval(&self) -> SimTime {
        SimTime::from_secs_f64(self.metrics_interval_s)
    }

    pub fn poll_period(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.lambda_m_hz)
    }

    /// Time between switch command bursts, or `None` when control is off.
    pub fn control_period(&self) -> Option<SimTime> {
        (self.lambda_c_hz > 0.0).then(|| SimTime::from_secs_f64(self.control_burst_size as f64 / self.lambda_c_hz))
    }

    pub fn delay_limit(&self, class: MessageClass) -> SimTime {
        match class {
            MessageClass::Monitoring => SimTime::from_secs_f64(self.delay_limits_s.monitoring),
            MessageClass::Control => SimTime::from_secs_f64(self.delay_limits_s.control),
        }
    }

    pub fn access_latency(&self, tech: Technology) -> SimTime {
        match tech {
            Technology::Lte => SimTime::from_secs_f64(self.access_latency_s.lte),
            Technology::Dmr => SimTime::from_secs_f64(self.access_latency_s.dmr),
        }
    }

    pub fn lte_fail_at(&self) -> Option<SimTime> {
        self.lte_fail_at_s.map(SimTime::from_secs_f64)
    }

    pub fn lte_restore_at(&self) -> Option<SimTime> {
        self.lte_restore_at_s.map(SimTime::from_secs_f64)
    }
}
