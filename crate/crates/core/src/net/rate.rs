//! Monitoring-rate adaptation for the narrowband fallback link.

use thiserror::Error;

use crate::config::{ScenarioConfig, Technology};
use crate::it::{control_exchange_bits, monitoring_exchange_bits};
use crate::time::SimTime;
use crate::topology::Topology;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// Capacity left for monitoring once the control share is set aside.
pub fn usable_capacity_bps(cfg: &ScenarioConfig) -> f64 {
    (1.0 - cfg.alpha_e) * cfg.dmr_capacity_bps as f64
}

/// Per-node polling rate that fills the usable capacity exactly:
/// `λ' = (1−α)·c / (n · exchange_bits)`.
pub fn rate_adaptation_rate(cfg: &ScenarioConfig, n_monitored: usize, exchange_bits: f64) -> Result<f64, RateError> {
    if n_monitored == 0 {
        return Err(RateError::InvalidConfig("no monitored nodes".into()));
    }
    if exchange_bits.is_nan() || exchange_bits <= 0.0 {
        return Err(RateError::InvalidConfig("exchange size must be positive".into()));
    }
    let usable = usable_capacity_bps(cfg);
    if usable.is_nan() || usable <= 0.0 {
        return Err(RateError::InvalidConfig("no usable capacity".into()));
    }
    Ok(usable / (n_monitored as f64 * exchange_bits))
}

/// Alternative adaptation rule `λ' = (1/N) · T / ((1−α)·c)` with
/// `T` the offered load in bit/s. Kept for comparison only: it is not
/// dimensionally a rate and overloads the link.
pub fn literal_rate(cfg: &ScenarioConfig, n_monitored: usize, offered_bps: f64) -> Result<f64, RateError> {
    if n_monitored == 0 {
        return Err(RateError::InvalidConfig("no monitored nodes".into()));
    }
    Ok(offered_bps / (n_monitored as f64 * usable_capacity_bps(cfg)))
}

/// What one full polling round and the control traffic cost on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBudget {
    pub n_monitored: usize,
    /// Bits to poll every monitored node once.
    pub round_bits: u64,
    /// Long-run control load kept out of the monitoring budget.
    pub control_reserve_bps: f64,
}

impl RateBudget {
    /// Budget for the configured topology: one poll of every monitored
    /// node, plus switch commands and any DER setpoints carried on DMR.
    pub fn for_topology(cfg: &ScenarioConfig, topo: &Topology) -> Self {
        let round_bits = topo.monitored().map(|n| monitoring_exchange_bits(cfg, n.kind)).sum();
        let control = control_exchange_bits(cfg) as f64;
        let mut control_reserve_bps = cfg.lambda_c_hz * control;
        if let (Some(p), Technology::Dmr) = (cfg.der_control_period_s, cfg.der_control_via) {
            let ders = topo.nodes().iter().filter(|n| n.kind.is_der()).count();
            control_reserve_bps += ders as f64 * control / p;
        }
        RateBudget { n_monitored: topo.monitored().count(), round_bits, control_reserve_bps }
    }

    /// Offered monitoring load at the nominal polling rate.
    pub fn nominal_monitoring_bps(&self, cfg: &ScenarioConfig) -> f64 {
        self.round_bits as f64 * cfg.lambda_m_hz
    }

    /// Polling period that keeps monitoring plus control within the usable
    /// capacity (rounded up to a whole tick).
    pub fn adapted_period(&self, cfg: &ScenarioConfig) -> Result<SimTime, RateError> {
        let budget = usable_capacity_bps(cfg) - self.control_reserve_bps;
        if budget.is_nan() || budget <= 0.0 {
            return Err(RateError::InvalidConfig("control traffic alone exceeds the usable capacity".into()));
        }
        let mean_bits = self.round_bits as f64 / self.n_monitored.max(1) as f64;
        let per_node = budget / (self.n_monitored.max(1) as f64 * mean_bits);
        Ok(SimTime((crate::time::TICKS_PER_SECOND as f64 / per_node).ceil() as u64))
    }

    pub fn literal_period(&self, cfg: &ScenarioConfig) -> Result<SimTime, RateError> {
        let offered = self.nominal_monitoring_bps(cfg) + self.control_reserve_bps;
        let rate = literal_rate(cfg, self.n_monitored, offered)?;
        Ok(SimTime::from_secs_f64(1.0 / rate))
    }
}
