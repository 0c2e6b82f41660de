//! Reliability, delay and difference-delay-factor metrics.
//!
//! Reliability at a node is the share of its exchanges answered within the
//! class delay limit; the class figure is the mean over nodes with a normal
//! 95 % confidence half-width `1.96·σ/√n` (sample σ, n−1 denominator).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::message::{MessageClass, NodeId};
use crate::time::{IntervalIndex, SimTime};

pub const Z_95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty distribution")]
    EmptyDistribution,
}

/// Share of exchanges whose IT delay is within `limit`.
///
/// `None` entries are unanswered exchanges and score 0. Returns `None` for an
/// empty list.
pub fn node_reliability<I>(it_delays: I, limit: SimTime) -> Option<f64>
where
    I: IntoIterator<Item = Option<SimTime>>,
{
    let mut total = 0u64;
    let mut ok = 0u64;
    for d in it_delays {
        total += 1;
        if matches!(d, Some(d) if d <= limit) {
            ok += 1;
        }
    }
    (total > 0).then(|| ok as f64 / total as f64)
}

/// Mean and 95 % CI half-width over per-node reliabilities.
///
/// A single node yields a half-width of 0. Values are sorted before summing,
/// so the result does not depend on input order.
pub fn class_reliability_ci<I>(per_node: I) -> Result<(f64, f64), MetricsError>
where
    I: IntoIterator<Item = f64>,
{
    let mut values: Vec<f64> = per_node.into_iter().collect();
    if values.is_empty() {
        return Err(MetricsError::EmptyDistribution);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, Z_95 * var.sqrt() / n.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdfReport {
    pub tau_s: f64,
    pub message_count: usize,
    pub ddf_percent: f64,
    pub mean_abs_gap_s: f64,
    /// Pairs skipped because their network delay was zero.
    pub excluded_zero_comm: usize,
}

/// Difference delay factor in percent: `100 · mean((d_it − d_comm)/d_comm)`.
pub fn ddf(pairs: &[(SimTime, SimTime)], tau: SimTime) -> Result<DdfReport, MetricsError> {
    let mut count = 0usize;
    let mut excluded = 0usize;
    let mut rel_sum = 0.0;
    let mut gap_sum = 0.0;
    for &(d_it, d_comm) in pairs {
        if d_comm.ticks() == 0 {
            excluded += 1;
            continue;
        }
        let gap = d_it.ticks() as f64 - d_comm.ticks() as f64;
        rel_sum += gap / d_comm.ticks() as f64;
        gap_sum += gap.abs() / crate::time::TICKS_PER_SECOND as f64;
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::EmptyDistribution);
    }
    Ok(DdfReport {
        tau_s: tau.as_secs_f64(),
        message_count: count,
        ddf_percent: 100.0 * rel_sum / count as f64,
        mean_abs_gap_s: gap_sum / count as f64,
        excluded_zero_comm: excluded,
    })
}

/// Nearest-rank percentile of an unsorted sample, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// One class's reliability and delay figures for one reporting interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMetrics {
    pub interval_index: IntervalIndex,
    pub class: MessageClass,
    pub per_node_reliability: BTreeMap<NodeId, f64>,
    /// `None` when no exchange of this class resolved in the interval.
    pub mean: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub exchange_count: usize,
    pub delay_mean_s: Option<f64>,
    pub delay_p95_s: Option<f64>,
    pub sample_count: usize,
}

impl IntervalMetrics {
    pub fn from_parts(
        interval_index: IntervalIndex,
        class: MessageClass,
        per_node_reliability: BTreeMap<NodeId, f64>,
        exchange_count: usize,
        delays_s: &[f64],
    ) -> Self {
        let (mean, ci_half_width) = match class_reliability_ci(per_node_reliability.values().copied()) {
            Ok((m, h)) => (Some(m), Some(h)),
            Err(MetricsError::EmptyDistribution) => (None, None),
        };
        let delay_mean_s = (!delays_s.is_empty()).then(|| delays_s.iter().sum::<f64>() / delays_s.len() as f64);
        IntervalMetrics {
            interval_index,
            class,
            per_node_reliability,
            mean,
            ci_half_width,
            exchange_count,
            delay_mean_s,
            delay_p95_s: percentile(delays_s, 0.95),
            sample_count: delays_s.len(),
        }
    }

    /// Raw lower CI bound (may fall below 0).
    pub fn ci_low(&self) -> Option<f64> {
        Some(self.mean? - self.ci_half_width?)
    }

    /// Raw upper CI bound (may exceed 1).
    pub fn ci_high(&self) -> Option<f64> {
        Some(self.mean? + self.ci_half_width?)
    }

    pub fn ci_low_clamped(&self) -> Option<f64> {
        self.ci_low().map(|v| v.clamp(0.0, 1.0))
    }

    pub fn ci_high_clamped(&self) -> Option<f64> {
        self.ci_high().map(|v| v.clamp(0.0, 1.0))
    }
}
