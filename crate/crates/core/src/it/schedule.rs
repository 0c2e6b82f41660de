//! When the DMS polls each monitored node and when it issues switch commands.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::Arrivals;
use crate::message::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone)]
pub struct PollingSchedule {
    period: SimTime,
    arrivals: Arrivals,
    due: BinaryHeap<Reverse<(SimTime, NodeId)>>,
    control_period: Option<SimTime>,
    next_burst: SimTime,
    burst_size: usize,
    switches: Vec<NodeId>,
    der_period: Option<SimTime>,
    next_der: SimTime,
    ders: Vec<NodeId>,
    rng: ChaCha8Rng,
}

/// Work due in one slot.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DueWork {
    pub polls: Vec<(SimTime, NodeId)>,
    pub commands: Vec<(SimTime, NodeId)>,
}

impl PollingSchedule {
    /// Gives each monitored node a random phase in `[0, period)`; control
    /// bursts happen at every positive multiple of `control_period`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        monitored: &[NodeId],
        period: SimTime,
        arrivals: Arrivals,
        switches: Vec<NodeId>,
        control_period: Option<SimTime>,
        burst_size: usize,
        ders: Vec<NodeId>,
        der_period: Option<SimTime>,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let mut due = BinaryHeap::new();
        for &node in monitored {
            let first = match arrivals {
                Arrivals::Periodic => SimTime(rng.random_range(0..period.ticks().max(1))),
                Arrivals::Poisson => exp_gap(&mut rng, period),
            };
            due.push(Reverse((first, node)));
        }
        PollingSchedule {
            period,
            arrivals,
            due,
            control_period,
            next_burst: control_period.unwrap_or(SimTime::ZERO),
            burst_size: burst_size.min(switches.len()),
            switches,
            der_period,
            next_der: der_period.unwrap_or(SimTime::ZERO),
            ders,
            rng,
        }
    }

    pub fn period(&self) -> SimTime {
        self.period
    }

    fn gap(&mut self) -> SimTime {
        match self.arrivals {
            Arrivals::Periodic => self.period,
            Arrivals::Poisson => exp_gap(&mut self.rng, self.period),
        }
    }

    /// Everything due before `end` (and before `horizon`), in time order.
    pub fn pop_due(&mut self, end: SimTime, horizon: SimTime) -> DueWork {
        let limit = end.min(horizon);
        let mut work = DueWork::default();
        while let Some(&Reverse((t, node))) = self.due.peek() {
            if t >= limit {
                break;
            }
            self.due.pop();
            work.polls.push((t, node));
            let next = t + self.gap();
            self.due.push(Reverse((next, node)));
        }
        if let Some(p) = self.control_period {
            while self.next_burst < limit && !self.switches.is_empty() {
                let t = self.next_burst;
                let mut picks: Vec<usize> = sample(&mut self.rng, self.switches.len(), self.burst_size).into_vec();
                picks.sort_unstable();
                work.commands.extend(picks.into_iter().map(|i| (t, self.switches[i])));
                self.next_burst = t + p;
            }
        }
        if let Some(p) = self.der_period {
            while self.next_der < limit && !self.ders.is_empty() {
                let t = self.next_der;
                work.commands.extend(self.ders.iter().map(|&n| (t, n)));
                self.next_der = t + p;
            }
        }
        work.commands.sort();
        work
    }

    /// Switches every node to `new_period` from `now` on.
    ///
    /// Nodes keep their relative order (by next due time) and are spread
    /// over one period in proportion to the bits each exchange puts on the
    /// wire, so the offered load is flat rather than bursty.
    pub fn reschedule(&mut self, now: SimTime, new_period: SimTime, bits_of: impl Fn(NodeId) -> u64) {
        let mut pending: Vec<(SimTime, NodeId)> = self.due.drain().map(|Reverse(e)| e).collect();
        pending.sort();
        let total: u128 = pending.iter().map(|&(_, n)| bits_of(n) as u128).sum::<u128>().max(1);
        let mut cumulative: u128 = 0;
        for (_, node) in pending {
            let offset = (cumulative * new_period.ticks() as u128 / total) as u64;
            self.due.push(Reverse((now + SimTime(offset), node)));
            cumulative += bits_of(node) as u128;
        }
        self.period = new_period;
    }
}

fn exp_gap(rng: &mut ChaCha8Rng, mean: SimTime) -> SimTime {
    let rate = 1.0 / mean.ticks().max(1) as f64;
    let exp = Exp::new(rate).expect("positive rate");
    SimTime((exp.sample(rng).round() as u64).max(1))
}
