//! One shared radio channel: a single transmitter that serializes frames
//! from its queue, followed by a fixed access latency.

use std::collections::VecDeque;

use serde::Serialize;

use crate::config::Technology;
use crate::message::MessageClass;
use crate::time::SimTime;

use super::queue::ClassQueues;
use super::transport::{transmission_time, TransportFrame};

pub type LinkId = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub frames_in: u64,
    pub frames_delivered: u64,
    pub frames_lost: u64,
    pub frames_dropped: u64,
    pub bits_offered: u64,
    pub bits_transmitted: u64,
}

/// Link state at a sampling instant; bit counters cover the preceding window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkSample {
    pub t: SimTime,
    pub link: String,
    pub up: bool,
    pub queue_bytes: [u64; 2],
    pub bits_served: u64,
    pub bits_offered: u64,
}

#[derive(Debug)]
pub struct LinkModel {
    pub id: LinkId,
    pub name: String,
    pub technology: Technology,
    pub capacity_bps: u64,
    pub access_latency: SimTime,
    queues: ClassQueues,
    up: bool,
    epoch: u32,
    in_service: Option<TransportFrame>,
    propagating: VecDeque<(SimTime, TransportFrame)>,
    stats: LinkStats,
    window_offered: u64,
    window_served: u64,
}

impl LinkModel {
    pub fn new(
        id: LinkId,
        name: impl Into<String>,
        technology: Technology,
        capacity_bps: u64,
        access_latency: SimTime,
        queues: ClassQueues,
    ) -> Self {
        LinkModel {
            id,
            name: name.into(),
            technology,
            capacity_bps,
            access_latency,
            queues,
            up: true,
            epoch: 0,
            in_service: None,
            propagating: VecDeque::new(),
            stats: LinkStats::default(),
            window_offered: 0,
            window_served: 0,
        }
    }

    pub fn is_up(&self) -> bool {
        self.up
    }

    /// Incremented on every failure; events from an older epoch are stale.
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }

    pub fn queue_bytes(&self, class: MessageClass) -> u64 {
        self.queues.queued_bytes(class)
    }

    /// Frames queued, transmitting or propagating.
    pub fn frames_in_link(&self) -> u64 {
        (self.queues.len() + self.propagating.len() + usize::from(self.in_service.is_some())) as u64
    }

    /// Offers a frame; hands it back if the queue is full.
    pub fn enqueue(&mut self, frame: TransportFrame) -> Result<(), TransportFrame> {
        debug_assert!(self.up, "enqueue on a down link");
        let bits = 8 * frame.bytes_on_wire as u64;
        self.stats.frames_in += 1;
        self.stats.bits_offered += bits;
        self.window_offered += bits;
        self.queues.enqueue(frame).inspect_err(|_| self.stats.frames_dropped += 1)
    }

    /// Starts the next transmission if idle; returns its completion time.
    pub fn start_next(&mut self, now: SimTime) -> Option<SimTime> {
        if !self.up || self.in_service.is_some() {
            return None;
        }
        let frame = self.queues.dequeue()?;
        let done = now + transmission_time(frame.bytes_on_wire as u64, self.capacity_bps);
        self.in_service = Some(frame);
        Some(done)
    }

    /// Finishes the current transmission; returns when the frame arrives.
    pub fn complete_transmission(&mut self, now: SimTime) -> SimTime {
        let frame = self.in_service.take().expect("a frame in service");
        let bits = 8 * frame.bytes_on_wire as u64;
        self.stats.bits_transmitted += bits;
        self.window_served += bits;
        let arrival = now + self.access_latency;
        self.propagating.push_back((arrival, frame));
        arrival
    }

    /// Pops the frame due at `now` off the far end of the link.
    pub fn arrive(&mut self, now: SimTime) -> TransportFrame {
        let (at, frame) = self.propagating.pop_front().expect("a propagating frame");
        debug_assert_eq!(at, now);
        self.stats.frames_delivered += 1;
        frame
    }

    /// Takes the link down, losing every frame it holds.
    pub fn fail(&mut self) -> Vec<TransportFrame> {
        self.up = false;
        self.epoch += 1;
        let mut lost = self.queues.drain();
        lost.extend(self.in_service.take());
        lost.extend(self.propagating.drain(..).map(|(_, f)| f));
        self.stats.frames_lost += lost.len() as u64;
        lost
    }

    pub fn restore(&mut self) {
        self.up = true;
    }

    /// Snapshot for the link log; resets the window counters.
    pub fn sample(&mut self, t: SimTime) -> LinkSample {
        let s = LinkSample {
            t,
            link: self.name.clone(),
            up: self.up,
            queue_bytes: [self.queue_bytes(MessageClass::Monitoring), self.queue_bytes(MessageClass::Control)],
            bits_served: self.window_served,
            bits_offered: self.window_offered,
        };
        self.window_served = 0;
        self.window_offered = 0;
        s
    }
}
