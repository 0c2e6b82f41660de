//! Per-link output queues.
//!
//! WFQ is implemented as self-clocked fair queueing: a frame of class `c`
//! gets the finish tag `F = max(F_c, V) + bytes / w_c`, where `F_c` is the
//! class's previous tag and `V` the tag of the frame last taken into service.
//! The frame with the smallest tag goes next; ties favour control.

use std::collections::VecDeque;

use crate::message::MessageClass;

use super::transport::TransportFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueDiscipline {
    Fifo,
    Wfq { w_monitoring: f64, w_control: f64 },
}

#[derive(Debug, Clone)]
pub struct ClassQueues {
    discipline: QueueDiscipline,
    fifo: VecDeque<TransportFrame>,
    classes: [VecDeque<(f64, TransportFrame)>; 2],
    last_finish: [f64; 2],
    virtual_time: f64,
    bytes: [u64; 2],
    limit_bytes: Option<u64>,
}

impl ClassQueues {
    pub fn new(discipline: QueueDiscipline, limit_bytes: Option<u64>) -> Self {
        ClassQueues {
            discipline,
            fifo: VecDeque::new(),
            classes: [VecDeque::new(), VecDeque::new()],
            last_finish: [0.0; 2],
            virtual_time: 0.0,
            bytes: [0; 2],
            limit_bytes,
        }
    }

    pub fn discipline(&self) -> QueueDiscipline {
        self.discipline
    }

    fn weight(&self, class: MessageClass) -> f64 {
        match (self.discipline, class) {
            (QueueDiscipline::Wfq { w_monitoring, .. }, MessageClass::Monitoring) => w_monitoring,
            (QueueDiscipline::Wfq { w_control, .. }, MessageClass::Control) => w_control,
            (QueueDiscipline::Fifo, _) => 1.0,
        }
    }

    /// Adds a frame, or hands it back if the byte limit would be exceeded.
    pub fn enqueue(&mut self, frame: TransportFrame) -> Result<(), TransportFrame> {
        let size = frame.bytes_on_wire as u64;
        if let Some(limit) = self.limit_bytes {
            if self.total_bytes() + size > limit {
                return Err(frame);
            }
        }
        let c = frame.class.index();
        self.bytes[c] += size;
        match self.discipline {
            QueueDiscipline::Fifo => self.fifo.push_back(frame),
            QueueDiscipline::Wfq { .. } => {
                let finish = self.last_finish[c].max(self.virtual_time) + size as f64 / self.weight(frame.class);
                self.last_finish[c] = finish;
                self.classes[c].push_back((finish, frame));
            }
        }
        Ok(())
    }

    /// Next frame to transmit.
    pub fn dequeue(&mut self) -> Option<TransportFrame> {
        let frame = match self.discipline {
            QueueDiscipline::Fifo => self.fifo.pop_front()?,
            QueueDiscipline::Wfq { .. } => {
                let ctl = MessageClass::Control.index();
                let mon = MessageClass::Monitoring.index();
                let pick = match (self.classes[ctl].front(), self.classes[mon].front()) {
                    (None, None) => return None,
                    (Some(_), None) => ctl,
                    (None, Some(_)) => mon,
                    (Some((fc, _)), Some((fm, _))) => {
                        if fc <= fm {
                            ctl
                        } else {
                            mon
                        }
                    }
                };
                let (finish, frame) = self.classes[pick].pop_front().expect("non-empty");
                self.virtual_time = finish;
                frame
            }
        };
        self.bytes[frame.class.index()] -= frame.bytes_on_wire as u64;
        Some(frame)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len(&self) -> usize {
        self.fifo.len() + self.classes[0].len() + self.classes[1].len()
    }

    pub fn queued_bytes(&self, class: MessageClass) -> u64 {
        self.bytes[class.index()]
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes[0] + self.bytes[1]
    }

    /// Empties the queue, returning frames in arrival order per class.
    pub fn drain(&mut self) -> Vec<TransportFrame> {
        let mut out: Vec<TransportFrame> = self.fifo.drain(..).collect();
        for q in &mut self.classes {
            out.extend(q.drain(..).map(|(_, f)| f));
        }
        self.bytes = [0; 2];
        out
    }
}
