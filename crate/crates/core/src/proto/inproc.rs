use crate::message::SimMessage;
use crate::time::{SimTime, TimeslotIndex};

use super::{Federate, FederateLink, Grant, StepOutput, TransportError};

/// Function-call transport: the federate runs on the RTI's thread.
pub struct InProcLink<F: Federate> {
    federate: F,
    inbox: Vec<SimMessage>,
    done: bool,
}

impl<F: Federate> InProcLink<F> {
    pub fn new(federate: F) -> Self {
        InProcLink { federate, inbox: Vec::new(), done: false }
    }

    pub fn into_inner(self) -> F {
        self.federate
    }
}

impl<F: Federate> FederateLink for InProcLink<F> {
    fn grant(&mut self, _grant: Grant) -> Result<(), TransportError> {
        Ok(())
    }

    fn collect(&mut self, grant: Grant) -> Result<StepOutput, TransportError> {
        let inbox = std::mem::take(&mut self.inbox);
        let out = self.federate.step(&grant, inbox)?;
        self.done |= out.done;
        Ok(out)
    }

    fn deliver(&mut self, _slot: TimeslotIndex, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), TransportError> {
        if self.done {
            if !msgs.is_empty() {
                self.federate.absorb(at, msgs)?;
            }
        } else {
            self.inbox.extend(msgs);
        }
        Ok(())
    }

    fn finish(&mut self, _slot: TimeslotIndex, at: SimTime) -> Result<(), TransportError> {
        let rest = std::mem::take(&mut self.inbox);
        self.federate.absorb(at, rest)?;
        Ok(())
    }
}
