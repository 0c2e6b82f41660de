//! TCP transport: newline-delimited JSON envelopes, one connection per
//! federate.
//!
//! Handshake: the federate sends `JOIN{name}`, the RTI answers
//! `JOIN_ACK{fid, tau_ticks}`. Each slot the RTI sends `DELIVER`* then
//! `GRANT`; the federate answers `PUBLISH`* then `ACK_SLOT` (or `DONE` when it
//! has reached its horizon). At the end the RTI sends the remaining
//! `DELIVER`s and `DONE`, and the federate confirms with `DONE`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::message::SimMessage;
use crate::time::{SimTime, TimeslotIndex};

use super::{
    decode_envelope, encode_envelope, DecodeError, EnvelopeBody, Federate, FederateEnvelope, FederateLink, Grant,
    Published, StepOutput, TransportError,
};

struct FrameStream {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    line: Vec<u8>,
}

impl FrameStream {
    fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true).map_err(TransportError::from_io)?;
        let reader = BufReader::new(stream.try_clone().map_err(TransportError::from_io)?);
        Ok(FrameStream { reader, writer: BufWriter::new(stream), line: Vec::new() })
    }

    fn send(&mut self, slot: TimeslotIndex, body: EnvelopeBody) -> Result<(), TransportError> {
        let bytes = encode_envelope(&FederateEnvelope::new(slot, body));
        self.writer.write_all(&bytes).map_err(TransportError::from_io)
    }

    fn flush(&mut self) -> Result<(), TransportError> {
        self.writer.flush().map_err(TransportError::from_io)
    }

    fn recv(&mut self) -> Result<FederateEnvelope, TransportError> {
        self.line.clear();
        let n = self.reader.read_until(b'\n', &mut self.line).map_err(TransportError::from_io)?;
        if n == 0 {
            return Err(TransportError::Disconnected);
        }
        if self.line.last() != Some(&b'\n') {
            return Err(DecodeError { offset: self.line.len(), reason: "truncated frame".into() }.into());
        }
        Ok(decode_envelope(&self.line)?)
    }

    fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), TransportError> {
        self.reader.get_ref().set_read_timeout(timeout).map_err(TransportError::from_io)
    }
}

/// RTI-side end of one federate connection.
pub struct SocketLink {
    name: String,
    stream: FrameStream,
}

impl SocketLink {
    pub fn name(&self) -> &str {
        &self.name
    }
}

fn unexpected(env: &FederateEnvelope, wanted: &str) -> TransportError {
    TransportError::Protocol(format!("expected {wanted}, got {} for slot {}", env.body.type_str(), env.slot.0))
}

/// Accepts one connection per expected name and completes the handshake.
///
/// Links come back in `expected` order, so federate ids do not depend on
/// which process connected first. `timeout` bounds every subsequent read.
pub fn accept_federates(
    listener: &TcpListener,
    expected: &[&str],
    tau: SimTime,
    timeout: Option<Duration>,
) -> Result<Vec<SocketLink>, TransportError> {
    let mut joined: Vec<Option<SocketLink>> = expected.iter().map(|_| None).collect();
    for _ in 0..expected.len() {
        let (stream, peer) = listener.accept().map_err(TransportError::from_io)?;
        let stream = FrameStream::new(stream)?;
        stream.set_read_timeout(timeout)?;
        let mut link = SocketLink { name: String::new(), stream };
        let join = link.stream.recv()?;
        let EnvelopeBody::Join { name } = join.body else {
            return Err(unexpected(&join, "JOIN"));
        };
        let Some(idx) = expected.iter().position(|e| *e == name) else {
            return Err(TransportError::Protocol(format!("unexpected federate `{name}` from {peer}")));
        };
        if joined[idx].is_some() {
            return Err(TransportError::Protocol(format!("federate `{name}` joined twice")));
        }
        log::debug!("federate `{name}` joined from {peer}");
        link.name = name;
        joined[idx] = Some(link);
    }
    let mut links: Vec<SocketLink> = joined.into_iter().map(|l| l.expect("every slot filled")).collect();
    for (fid, link) in links.iter_mut().enumerate() {
        link.stream.send(TimeslotIndex(0), EnvelopeBody::JoinAck { fid: fid as u32, tau_ticks: tau.ticks() })?;
        link.stream.flush()?;
    }
    Ok(links)
}

impl FederateLink for SocketLink {
    fn grant(&mut self, grant: Grant) -> Result<(), TransportError> {
        self.stream.send(grant.slot, EnvelopeBody::Grant { end_ticks: grant.end.ticks() })?;
        self.stream.flush()
    }

    fn collect(&mut self, grant: Grant) -> Result<StepOutput, TransportError> {
        let mut out = StepOutput::default();
        loop {
            let env = self.stream.recv()?;
            if env.slot != grant.slot {
                return Err(TransportError::Protocol(format!(
                    "reply for slot {} while slot {} is granted",
                    env.slot.0, grant.slot.0
                )));
            }
            match env.body {
                EnvelopeBody::Publish { at_ticks, msg } => out.outbox.push(Published { at: SimTime(at_ticks), msg }),
                EnvelopeBody::AckSlot => return Ok(out),
                EnvelopeBody::Done => {
                    out.done = true;
                    return Ok(out);
                }
                EnvelopeBody::Error { code, detail } => return Err(super::FederateError { code, detail }.into()),
                _ => return Err(unexpected(&env, "PUBLISH, ACK_SLOT or DONE")),
            }
        }
    }

    fn deliver(&mut self, slot: TimeslotIndex, at: SimTime, msgs: Vec<SimMessage>) -> Result<(), TransportError> {
        for msg in msgs {
            self.stream.send(slot, EnvelopeBody::Deliver { at_ticks: at.ticks(), msg })?;
        }
        Ok(())
    }

    fn finish(&mut self, slot: TimeslotIndex, _at: SimTime) -> Result<(), TransportError> {
        self.stream.send(slot, EnvelopeBody::Done)?;
        self.stream.flush()?;
        let env = self.stream.recv()?;
        match env.body {
            EnvelopeBody::Done => Ok(()),
            EnvelopeBody::Error { code, detail } => Err(super::FederateError { code, detail }.into()),
            _ => Err(unexpected(&env, "DONE")),
        }
    }
}

/// Connects to an RTI, retrying for up to `patience` while it starts up.
pub fn connect(addr: impl ToSocketAddrs + Clone, patience: Duration) -> Result<TcpStream, TransportError> {
    let deadline = std::time::Instant::now() + patience;
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => return Ok(s),
            Err(e) if std::time::Instant::now() < deadline => {
                log::trace!("rti not reachable yet: {e}");
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(TransportError::from_io(e)),
        }
    }
}

/// Runs `federate` against the RTI on `stream` until the federation ends.
/// Returns the federate id the RTI assigned.
pub fn serve_federate<F: Federate + ?Sized>(
    stream: TcpStream,
    name: &str,
    federate: &mut F,
) -> Result<u32, TransportError> {
    let mut io = FrameStream::new(stream)?;
    io.send(TimeslotIndex(0), EnvelopeBody::Join { name: name.to_string() })?;
    io.flush()?;
    let ack = io.recv()?;
    let EnvelopeBody::JoinAck { fid, tau_ticks } = ack.body else {
        return Err(unexpected(&ack, "JOIN_ACK"));
    };
    let mut pending: Vec<SimMessage> = Vec::new();
    let mut last_at = SimTime::ZERO;
    let mut done = false;
    loop {
        let env = io.recv()?;
        match env.body {
            EnvelopeBody::Deliver { at_ticks, msg } => {
                last_at = SimTime(at_ticks);
                if done {
                    federate.absorb(last_at, vec![msg])?;
                } else {
                    pending.push(msg);
                }
            }
            EnvelopeBody::Grant { end_ticks } => {
                if done {
                    return Err(TransportError::Protocol("GRANT after DONE".into()));
                }
                let grant = Grant { slot: env.slot, start: SimTime(env.slot.0 * tau_ticks), end: SimTime(end_ticks) };
                let out = match federate.step(&grant, std::mem::take(&mut pending)) {
                    Ok(out) => out,
                    Err(e) => {
                        io.send(env.slot, EnvelopeBody::Error { code: e.code.clone(), detail: e.detail.clone() })?;
                        io.flush()?;
                        return Err(e.into());
                    }
                };
                for p in out.outbox {
                    io.send(env.slot, EnvelopeBody::Publish { at_ticks: p.at.ticks(), msg: p.msg })?;
                }
                if out.done {
                    done = true;
                    io.send(env.slot, EnvelopeBody::Done)?;
                } else {
                    io.send(env.slot, EnvelopeBody::AckSlot)?;
                }
                io.flush()?;
            }
            EnvelopeBody::Done => {
                federate.absorb(last_at, std::mem::take(&mut pending))?;
                io.send(env.slot, EnvelopeBody::Done)?;
                io.flush()?;
                return Ok(fid);
            }
            _ => return Err(unexpected(&env, "DELIVER, GRANT or DONE")),
        }
    }
}
