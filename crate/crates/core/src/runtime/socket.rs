//! External controller over TCP: newline-delimited JSON.
//!
//! ```text
//! server -> client  {"type":"hello","states":[...],"inputs":[...],"eta":0.01}
//! client -> server  {"type":"ready"}
//! server -> client  {"type":"state","t":0.0,"x":[...]}     once per period
//! client -> server  {"type":"action","u":[...]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::controller::{clamp_action, Controller, Response};
use super::sim::{simulate_run, RunRecord, SimOptions};
use super::RuntimeError;
use crate::model::DynSystem;
use crate::poly::IntervalBox;
use crate::switchgen::SwitchingArtifact;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Hello { states: Vec<String>, inputs: Vec<String>, eta: f64 },
    Ready,
    State { t: f64, x: Vec<f64> },
    Action { u: Vec<f64> },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = crate::json::to_line(self);
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Self, RuntimeError> {
        serde_json::from_str(line.trim()).map_err(|e| RuntimeError::Protocol(format!("malformed message {line:?}: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct ExternalOptions {
    /// per-period response deadline; `0.9 * eta` when `None`
    pub deadline: Option<Duration>,
    pub handshake_timeout: Duration,
    /// keep running on the baseline after the connection drops
    pub fallback_to_bc: bool,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self { deadline: None, handshake_timeout: Duration::from_secs(10), fallback_to_bc: false }
    }
}

type Incoming = Result<Message, RuntimeError>;

pub struct ExternalController {
    stream: TcpStream,
    rx: Receiver<Incoming>,
    controls: IntervalBox,
    deadline: Duration,
    fallback: bool,
    sent: u64,
    received: u64,
    lost: bool,
    pub timeouts: usize,
    pub stale: usize,
}

fn spawn_reader(stream: TcpStream) -> Receiver<Incoming> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let msg = match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => Message::parse(&l),
                Err(e) => Err(RuntimeError::ConnectionLost(e.to_string())),
            };
            let stop = msg.is_err();
            if tx.send(msg).is_err() || stop {
                return;
            }
        }
        let _ = tx.send(Err(RuntimeError::ConnectionLost("peer closed the connection".into())));
    });
    rx
}

impl ExternalController {
    /// Sends `hello` and waits for `ready`.
    pub fn handshake(stream: TcpStream, sys: &DynSystem, opts: &ExternalOptions) -> Result<Self, RuntimeError> {
        stream.set_nodelay(true).map_err(|e| RuntimeError::Io(e.to_string()))?;
        let reader = stream.try_clone().map_err(|e| RuntimeError::Io(e.to_string()))?;
        let mut ext = Self {
            stream,
            rx: spawn_reader(reader),
            controls: sys.controls().clone(),
            deadline: opts.deadline.unwrap_or_else(|| Duration::from_secs_f64(0.9 * sys.eta())),
            fallback: opts.fallback_to_bc,
            sent: 0,
            received: 0,
            lost: false,
            timeouts: 0,
            stale: 0,
        };
        ext.send(&Message::Hello { states: sys.states().to_vec(), inputs: sys.inputs().to_vec(), eta: sys.eta() })?;
        match ext.rx.recv_timeout(opts.handshake_timeout) {
            Ok(Ok(Message::Ready)) => Ok(ext),
            Ok(Ok(m)) => Err(RuntimeError::Protocol(format!("expected ready, got {m:?}"))),
            Ok(Err(e)) => Err(e),
            Err(_) => Err(RuntimeError::Protocol("no ready message before the handshake timeout".into())),
        }
    }

    fn send(&mut self, m: &Message) -> Result<(), RuntimeError> {
        self.stream
            .write_all(m.to_line().as_bytes())
            .map_err(|e| RuntimeError::ConnectionLost(e.to_string()))
    }

    fn lose(&mut self, e: RuntimeError) -> Result<Response, RuntimeError> {
        if self.fallback {
            log::warn!("external controller lost, continuing on the baseline: {e}");
            self.lost = true;
            self.timeouts += 1;
            Ok(Response::Timeout)
        } else {
            Err(e)
        }
    }
}

impl Controller for ExternalController {
    fn act(&mut self, t: f64, x: &[f64]) -> Result<Response, RuntimeError> {
        if self.lost {
            self.timeouts += 1;
            return Ok(Response::Timeout);
        }
        if let Err(e) = self.send(&Message::State { t, x: x.to_vec() }) {
            return self.lose(e);
        }
        self.sent += 1;
        let until = Instant::now() + self.deadline;
        loop {
            let left = until.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(Ok(Message::Action { u })) => {
                    self.received += 1;
                    // answers to states that already timed out
                    if self.received < self.sent {
                        self.stale += 1;
                        continue;
                    }
                    let (u, clamped) = clamp_action(&self.controls, &u)?;
                    return Ok(Response::Action { u, clamped });
                }
                Ok(Ok(m)) => return Err(RuntimeError::Protocol(format!("expected action, got {m:?}"))),
                Ok(Err(e @ RuntimeError::ConnectionLost(_))) => return self.lose(e),
                Ok(Err(e)) => return Err(e),
                Err(RecvTimeoutError::Timeout) => {
                    log::info!("external controller missed the deadline at t = {t}");
                    self.timeouts += 1;
                    return Ok(Response::Timeout);
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return self.lose(RuntimeError::ConnectionLost("reader stopped".into()));
                }
            }
        }
    }
}

impl Drop for ExternalController {
    // the reader thread holds a clone of the socket; shutting down lets it
    // and the peer see end of stream
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Accepts one client on `listener` and runs the loop with it as the new
/// controller and the model's baseline law as the fallback.
pub fn serve(
    listener: &TcpListener,
    sys: &DynSystem,
    art: &SwitchingArtifact,
    x0: &[f64],
    sim: &SimOptions,
    ext: &ExternalOptions,
) -> Result<RunRecord, RuntimeError> {
    let (stream, peer) = listener.accept().map_err(|e| RuntimeError::Io(e.to_string()))?;
    log::info!("external controller connected from {peer}");
    let mut ac = ExternalController::handshake(stream, sys, ext)?;
    let mut bc = super::ControllerSpec::Baseline.build(sys)?;
    simulate_run(sys, art, &mut ac, &mut bc, x0, sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_shapes() {
        let h = Message::Hello { states: vec!["x".into()], inputs: vec!["u".into()], eta: 0.1 };
        assert_eq!(h.to_line(), "{\"type\":\"hello\",\"states\":[\"x\"],\"inputs\":[\"u\"],\"eta\":0.1}\n");
        assert_eq!(Message::Ready.to_line(), "{\"type\":\"ready\"}\n");
        assert_eq!(Message::parse("{\"type\":\"action\",\"u\":[0.5]}").unwrap(), Message::Action { u: vec![0.5] });
        assert_eq!(Message::parse("{\"type\":\"state\",\"t\":0.2,\"x\":[1]}").unwrap(), Message::State { t: 0.2, x: vec![1.0] });
        assert!(Message::parse("{\"type\":\"act\"}").is_err());
        assert!(Message::parse("{\"type\":\"action\"}").is_err());
        assert!(Message::parse("not json").is_err());
    }
}
