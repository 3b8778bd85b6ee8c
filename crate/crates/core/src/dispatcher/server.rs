//! Stream server exposing a [`Dispatcher`] over the wire protocol.
//!
//! Each connection runs on its own thread. All requests funnel through one
//! mutex, so every request is atomic with respect to the tableau, registry,
//! histories and event log, while a slow client only holds the lock for the
//! duration of its own request.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use super::wire::{self, KvMessage, Request, Response, WireError};
use super::{Dispatcher, DispatcherError, LossCause, QuantumService, QubitId, SessionId};

type Shared = Arc<Mutex<Option<Dispatcher>>>;

pub struct DispatcherServer {
    listener: TcpListener,
    state: Shared,
    stop: Arc<AtomicBool>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

impl DispatcherServer {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> std::io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            state: Arc::new(Mutex::new(None)),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves connections until a client sends `shutdown`.
    pub fn run(self) -> std::io::Result<()> {
        for stream in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let state = Arc::clone(&self.state);
            let stop = Arc::clone(&self.stop);
            let addr = self.listener.local_addr()?;
            // connection threads are detached; they end when the peer hangs up
            thread::spawn(move || {
                let asked_stop = serve_connection(stream, &state).unwrap_or(false);
                if asked_stop {
                    stop.store(true, Ordering::SeqCst);
                    let _ = TcpStream::connect(addr);
                }
            });
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> std::io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let join = thread::spawn(move || {
            let _ = self.run();
        });
        Ok(ServerHandle {
            addr,
            stop,
            join: Some(join),
        })
    }
}

/// Returns `Ok(true)` when the client requested a server shutdown.
fn serve_connection(stream: TcpStream, state: &Shared) -> std::io::Result<bool> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(msg) = wire::recv_message(&mut reader)? {
        let (response, stop) = match msg.and_then(|m| Request::from_message(&m)) {
            Ok(req) => {
                let stop = req.method == "shutdown";
                let outcome = {
                    let mut guard = state.lock().unwrap_or_else(|p| p.into_inner());
                    handle(&mut guard, &req)
                };
                let resp = Response {
                    id: req.id,
                    outcome: outcome.map_err(|e| WireError::from(&e)),
                };
                (resp, stop)
            }
            Err(e) => (
                Response {
                    id: 0,
                    outcome: Err(WireError::from(&e)),
                },
                false,
            ),
        };
        wire::send_message(&mut writer, &response.to_message())?;
        if stop {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Executes one request against the shared dispatcher.
pub fn handle(state: &mut Option<Dispatcher>, req: &Request) -> Result<KvMessage, DispatcherError> {
    if req.version != wire::PROTOCOL_VERSION {
        return Err(DispatcherError::BadRequest(format!(
            "unsupported protocol version {}",
            req.version
        )));
    }
    let p = &req.params;
    let mut out = KvMessage::new();
    match req.method.as_str() {
        "configure" => {
            *state = Some(Dispatcher::new(wire::get_config(p)?)?);
            return Ok(out);
        }
        "shutdown" => return Ok(out),
        _ => {}
    }
    let d = state.as_mut().ok_or(DispatcherError::NotConfigured)?;
    let qubit = |k: &str| p.parse(k).map(QubitId);
    match req.method.as_str() {
        "register_client" => {
            let s = d.register_client(p.require("node")?, p.parse("at")?)?;
            out.put("session", s.0);
        }
        "disconnect" => d.disconnect(SessionId(p.parse("session")?))?,
        "create_entangled_pair" => {
            let (a, b) = d.create_entangled_pair(
                SessionId(p.parse("session")?),
                p.require("channel")?,
                p.require("peer")?,
                p.parse("at")?,
            )?;
            wire::put_qubit_ref(&mut out, "first", &a);
            wire::put_qubit_ref(&mut out, "second", &b);
        }
        "apply_local" => d.apply_local(
            SessionId(p.parse("session")?),
            qubit("qubit")?,
            p.parse("op")?,
            p.parse("at")?,
        )?,
        "transmit" => {
            let o = d.transmit(
                SessionId(p.parse("session")?),
                qubit("qubit")?,
                p.require("channel")?,
                p.require("dest")?,
                p.parse("at")?,
            )?;
            out.put("outcome", o.as_str());
        }
        "joint_measure" => {
            let m = d.joint_measure(
                SessionId(p.parse("session")?),
                qubit("a")?,
                qubit("b")?,
                p.parse("at")?,
            )?;
            out.put("b1", m.b1 as u8).put("b0", m.b0 as u8);
        }
        "discard" => d.discard(
            SessionId(p.parse("session")?),
            qubit("qubit")?,
            p.parse::<LossCause>("cause")?,
            p.parse("at")?,
        )?,
        "qubit" => {
            let q = d.qubit(qubit("qubit")?)?;
            wire::put_qubit_ref(&mut out, "qubit", &q);
        }
        "query_history" => {
            let r = d.query_history(
                p.require("channel")?,
                p.parse("depth")?,
                p.parse("diagnostic")?,
            )?;
            wire::put_records(&mut out, &r);
        }
        "poll_events" => {
            let e = d.poll_events(p.parse("since")?, p.parse("diagnostic")?)?;
            wire::put_events(&mut out, &e);
        }
        m => {
            return Err(DispatcherError::BadRequest(format!("unknown method `{m}`")));
        }
    }
    Ok(out)
}
