//! [`QuantumService`] over a TCP connection to a dispatcher server.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use super::wire::{self, KvMessage, Request, Response};
use super::{
    ChannelRecord, DispatcherConfig, DispatcherError, Event, LocalOp, LossCause, QuantumService,
    QubitId, QubitRef, Result, SessionId, TransmitOutcome,
};
use crate::stabilizer::BellOutcome;
use crate::Tick;

pub struct RemoteDispatcher {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
}

fn transport(e: std::io::Error) -> DispatcherError {
    DispatcherError::Transport(e.to_string())
}

impl RemoteDispatcher {
    /// Connects without touching the server state.
    pub fn attach<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone().map_err(transport)?),
            writer: BufWriter::new(stream),
            next_id: 1,
        })
    }

    /// Connects and (re)initialises the server with `config`, so a run
    /// against the server reproduces the in-process run for the same seed.
    pub fn connect<A: ToSocketAddrs>(addr: A, config: &DispatcherConfig) -> Result<Self> {
        let mut c = Self::attach(addr)?;
        c.configure(config)?;
        Ok(c)
    }

    pub fn configure(&mut self, config: &DispatcherConfig) -> Result<()> {
        let mut p = KvMessage::new();
        wire::put_config(&mut p, config);
        self.call("configure", p).map(drop)
    }

    /// Asks the server process to stop accepting connections.
    pub fn shutdown_server(mut self) -> Result<()> {
        self.call("shutdown", KvMessage::new()).map(drop)
    }

    fn call(&mut self, method: &str, params: KvMessage) -> Result<KvMessage> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request::new(id, method, params);
        wire::send_message(&mut self.writer, &req.to_message()).map_err(transport)?;
        let msg = wire::recv_message(&mut self.reader)
            .map_err(transport)?
            .ok_or_else(|| DispatcherError::Transport("connection closed".into()))??;
        let resp = Response::from_message(&msg)?;
        if resp.id != id {
            return Err(DispatcherError::Transport(format!(
                "response id {} does not match request {id}",
                resp.id
            )));
        }
        resp.outcome.map_err(|e| e.into_error())
    }
}

impl QuantumService for RemoteDispatcher {
    fn register_client(&mut self, node: &str, at: Tick) -> Result<SessionId> {
        let mut p = KvMessage::new();
        p.put("node", node).put("at", at);
        Ok(SessionId(self.call("register_client", p)?.parse("session")?))
    }

    fn disconnect(&mut self, session: SessionId) -> Result<()> {
        let mut p = KvMessage::new();
        p.put("session", session.0);
        self.call("disconnect", p).map(drop)
    }

    fn create_entangled_pair(
        &mut self,
        session: SessionId,
        channel: &str,
        peer: &str,
        at: Tick,
    ) -> Result<(QubitRef, QubitRef)> {
        let mut p = KvMessage::new();
        p.put("session", session.0)
            .put("channel", channel)
            .put("peer", peer)
            .put("at", at);
        let r = self.call("create_entangled_pair", p)?;
        Ok((wire::get_qubit_ref(&r, "first")?, wire::get_qubit_ref(&r, "second")?))
    }

    fn apply_local(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        op: LocalOp,
        at: Tick,
    ) -> Result<()> {
        let mut p = KvMessage::new();
        p.put("session", session.0)
            .put("qubit", qubit.0)
            .put("op", op.as_str())
            .put("at", at);
        self.call("apply_local", p).map(drop)
    }

    fn transmit(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        channel: &str,
        dest: &str,
        at: Tick,
    ) -> Result<TransmitOutcome> {
        let mut p = KvMessage::new();
        p.put("session", session.0)
            .put("qubit", qubit.0)
            .put("channel", channel)
            .put("dest", dest)
            .put("at", at);
        match self.call("transmit", p)?.require("outcome")? {
            "DELIVERED" => Ok(TransmitOutcome::Delivered),
            "LOST" => Ok(TransmitOutcome::Lost),
            o => Err(DispatcherError::Transport(format!("bad transmit outcome `{o}`"))),
        }
    }

    fn joint_measure(
        &mut self,
        session: SessionId,
        a: QubitId,
        b: QubitId,
        at: Tick,
    ) -> Result<BellOutcome> {
        let mut p = KvMessage::new();
        p.put("session", session.0)
            .put("a", a.0)
            .put("b", b.0)
            .put("at", at);
        let r = self.call("joint_measure", p)?;
        Ok(BellOutcome {
            b1: r.parse::<u8>("b1")? == 1,
            b0: r.parse::<u8>("b0")? == 1,
        })
    }

    fn discard(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        cause: LossCause,
        at: Tick,
    ) -> Result<()> {
        let mut p = KvMessage::new();
        p.put("session", session.0)
            .put("qubit", qubit.0)
            .put("cause", cause.as_str())
            .put("at", at);
        self.call("discard", p).map(drop)
    }

    fn qubit(&mut self, qubit: QubitId) -> Result<QubitRef> {
        let mut p = KvMessage::new();
        p.put("qubit", qubit.0);
        wire::get_qubit_ref(&self.call("qubit", p)?, "qubit")
    }

    fn query_history(
        &mut self,
        channel: &str,
        depth: usize,
        diagnostic: bool,
    ) -> Result<Vec<ChannelRecord>> {
        let mut p = KvMessage::new();
        p.put("channel", channel)
            .put("depth", depth)
            .put("diagnostic", diagnostic);
        wire::get_records(&self.call("query_history", p)?)
    }

    fn poll_events(&mut self, since_seq: u64, diagnostic: bool) -> Result<Vec<Event>> {
        let mut p = KvMessage::new();
        p.put("since", since_seq).put("diagnostic", diagnostic);
        wire::get_events(&self.call("poll_events", p)?)
    }
}
