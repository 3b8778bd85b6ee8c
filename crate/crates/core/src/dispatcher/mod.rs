//! The dispatcher: sole owner of the global quantum state.
//!
//! Every host and switch reaches quantum hardware through a session on the
//! dispatcher. It keeps the qubit ownership registry, runs all state changes
//! through the circuit interpreter on one shared tableau, samples channel
//! noise from per-channel histories, and appends every action to a
//! globally ordered event log.
//!
//! [`QuantumService`] is the client-facing contract. [`Dispatcher`]
//! implements it in-process; [`client::RemoteDispatcher`] implements it over
//! the wire protocol in [`wire`] against a [`server::DispatcherServer`].

pub mod client;
pub mod server;
pub mod wire;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::circuit::{self, Circuit};
use crate::noise::{self, ChannelError, MemoryModel, NoiseModel, PauliChannelParams};
use crate::rng::{component_rng, SimRng};
use crate::stabilizer::{BellOutcome, GateOp, Qubit, QubitPool};
use crate::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatcherError {
    #[error("node `{0}` already has a live session")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("unknown qubit {0}")]
    UnknownQubit(u64),
    #[error("{0}")]
    NotOwner(String),
    #[error("qubit {0} is no longer alive")]
    DeadQubit(u64),
    #[error("requested history depth {requested} exceeds channel depth {depth}")]
    DepthExceeded { requested: usize, depth: usize },
    #[error("{0}")]
    BadRequest(String),
    #[error("dispatcher not configured")]
    NotConfigured,
    #[error("transport: {0}")]
    Transport(String),
    #[error("simulation: {0}")]
    Simulation(String),
}

impl DispatcherError {
    pub fn code(&self) -> &'static str {
        match self {
            DispatcherError::DuplicateNode(_) => "DuplicateNode",
            DispatcherError::UnknownNode(_) => "UnknownNode",
            DispatcherError::UnknownSession(_) => "UnknownSession",
            DispatcherError::UnknownChannel(_) => "UnknownChannel",
            DispatcherError::UnknownQubit(_) => "UnknownQubit",
            DispatcherError::NotOwner(_) => "NotOwner",
            DispatcherError::DeadQubit(_) => "DeadQubit",
            DispatcherError::DepthExceeded { .. } => "DepthExceeded",
            DispatcherError::BadRequest(_) => "BadRequest",
            DispatcherError::NotConfigured => "NotConfigured",
            DispatcherError::Transport(_) => "Transport",
            DispatcherError::Simulation(_) => "Simulation",
        }
    }
}

pub type Result<T, E = DispatcherError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitId(pub u64);

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitRef {
    pub id: QubitId,
    pub owner: String,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalOp {
    I,
    X,
    Y,
    Z,
    H,
    S,
}

impl LocalOp {
    fn gate(self, q: Qubit) -> Option<GateOp> {
        match self {
            LocalOp::I => None,
            LocalOp::X => Some(GateOp::X(q)),
            LocalOp::Y => Some(GateOp::Y(q)),
            LocalOp::Z => Some(GateOp::Z(q)),
            LocalOp::H => Some(GateOp::H(q)),
            LocalOp::S => Some(GateOp::S(q)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LocalOp::I => "I",
            LocalOp::X => "X",
            LocalOp::Y => "Y",
            LocalOp::Z => "Z",
            LocalOp::H => "H",
            LocalOp::S => "S",
        }
    }
}

impl FromStr for LocalOp {
    type Err = DispatcherError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "I" => LocalOp::I,
            "X" => LocalOp::X,
            "Y" => LocalOp::Y,
            "Z" => LocalOp::Z,
            "H" => LocalOp::H,
            "S" => LocalOp::S,
            _ => return Err(DispatcherError::BadRequest(format!("unknown local op `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransmitOutcome {
    Delivered,
    Lost,
}

impl TransmitOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            TransmitOutcome::Delivered => "DELIVERED",
            TransmitOutcome::Lost => "LOST",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossCause {
    Channel,
    NoPath,
    Discarded,
}

impl LossCause {
    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::Channel => "channel",
            LossCause::NoPath => "no-path",
            LossCause::Discarded => "discarded",
        }
    }
}

impl FromStr for LossCause {
    type Err = DispatcherError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "channel" => LossCause::Channel,
            "no-path" => LossCause::NoPath,
            "discarded" => LossCause::Discarded,
            _ => return Err(DispatcherError::BadRequest(format!("unknown loss cause `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub timestamp: Tick,
    pub qubit: QubitId,
    /// `None` when redacted.
    pub applied_error: Option<ChannelError>,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub id: String,
    pub a: String,
    pub b: String,
    pub base_noise: PauliChannelParams,
    pub memory: MemoryModel,
    pub depth: usize,
    pub latency: Tick,
}

impl ChannelConfig {
    pub fn noiseless(id: &str, a: &str, b: &str) -> Self {
        Self {
            id: id.into(),
            a: a.into(),
            b: b.into(),
            base_noise: PauliChannelParams::NOISELESS,
            memory: MemoryModel::MEMORYLESS,
            depth: 16,
            latency: 1,
        }
    }

    pub fn with_noise(mut self, noise: PauliChannelParams) -> Self {
        self.base_noise = noise;
        self
    }

    pub fn peer_of(&self, node: &str) -> Option<&str> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatcherConfig {
    pub seed: u64,
    /// Clock advance after every mutating request.
    pub op_tick: Tick,
    pub channels: Vec<ChannelConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    PairCreated,
    OpApplied,
    Transmit,
    ErrorApplied,
    Measured,
    Loss,
    ClientConnect,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::PairCreated,
        EventKind::OpApplied,
        EventKind::Transmit,
        EventKind::ErrorApplied,
        EventKind::Measured,
        EventKind::Loss,
        EventKind::ClientConnect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PairCreated => "PAIR_CREATED",
            EventKind::OpApplied => "OP_APPLIED",
            EventKind::Transmit => "TRANSMIT",
            EventKind::ErrorApplied => "ERROR_APPLIED",
            EventKind::Measured => "MEASURED",
            EventKind::Loss => "LOSS",
            EventKind::ClientConnect => "CLIENT_CONNECT",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// One entry of the dispatcher log.
///
/// Rendered one per line as `seq timestamp source KIND key=value...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub timestamp: Tick,
    pub source: String,
    pub kind: EventKind,
    pub payload: Vec<(String, String)>,
}

impl Event {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.payload
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn redacted(&self) -> Event {
        let mut e = self.clone();
        if e.kind == EventKind::ErrorApplied {
            for (k, v) in e.payload.iter_mut() {
                if k == "error" {
                    *v = "hidden".into();
                }
            }
        }
        e
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.seq,
            self.timestamp,
            self.source,
            self.kind.as_str()
        )?;
        for (k, v) in &self.payload {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Event {
    type Err = String;
    fn from_str(line: &str) -> Result<Self, String> {
        let mut it = line.split_whitespace();
        let mut field = |name: &str| it.next().ok_or_else(|| format!("missing {name}"));
        let seq = field("seq")?.parse().map_err(|_| "bad seq".to_string())?;
        let timestamp = field("timestamp")?
            .parse()
            .map_err(|_| "bad timestamp".to_string())?;
        let source = field("source")?.to_string();
        let kind = field("kind")?.parse()?;
        let payload = it
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format!("bad payload field `{kv}`"))
            })
            .collect::<Result<_, _>>()?;
        Ok(Event {
            seq,
            timestamp,
            source,
            kind,
            payload,
        })
    }
}

/// Client-facing contract shared by the in-process and remote dispatchers.
///
/// `at` is the caller's simulated time; the dispatcher clock never runs
/// backwards, so an event is stamped with the later of `at` and its clock.
pub trait QuantumService {
    fn register_client(&mut self, node: &str, at: Tick) -> Result<SessionId>;
    fn disconnect(&mut self, session: SessionId) -> Result<()>;
    /// Allocates a fresh `Φ+` pair; both halves start owned by the caller.
    fn create_entangled_pair(
        &mut self,
        session: SessionId,
        channel: &str,
        peer: &str,
        at: Tick,
    ) -> Result<(QubitRef, QubitRef)>;
    fn apply_local(&mut self, session: SessionId, qubit: QubitId, op: LocalOp, at: Tick)
        -> Result<()>;
    fn transmit(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        channel: &str,
        dest: &str,
        at: Tick,
    ) -> Result<TransmitOutcome>;
    /// Bell-basis measurement of `(a, b)`; both qubits are released.
    fn joint_measure(
        &mut self,
        session: SessionId,
        a: QubitId,
        b: QubitId,
        at: Tick,
    ) -> Result<BellOutcome>;
    /// Destroys a qubit without reporting any measurement to the caller.
    fn discard(&mut self, session: SessionId, qubit: QubitId, cause: LossCause, at: Tick)
        -> Result<()>;
    fn qubit(&mut self, qubit: QubitId) -> Result<QubitRef>;
    fn query_history(
        &mut self,
        channel: &str,
        depth: usize,
        diagnostic: bool,
    ) -> Result<Vec<ChannelRecord>>;
    fn poll_events(&mut self, since_seq: u64, diagnostic: bool) -> Result<Vec<Event>>;
}

struct Channel {
    config: ChannelConfig,
    model: Box<dyn NoiseModel>,
    history: VecDeque<ChannelRecord>,
    rng: SimRng,
}

#[derive(Debug, Clone)]
struct QubitEntry {
    slot: Qubit,
    owner: String,
    alive: bool,
}

/// In-process dispatcher.
pub struct Dispatcher {
    config: DispatcherConfig,
    pool: QubitPool,
    rng: SimRng,
    channels: BTreeMap<String, Channel>,
    sessions: HashMap<SessionId, String>,
    live_nodes: HashMap<String, SessionId>,
    qubits: HashMap<QubitId, QubitEntry>,
    events: Vec<Event>,
    clock: Tick,
    next_session: u64,
    next_qubit: u64,
    circuit_log: Option<Vec<String>>,
}

impl fmt::Debug for Dispatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dispatcher")
            .field("clock", &self.clock)
            .field("live_qubits", &self.pool.live())
            .field("events", &self.events.len())
            .finish()
    }
}

/// Stream name of the dispatcher's measurement randomness.
pub const MEASURE_STREAM: &str = "dispatcher/measure";

pub fn channel_stream(id: &str) -> String {
    format!("dispatcher/channel/{id}")
}

impl Dispatcher {
    pub fn new(config: DispatcherConfig) -> Result<Self> {
        let mut channels = BTreeMap::new();
        for c in &config.channels {
            c.base_noise
                .validate()
                .and_then(|_| c.memory.validate())
                .map_err(|e| DispatcherError::BadRequest(format!("channel `{}`: {e}", c.id)))?;
            if c.depth == 0 {
                return Err(DispatcherError::BadRequest(format!(
                    "channel `{}`: history depth must be >= 1",
                    c.id
                )));
            }
            let chan = Channel {
                config: c.clone(),
                model: Box::new(c.memory),
                history: VecDeque::with_capacity(c.depth),
                rng: component_rng(config.seed, &channel_stream(&c.id)),
            };
            if channels.insert(c.id.clone(), chan).is_some() {
                return Err(DispatcherError::BadRequest(format!("duplicate channel `{}`", c.id)));
            }
        }
        Ok(Self {
            rng: component_rng(config.seed, MEASURE_STREAM),
            config,
            pool: QubitPool::new(),
            channels,
            sessions: HashMap::new(),
            live_nodes: HashMap::new(),
            qubits: HashMap::new(),
            events: Vec::new(),
            clock: 0,
            next_session: 1,
            next_qubit: 1,
            circuit_log: None,
        })
    }

    /// Replaces the noise strategy of one channel.
    pub fn set_noise_model(&mut self, channel: &str, model: Box<dyn NoiseModel>) -> Result<()> {
        let c = self
            .channels
            .get_mut(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        c.model = model;
        Ok(())
    }

    pub fn config(&self) -> &DispatcherConfig {
        &self.config
    }

    pub fn now(&self) -> Tick {
        self.clock
    }

    pub fn live_qubits(&self) -> usize {
        self.pool.live()
    }

    pub fn pool(&self) -> &QubitPool {
        &self.pool
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Keeps the rendered text of every generated circuit.
    pub fn enable_circuit_log(&mut self) {
        self.circuit_log.get_or_insert_with(Vec::new);
    }

    pub fn circuit_log(&self) -> &[String] {
        self.circuit_log.as_deref().unwrap_or(&[])
    }

    /// Test hook: appends a record to a channel history as if a transmission
    /// happened at `timestamp`.
    pub fn inject_history(&mut self, channel: &str, record: ChannelRecord) -> Result<()> {
        let c = self
            .channels
            .get_mut(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        push_bounded(&mut c.history, c.config.depth, record);
        Ok(())
    }

    /// Parameters the next transmission on `channel` would be sampled from.
    pub fn effective_params(&self, channel: &str, now: Tick) -> Result<PauliChannelParams> {
        let c = self
            .channels
            .get(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        Ok(c.model.effective_params(
            &c.config.base_noise,
            &mut c.history.iter().map(|r| r.timestamp),
            now,
        ))
    }

    fn stamp(&mut self, at: Tick) -> Tick {
        self.clock = self.clock.max(at);
        self.clock
    }

    fn tick(&mut self) {
        self.clock += self.config.op_tick;
    }

    fn log(&mut self, timestamp: Tick, source: &str, kind: EventKind, payload: &[(&str, String)]) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event {
            seq,
            timestamp,
            source: source.to_string(),
            kind,
            payload: payload
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        });
    }

    fn node_of(&self, session: SessionId) -> Result<String> {
        self.sessions
            .get(&session)
            .cloned()
            .ok_or(DispatcherError::UnknownSession(session.0))
    }

    fn owned(&self, node: &str, qubit: QubitId) -> Result<Qubit> {
        let e = self
            .qubits
            .get(&qubit)
            .ok_or(DispatcherError::UnknownQubit(qubit.0))?;
        if !e.alive {
            return Err(DispatcherError::DeadQubit(qubit.0));
        }
        if e.owner != node {
            return Err(DispatcherError::NotOwner(format!(
                "qubit {} is owned by `{}`, not `{node}`",
                qubit.0, e.owner
            )));
        }
        Ok(e.slot)
    }

    fn run(&mut self, circuit: &Circuit) -> Result<Vec<circuit::LabeledRecord>> {
        if let Some(log) = self.circuit_log.as_mut() {
            log.push(circuit.render());
        }
        circuit::execute(circuit, self.pool.tableau_mut(), &mut self.rng)
            .map_err(|e| DispatcherError::Simulation(e.to_string()))
    }

    fn program(&self, ops: impl IntoIterator<Item = GateOp>) -> Circuit {
        let mut c = Circuit::new(self.pool.tableau().num_qubits());
        for op in ops {
            c.push(op);
        }
        c
    }

    fn release(&mut self, qubit: QubitId) -> Result<()> {
        let e = self
            .qubits
            .get_mut(&qubit)
            .ok_or(DispatcherError::UnknownQubit(qubit.0))?;
        e.alive = false;
        let slot = e.slot;
        self.pool
            .release(slot, &mut self.rng)
            .map_err(|e| DispatcherError::Simulation(e.to_string()))
    }

    fn new_qubit(&mut self, owner: &str) -> (QubitId, Qubit) {
        let id = QubitId(self.next_qubit);
        self.next_qubit += 1;
        let slot = self.pool.allocate();
        self.qubits.insert(
            id,
            QubitEntry {
                slot,
                owner: owner.to_string(),
                alive: true,
            },
        );
        (id, slot)
    }

    fn qubit_ref(&self, id: QubitId) -> Result<QubitRef> {
        let e = self.qubits.get(&id).ok_or(DispatcherError::UnknownQubit(id.0))?;
        Ok(QubitRef {
            id,
            owner: e.owner.clone(),
            alive: e.alive,
        })
    }
}

fn push_bounded(history: &mut VecDeque<ChannelRecord>, depth: usize, record: ChannelRecord) {
    history.push_back(record);
    while history.len() > depth {
        history.pop_front();
    }
}

impl QuantumService for Dispatcher {
    fn register_client(&mut self, node: &str, at: Tick) -> Result<SessionId> {
        if node.is_empty() || node.contains(char::is_whitespace) {
            return Err(DispatcherError::BadRequest(format!("invalid node id `{node}`")));
        }
        if self.live_nodes.contains_key(node) {
            return Err(DispatcherError::DuplicateNode(node.into()));
        }
        let id = SessionId(self.next_session);
        self.next_session += 1;
        self.sessions.insert(id, node.to_string());
        self.live_nodes.insert(node.to_string(), id);
        let ts = self.stamp(at);
        self.log(
            ts,
            node,
            EventKind::ClientConnect,
            &[("node", node.into()), ("session", id.0.to_string())],
        );
        self.tick();
        Ok(id)
    }

    fn disconnect(&mut self, session: SessionId) -> Result<()> {
        let node = self
            .sessions
            .remove(&session)
            .ok_or(DispatcherError::UnknownSession(session.0))?;
        self.live_nodes.remove(&node);
        Ok(())
    }

    fn create_entangled_pair(
        &mut self,
        session: SessionId,
        channel: &str,
        peer: &str,
        at: Tick,
    ) -> Result<(QubitRef, QubitRef)> {
        let node = self.node_of(session)?;
        if !self.live_nodes.contains_key(peer) {
            return Err(DispatcherError::UnknownNode(peer.into()));
        }
        let chan = self
            .channels
            .get(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        if chan.config.peer_of(&node).is_none() {
            return Err(DispatcherError::BadRequest(format!(
                "channel `{channel}` does not touch `{node}`"
            )));
        }
        let (a, sa) = self.new_qubit(&node);
        let (b, sb) = self.new_qubit(&node);
        let prep = self.program([GateOp::H(sa), GateOp::Cnot(sa, sb)]);
        self.run(&prep)?;
        let ts = self.stamp(at);
        self.log(
            ts,
            &node,
            EventKind::PairCreated,
            &[
                ("qubits", format!("{a},{b}")),
                ("owner", node.clone()),
                ("channel", channel.into()),
                ("peer", peer.into()),
            ],
        );
        self.tick();
        Ok((self.qubit_ref(a)?, self.qubit_ref(b)?))
    }

    fn apply_local(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        op: LocalOp,
        at: Tick,
    ) -> Result<()> {
        let node = self.node_of(session)?;
        let slot = self.owned(&node, qubit)?;
        if let Some(g) = op.gate(slot) {
            let c = self.program([g]);
            self.run(&c)?;
        }
        let ts = self.stamp(at);
        self.log(
            ts,
            &node,
            EventKind::OpApplied,
            &[("qubit", qubit.to_string()), ("op", op.as_str().into())],
        );
        self.tick();
        Ok(())
    }

    fn transmit(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        channel: &str,
        dest: &str,
        at: Tick,
    ) -> Result<TransmitOutcome> {
        let node = self.node_of(session)?;
        let slot = self.owned(&node, qubit)?;
        let chan = self
            .channels
            .get(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        if chan.config.peer_of(&node) != Some(dest) {
            return Err(DispatcherError::BadRequest(format!(
                "channel `{channel}` does not connect `{node}` to `{dest}`"
            )));
        }
        let ts = self.stamp(at);
        let chan = self.channels.get_mut(channel).expect("checked above");
        let params = chan.model.effective_params(
            &chan.config.base_noise,
            &mut chan.history.iter().map(|r| r.timestamp),
            ts,
        );
        let error = noise::sample_error(&params, &mut chan.rng)
            .map_err(|e| DispatcherError::Simulation(e.to_string()))?;
        let latency = chan.config.latency;
        let depth = chan.config.depth;
        push_bounded(
            &mut chan.history,
            depth,
            ChannelRecord {
                timestamp: ts,
                qubit,
                applied_error: Some(error),
                from: node.clone(),
                to: dest.into(),
            },
        );
        let outcome = if error == ChannelError::Loss {
            TransmitOutcome::Lost
        } else {
            TransmitOutcome::Delivered
        };
        self.log(
            ts,
            &node,
            EventKind::Transmit,
            &[
                ("qubit", qubit.to_string()),
                ("channel", channel.into()),
                ("to", dest.into()),
                ("arrive", (ts + latency).to_string()),
            ],
        );
        match error {
            ChannelError::None => {}
            ChannelError::Loss => {
                self.release(qubit)?;
                self.log(
                    ts,
                    channel,
                    EventKind::Loss,
                    &[
                        ("qubit", qubit.to_string()),
                        ("cause", LossCause::Channel.as_str().into()),
                    ],
                );
            }
            pauli => {
                let g = pauli.gate(slot).expect("pauli error");
                let c = self.program([g]);
                self.run(&c)?;
                self.log(
                    ts,
                    channel,
                    EventKind::ErrorApplied,
                    &[("qubit", qubit.to_string()), ("error", pauli.as_str().into())],
                );
            }
        }
        if outcome == TransmitOutcome::Delivered {
            self.qubits.get_mut(&qubit).expect("owned").owner = dest.to_string();
        }
        self.tick();
        Ok(outcome)
    }

    fn joint_measure(
        &mut self,
        session: SessionId,
        a: QubitId,
        b: QubitId,
        at: Tick,
    ) -> Result<BellOutcome> {
        let node = self.node_of(session)?;
        let sa = self.owned(&node, a)?;
        let sb = self.owned(&node, b)?;
        if sa == sb {
            return Err(DispatcherError::BadRequest("joint measurement of one qubit".into()));
        }
        let mut c = self.program([GateOp::Cnot(sa, sb), GateOp::H(sa)]);
        c.push_measure(sa, "b1").push_measure(sb, "b0");
        let records = self.run(&c)?;
        let outcome = BellOutcome {
            b1: records[0].record.outcome,
            b0: records[1].record.outcome,
        };
        self.release(a)?;
        self.release(b)?;
        let ts = self.stamp(at);
        self.log(
            ts,
            &node,
            EventKind::Measured,
            &[
                ("qubits", format!("{a},{b}")),
                ("b1", (outcome.b1 as u8).to_string()),
                ("b0", (outcome.b0 as u8).to_string()),
            ],
        );
        self.tick();
        Ok(outcome)
    }

    fn discard(
        &mut self,
        session: SessionId,
        qubit: QubitId,
        cause: LossCause,
        at: Tick,
    ) -> Result<()> {
        let node = self.node_of(session)?;
        self.owned(&node, qubit)?;
        self.release(qubit)?;
        let ts = self.stamp(at);
        self.log(
            ts,
            &node,
            EventKind::Loss,
            &[("qubit", qubit.to_string()), ("cause", cause.as_str().into())],
        );
        self.tick();
        Ok(())
    }

    fn qubit(&mut self, qubit: QubitId) -> Result<QubitRef> {
        self.qubit_ref(qubit)
    }

    fn query_history(
        &mut self,
        channel: &str,
        depth: usize,
        diagnostic: bool,
    ) -> Result<Vec<ChannelRecord>> {
        let c = self
            .channels
            .get(channel)
            .ok_or_else(|| DispatcherError::UnknownChannel(channel.into()))?;
        if depth > c.config.depth {
            return Err(DispatcherError::DepthExceeded {
                requested: depth,
                depth: c.config.depth,
            });
        }
        let skip = c.history.len().saturating_sub(depth);
        Ok(c.history
            .iter()
            .skip(skip)
            .cloned()
            .map(|mut r| {
                if !diagnostic {
                    r.applied_error = None;
                }
                r
            })
            .collect())
    }

    fn poll_events(&mut self, since_seq: u64, diagnostic: bool) -> Result<Vec<Event>> {
        let start = (since_seq as usize).min(self.events.len());
        Ok(self.events[start..]
            .iter()
            .map(|e| if diagnostic { e.clone() } else { e.redacted() })
            .collect())
    }
}
