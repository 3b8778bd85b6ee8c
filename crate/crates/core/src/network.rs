//! The simulated world: classical links and switches, the controller, the
//! quantum switch and the hosts, all driven by one discrete-event scheduler.
//!
//! Quantum state never lives here; every quantum operation goes through the
//! [`QuantumService`] the network was built with.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::classnet::{
    Action, Addr, Command, Controller, FlowEntry, OutPort, Packet, PacketKind, PortNo, SwitchState,
    TraceRecord,
};
use crate::dispatcher::{
    ChannelConfig, Dispatcher, DispatcherConfig, DispatcherError, Event, QuantumService, QubitId,
    TransmitOutcome,
};
use crate::hostnode::app::{Incoming, MessageId, TransferReport};
use crate::hostnode::engine::Transition;
use crate::hostnode::message::Message;
use crate::hostnode::{HostOutput, HostSettings, HostStack, QnicBinding, QubitTag};
use crate::qswitch::{QPort, QSwitch, QSwitchError, Rotation};
use crate::sched::Scheduler;
use crate::Tick;

/// Latency of every controller channel.
pub const CONTROL_LATENCY: Tick = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeRole {
    Host(HostSettings),
    CSwitch { tables: usize, flows: Vec<FlowEntry> },
    QSwitch,
    Controller,
    Dispatcher,
}

impl NodeRole {
    pub fn name(&self) -> &'static str {
        match self {
            NodeRole::Host(_) => "host",
            NodeRole::CSwitch { .. } => "cswitch",
            NodeRole::QSwitch => "qswitch",
            NodeRole::Controller => "controller",
            NodeRole::Dispatcher => "dispatcher",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub name: String,
    pub a: String,
    pub b: String,
    pub latency: Tick,
}

impl LinkSpec {
    pub fn new(a: &str, b: &str, latency: Tick) -> Self {
        Self {
            name: format!("{a}-{b}"),
            a: a.into(),
            b: b.into(),
            latency,
        }
    }
}

/// Fixed rotation a quantum switch applies between two of its channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationSpec {
    pub switch: String,
    pub from: String,
    pub to: String,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub channels: Vec<ChannelConfig>,
    pub rotations: Vec<RotationSpec>,
    pub op_tick: Tick,
}

impl Topology {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.role, NodeRole::Host(_)))
    }

    pub fn dispatcher_config(&self, seed: u64) -> DispatcherConfig {
        DispatcherConfig {
            seed,
            op_tick: self.op_tick,
            channels: self.channels.clone(),
        }
    }

    pub fn host_settings_mut(&mut self, id: &str) -> Option<&mut HostSettings> {
        self.nodes.iter_mut().find_map(|n| match &mut n.role {
            NodeRole::Host(s) if n.id == id => Some(s),
            _ => None,
        })
    }

    pub fn channel_mut(&mut self, id: &str) -> Option<&mut ChannelConfig> {
        self.channels.iter_mut().find(|c| c.id == id)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Quantum(#[from] DispatcherError),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("no quiescence after {0} events")]
    Runaway(u64),
}

#[derive(Debug, Clone)]
enum Ev {
    Arrive {
        link: usize,
        to: String,
        port: PortNo,
        pkt: Packet,
    },
    PacketIn {
        switch: String,
        pkt: Packet,
    },
    Ctl(Command),
    Qubit {
        to: String,
        channel: String,
        qubit: QubitId,
        tag: QubitTag,
    },
    Timer {
        host: String,
        sid: u64,
        gen: u64,
    },
    Poll(String),
}

#[derive(Debug, Clone)]
struct Link {
    name: String,
    ends: [(String, PortNo); 2],
    latency: Tick,
    up: bool,
}

pub struct Network {
    sched: Scheduler<Ev>,
    qs: Box<dyn QuantumService>,
    hosts: BTreeMap<String, HostStack>,
    switches: BTreeMap<String, SwitchState>,
    qswitches: BTreeMap<String, QSwitch>,
    controller: Controller,
    controller_id: String,
    links: Vec<Link>,
    port_link: BTreeMap<(String, PortNo), usize>,
    channel_latency: BTreeMap<String, Tick>,
    trace: Vec<TraceRecord>,
    drop_rules: Vec<(usize, String)>,
    faults: Vec<String>,
    next_packet: u64,
    event_cap: u64,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("now", &self.sched.now())
            .field("hosts", &self.hosts.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

fn topo_err(msg: impl Into<String>) -> NetworkError {
    NetworkError::Topology(msg.into())
}

impl Network {
    /// Builds the world around a fresh in-process dispatcher.
    pub fn in_process(topo: &Topology, seed: u64) -> Result<Self, NetworkError> {
        let d = Dispatcher::new(topo.dispatcher_config(seed))?;
        Self::new(topo, Box::new(d))
    }

    /// Builds the world around an already configured quantum service.
    pub fn new(topo: &Topology, mut qs: Box<dyn QuantumService>) -> Result<Self, NetworkError> {
        let role = |id: &str| topo.node(id).map(|n| &n.role);
        let controller_id = topo
            .nodes
            .iter()
            .find(|n| n.role == NodeRole::Controller)
            .map(|n| n.id.clone())
            .ok_or_else(|| topo_err("no controller"))?;

        let mut next_port: BTreeMap<&str, PortNo> = BTreeMap::new();
        let mut links = Vec::new();
        let mut port_link = BTreeMap::new();
        for (i, l) in topo.links.iter().enumerate() {
            let mut ends = Vec::new();
            for id in [&l.a, &l.b] {
                let port = match role(id) {
                    Some(NodeRole::CSwitch { .. }) => {
                        let p = next_port.entry(id).or_insert(0);
                        *p += 1;
                        *p
                    }
                    Some(NodeRole::Host(_) | NodeRole::QSwitch) => 1,
                    Some(r) => {
                        return Err(topo_err(format!("link `{}` ends at {} `{id}`", l.name, r.name())))
                    }
                    None => return Err(NetworkError::UnknownNode(id.clone())),
                };
                if port_link.insert((id.clone(), port), i).is_some() {
                    return Err(topo_err(format!("`{id}` has more than one classical link")));
                }
                ends.push((id.clone(), port));
            }
            links.push(Link {
                name: l.name.clone(),
                ends: [ends[0].clone(), ends[1].clone()],
                latency: l.latency,
                up: true,
            });
        }

        let mut switches = BTreeMap::new();
        for n in &topo.nodes {
            if let NodeRole::CSwitch { tables, flows } = &n.role {
                let ports = (1..=next_port.get(n.id.as_str()).copied().unwrap_or(0)).collect();
                let mut sw = SwitchState::new(&n.id, (*tables).max(1), ports);
                for e in Controller::boot_flows().into_iter().chain(flows.iter().cloned()) {
                    sw.install(e)
                        .map_err(|e| topo_err(format!("switch `{}`: {e}", n.id)))?;
                }
                switches.insert(n.id.clone(), sw);
            }
        }

        let mut qswitches = BTreeMap::new();
        let mut qports: BTreeMap<String, BTreeMap<Addr, PortNo>> = BTreeMap::new();
        for n in &topo.nodes {
            if n.role != NodeRole::QSwitch {
                continue;
            }
            let mut ports = BTreeMap::new();
            for c in &topo.channels {
                if let Some(peer) = c.peer_of(&n.id) {
                    let p = ports.len() as PortNo + 1;
                    ports.insert(p, QPort { channel: c.id.clone(), peer: peer.into() });
                    qports.entry(n.id.clone()).or_default().insert(peer.into(), p);
                }
            }
            let mut sw = QSwitch::new(&n.id, ports);
            for r in topo.rotations.iter().filter(|r| r.switch == n.id) {
                let (Some(a), Some(b)) = (sw.port_of_channel(&r.from), sw.port_of_channel(&r.to))
                else {
                    return Err(topo_err(format!(
                        "rotation on `{}` names a channel it does not terminate",
                        r.switch
                    )));
                };
                sw.set_rotation(a, b, r.rotation);
            }
            qswitches.insert(n.id.clone(), sw);
        }
        if qswitches.len() > 1 {
            return Err(topo_err("at most one quantum switch is supported"));
        }
        let mut controller = Controller::new();
        if let Some(id) = qswitches.keys().next() {
            controller = controller.with_qswitch(id, qports.get(id).cloned().unwrap_or_default());
        }

        // classical reachability between hosts
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for l in &topo.links {
            adj.entry(&l.a).or_default().push(&l.b);
            adj.entry(&l.b).or_default().push(&l.a);
        }
        let reach = |from: &str| {
            let mut seen = BTreeSet::from([from.to_string()]);
            let mut q = VecDeque::from([from]);
            while let Some(x) = q.pop_front() {
                for &y in adj.get(x).into_iter().flatten() {
                    // traffic is not relayed through hosts
                    let relay = matches!(role(y), Some(NodeRole::CSwitch { .. }));
                    if seen.insert(y.to_string()) && relay {
                        q.push_back(y);
                    }
                }
            }
            seen
        };

        let mut hosts = BTreeMap::new();
        for (index, n) in topo.hosts().enumerate() {
            let NodeRole::Host(settings) = &n.role else {
                unreachable!()
            };
            let mine: Vec<&ChannelConfig> = topo
                .channels
                .iter()
                .filter(|c| c.peer_of(&n.id).is_some())
                .collect();
            if mine.len() > 1 {
                return Err(topo_err(format!("host `{}` has more than one quantum channel", n.id)));
            }
            let qnic = mine.first().map(|c| {
                let peer = c.peer_of(&n.id).expect("filtered").to_string();
                let via = qswitches.contains_key(&peer);
                QnicBinding {
                    channel: c.id.clone(),
                    qports: if via { qports[&peer].clone() } else { BTreeMap::new() },
                    via_qswitch: via,
                    peer,
                }
            });
            let classical = reach(&n.id);
            let reachable = topo
                .hosts()
                .filter(|h| h.id != n.id && classical.contains(&h.id))
                .filter(|h| match &qnic {
                    Some(q) if q.via_qswitch => qports[&q.peer].contains_key(&h.id),
                    Some(q) => q.peer == h.id,
                    None => false,
                })
                .map(|h| h.id.clone())
                .collect();
            let mut host = HostStack::new(&n.id, index as u64 + 1, settings.clone(), qnic, reachable);
            if host.qnic().is_some() {
                host.attach(qs.as_mut(), 0)?;
            }
            hosts.insert(n.id.clone(), host);
        }
        for sw in qswitches.values_mut() {
            sw.attach(qs.as_mut(), 0).map_err(|e| match e {
                QSwitchError::Quantum(e) => NetworkError::Quantum(e),
                e => topo_err(e.to_string()),
            })?;
        }

        Ok(Self {
            sched: Scheduler::new(),
            qs,
            hosts,
            switches,
            qswitches,
            controller,
            controller_id,
            links,
            port_link,
            channel_latency: topo.channels.iter().map(|c| (c.id.clone(), c.latency)).collect(),
            trace: Vec::new(),
            drop_rules: Vec::new(),
            faults: Vec::new(),
            next_packet: 0,
            event_cap: 50_000_000,
        })
    }

    pub fn now(&self) -> Tick {
        self.sched.now()
    }

    pub fn set_event_cap(&mut self, cap: u64) {
        self.event_cap = cap;
    }

    pub fn host(&self, id: &str) -> Option<&HostStack> {
        self.hosts.get(id)
    }

    pub fn host_mut(&mut self, id: &str) -> Option<&mut HostStack> {
        self.hosts.get_mut(id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &HostStack> {
        self.hosts.values()
    }

    pub fn switch(&self, id: &str) -> Option<&SwitchState> {
        self.switches.get(id)
    }

    pub fn qswitch(&self, id: &str) -> Option<&QSwitch> {
        self.qswitches.get(id)
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn service(&mut self) -> &mut dyn QuantumService {
        self.qs.as_mut()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Problems that did not stop the run, such as a refused path setup.
    pub fn faults(&self) -> &[String] {
        &self.faults
    }

    pub fn events(&mut self, diagnostic: bool) -> Result<Vec<Event>, NetworkError> {
        Ok(self.qs.poll_events(0, diagnostic)?)
    }

    pub fn transitions(&self) -> Vec<Transition> {
        let mut all: Vec<Transition> = self
            .hosts
            .values()
            .flat_map(|h| h.transitions().iter().copied())
            .collect();
        all.sort_by_key(|t| t.at);
        all
    }

    /// Queues `body` for delivery from `src` to `dst`.
    pub fn send(&mut self, src: &str, dst: &str, body: &[u8]) -> Result<MessageId, NetworkError> {
        let host = self
            .hosts
            .get_mut(src)
            .ok_or_else(|| NetworkError::UnknownNode(src.into()))?;
        let id = host.app_mut().send(dst, body);
        let now = self.now();
        self.sched.schedule(now, Ev::Poll(src.into()));
        Ok(id)
    }

    /// Emits a bare DATA packet from host `src`, bypassing its stack.
    pub fn inject_packet(&mut self, src: &str, dst: &str, payload: &[u8]) -> Result<u64, NetworkError> {
        if !self.hosts.contains_key(src) {
            return Err(NetworkError::UnknownNode(src.into()));
        }
        self.emit(src, Packet::new(src, dst, PacketKind::Data, payload));
        Ok(self.next_packet)
    }

    pub fn recv(&mut self, host: &str) -> Option<Incoming> {
        self.hosts.get_mut(host)?.app_mut().recv()
    }

    pub fn recv_from(&mut self, host: &str, src: &str) -> Option<Vec<u8>> {
        self.hosts.get_mut(host)?.app_mut().recv_from(src)
    }

    pub fn report(&self, host: &str, id: MessageId) -> Option<&TransferReport> {
        self.hosts.get(host)?.app().report(id)
    }

    fn link_index(&self, name: &str) -> Result<usize, NetworkError> {
        self.links
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| NetworkError::UnknownLink(name.into()))
    }

    pub fn link_names(&self) -> impl Iterator<Item = &str> {
        self.links.iter().map(|l| l.name.as_str())
    }

    pub fn set_link(&mut self, name: &str, up: bool) -> Result<(), NetworkError> {
        let i = self.link_index(name)?;
        self.links[i].up = up;
        Ok(())
    }

    /// Drops the next frame on `link` whose summary starts with `prefix`.
    pub fn drop_next(&mut self, link: &str, prefix: &str) -> Result<(), NetworkError> {
        let i = self.link_index(link)?;
        self.drop_rules.push((i, prefix.into()));
        Ok(())
    }

    pub fn is_idle(&self) -> bool {
        self.sched.is_empty()
    }

    /// Processes one event; `false` when nothing is pending.
    pub fn step(&mut self) -> Result<bool, NetworkError> {
        let Some((_, ev)) = self.sched.pop() else {
            return Ok(false);
        };
        self.handle(ev)?;
        Ok(true)
    }

    pub fn run_until_idle(&mut self) -> Result<(), NetworkError> {
        let mut n = 0;
        while self.step()? {
            n += 1;
            if n > self.event_cap {
                return Err(NetworkError::Runaway(n));
            }
        }
        Ok(())
    }

    pub fn run_for(&mut self, ticks: Tick) -> Result<(), NetworkError> {
        let end = self.now() + ticks;
        while self.sched.peek_time().is_some_and(|t| t <= end) {
            self.step()?;
        }
        self.sched.advance_to(end);
        Ok(())
    }

    /// Human-readable state summary.
    pub fn snapshot(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "snapshot {label} t={}", self.now());
        for h in self.hosts.values() {
            let _ = writeln!(
                s,
                "  host {} inbox={} open_sessions={} transfers={}",
                h.id,
                h.app().inbox_len(),
                h.open_sessions(),
                h.app().reports().count()
            );
        }
        for (id, sw) in &self.switches {
            let _ = writeln!(
                s,
                "  switch {id} flows={} processed={}",
                sw.entries(0).len(),
                sw.processed()
            );
        }
        for (id, q) in &self.qswitches {
            let _ = writeln!(s, "  qswitch {id} paths={}", q.paths().count());
        }
        let _ = writeln!(s, "  controller packet_ins={}", self.controller.packet_ins());
        s
    }

    // ---- internals -------------------------------------------------------

    fn record(&mut self, link: &str, src: &str, dst: &str, kind: &str, summary: String, dropped: bool) {
        self.trace.push(TraceRecord {
            timestamp: self.now(),
            link: link.into(),
            src: src.into(),
            dst: dst.into(),
            kind: kind.into(),
            summary,
            dropped,
        });
    }

    fn emit(&mut self, from: &str, pkt: Packet) {
        let mut pkt = pkt;
        self.next_packet += 1;
        pkt.id = self.next_packet;
        self.send_on(from, 1, pkt);
    }

    fn send_on(&mut self, node: &str, port: PortNo, pkt: Packet) {
        let Some(&i) = self.port_link.get(&(node.to_string(), port)) else {
            return;
        };
        let link = &self.links[i];
        let far = if link.ends[0].0 == node { 1 } else { 0 };
        let (to, to_port) = link.ends[far].clone();
        let (name, latency, up) = (link.name.clone(), link.latency, link.up);
        let summary = pkt.summary();
        let rule = self
            .drop_rules
            .iter()
            .position(|(l, p)| *l == i && summary.starts_with(p.as_str()));
        if !up || rule.is_some() {
            if let Some(r) = rule {
                self.drop_rules.remove(r);
            }
            self.record(&name, &pkt.src, &pkt.dst, pkt.kind.as_str(), summary, true);
            return;
        }
        let at = self.now() + latency;
        self.sched.schedule(
            at,
            Ev::Arrive {
                link: i,
                to,
                port: to_port,
                pkt,
            },
        );
    }

    fn ctl_link(switch: &str) -> String {
        format!("ctl:{switch}")
    }

    fn handle(&mut self, ev: Ev) -> Result<(), NetworkError> {
        match ev {
            Ev::Arrive { link, to, port, mut pkt } => {
                let name = self.links[link].name.clone();
                self.record(&name, &pkt.src, &pkt.dst, pkt.kind.as_str(), pkt.summary(), false);
                pkt.in_port = Some(port);
                if self.switches.contains_key(&to) {
                    self.switch_forward(&to, pkt);
                } else if self.hosts.contains_key(&to) && pkt.dst == to {
                    let now = self.now();
                    let host = self.hosts.get_mut(&to).expect("checked");
                    let out = host.on_packet(now, self.qs.as_mut(), &pkt)?;
                    self.host_outputs(&to, out)?;
                }
            }
            Ev::PacketIn { switch, pkt } => {
                let summary = format!("{} {}", pkt.kind.as_str(), pkt.summary());
                self.record(&Self::ctl_link(&switch), &pkt.src, &pkt.dst, "PACKET_IN", summary, false);
                let now = self.now();
                for cmd in self.controller.handle_packet_in(&switch, &pkt) {
                    self.sched.schedule(now + CONTROL_LATENCY, Ev::Ctl(cmd));
                }
            }
            Ev::Ctl(cmd) => self.control(cmd)?,
            Ev::Qubit { to, channel, qubit, tag } => {
                let now = self.now();
                if let Some(host) = self.hosts.get_mut(&to) {
                    let out = host.on_qubit(now, self.qs.as_mut(), qubit, tag)?;
                    self.host_outputs(&to, out)?;
                } else if let Some(sw) = self.qswitches.get_mut(&to) {
                    let port = sw.port_of_channel(&channel).expect("arrived on own channel");
                    match sw.route(self.qs.as_mut(), qubit, port, now) {
                        Ok(f) => {
                            if f.outcome == TransmitOutcome::Delivered {
                                let at = now + self.channel_latency[&f.channel];
                                self.sched.schedule(
                                    at,
                                    Ev::Qubit { to: f.dest, channel: f.channel, qubit, tag },
                                );
                            }
                        }
                        Err(QSwitchError::NoPath(_)) => {}
                        Err(QSwitchError::Quantum(e)) => return Err(e.into()),
                        Err(e) => self.faults.push(format!("t={now} {to}: {e}")),
                    }
                }
            }
            Ev::Timer { host, sid, gen } => {
                let now = self.now();
                let h = self.hosts.get_mut(&host).expect("timers come from hosts");
                let out = h.on_timer(now, self.qs.as_mut(), sid, gen)?;
                self.host_outputs(&host, out)?;
            }
            Ev::Poll(host) => {
                let now = self.now();
                let h = self.hosts.get_mut(&host).expect("polled hosts exist");
                let out = h.poll(now, self.qs.as_mut())?;
                self.host_outputs(&host, out)?;
            }
        }
        Ok(())
    }

    fn switch_forward(&mut self, id: &str, pkt: Packet) {
        let sw = self.switches.get_mut(id).expect("checked");
        let actions = sw.match_packet(&pkt);
        for a in actions {
            match a {
                Action::ForwardPort(p) if Some(p) != pkt.in_port => self.send_on(id, p, pkt.clone()),
                Action::SendToController => {
                    let at = self.now() + CONTROL_LATENCY;
                    self.sched.schedule(
                        at,
                        Ev::PacketIn {
                            switch: id.into(),
                            pkt: pkt.clone(),
                        },
                    );
                }
                _ => {}
            }
        }
    }

    fn control(&mut self, cmd: Command) -> Result<(), NetworkError> {
        let ctl = self.controller_id.clone();
        match cmd {
            Command::InstallFlow { switch, entry } => {
                self.record(&Self::ctl_link(&switch), &ctl, &switch, "FLOW_MOD", entry.to_string(), false);
                if let Some(sw) = self.switches.get_mut(&switch) {
                    if let Err(e) = sw.install(entry) {
                        let now = self.now();
                        self.faults.push(format!("t={now} {switch}: {e}"));
                    }
                }
            }
            Command::PacketOut { switch, packet, out } => {
                let summary = format!("{} {}", packet.kind.as_str(), packet.summary());
                self.record(&Self::ctl_link(&switch), &packet.src, &packet.dst, "PACKET_OUT", summary, false);
                let ports: Vec<PortNo> = match out {
                    OutPort::Port(p) => vec![p],
                    OutPort::Flood => self
                        .switches
                        .get(&switch)
                        .map(|s| s.ports().to_vec())
                        .unwrap_or_default()
                        .into_iter()
                        .filter(|&p| Some(p) != packet.in_port)
                        .collect(),
                };
                for p in ports {
                    self.send_on(&switch, p, packet.clone());
                }
            }
            Command::QSwitchPathSetup(setup) => {
                let summary = format!(
                    "sid={} in={} out={} pairs={} scheme={}",
                    setup.session_id, setup.in_qport, setup.out_qport, setup.pair_count,
                    setup.encoding_scheme
                );
                let id = setup.qswitch.clone();
                self.record(&Self::ctl_link(&id), &ctl, &id, "PATH_SETUP", summary, false);
                let Some(sw) = self.qswitches.get_mut(&id) else {
                    return Ok(());
                };
                match sw.configure_path(&setup) {
                    Ok(notice) => {
                        let msg = Message::Rotation {
                            sid: notice.session_id,
                            rotation: notice.rotation,
                        };
                        let pkt = msg.to_packet(&id, &notice.to, self.now(), (None, None));
                        self.emit(&id, pkt);
                    }
                    Err(e) => {
                        let now = self.now();
                        self.faults.push(format!("t={now} {id}: {e}"));
                    }
                }
            }
            Command::QSwitchTeardown { qswitch, session_id } => {
                self.record(
                    &Self::ctl_link(&qswitch),
                    &ctl,
                    &qswitch,
                    "TEARDOWN",
                    format!("sid={session_id}"),
                    false,
                );
                if let Some(sw) = self.qswitches.get_mut(&qswitch) {
                    let _ = sw.teardown(session_id);
                }
            }
        }
        Ok(())
    }

    fn host_outputs(&mut self, host: &str, out: Vec<HostOutput>) -> Result<(), NetworkError> {
        let now = self.now();
        for o in out {
            match o {
                HostOutput::Packet(p) => self.emit(host, p),
                HostOutput::Timer { sid, gen, at } => self.sched.schedule(
                    at,
                    Ev::Timer {
                        host: host.into(),
                        sid,
                        gen,
                    },
                ),
                HostOutput::Qubit { qubit, tag, channel, dest } => {
                    let session = self.hosts[host].session().expect("hosts emitting qubits are attached");
                    let outcome = self.qs.transmit(session, qubit, &channel, &dest, now)?;
                    if outcome == TransmitOutcome::Delivered {
                        let at = now + self.channel_latency[&channel];
                        self.sched.schedule(at, Ev::Qubit { to: dest, channel, qubit, tag });
                    }
                }
            }
        }
        Ok(())
    }
}
