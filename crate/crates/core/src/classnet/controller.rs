//! Learning controller with quantum-metadata relay.

use std::collections::{BTreeMap, BTreeSet};

use super::flow::{Action, FlowEntry, FlowMatch};
use super::{Addr, Packet, PacketKind, PortNo, QPhase};
use crate::Tick;

pub const LEARNED_PRIORITY: u16 = 10;
pub const METADATA_PRIORITY: u16 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutPort {
    Port(PortNo),
    /// Every port except the ingress one.
    Flood,
}

/// Path request relayed to a quantum switch's middleware. The field set is
/// this crate's own; it does not follow any OpenFlow optical extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSetup {
    pub qswitch: String,
    pub session_id: u64,
    pub in_qport: PortNo,
    pub out_qport: PortNo,
    /// Host that receives the rotation notice.
    pub notify: Addr,
    pub pair_count: u32,
    pub encoding_scheme: u32,
    pub timestamp: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    InstallFlow {
        switch: String,
        entry: FlowEntry,
    },
    PacketOut {
        switch: String,
        packet: Packet,
        out: OutPort,
    },
    QSwitchPathSetup(PathSetup),
    QSwitchTeardown {
        qswitch: String,
        session_id: u64,
    },
}

#[derive(Debug, Clone, Default)]
pub struct Controller {
    mac: BTreeMap<String, BTreeMap<Addr, PortNo>>,
    qswitch: Option<String>,
    qports: BTreeMap<Addr, PortNo>,
    seen_qmeta: BTreeSet<u64>,
    /// Session currently holding each ingress quantum port.
    active: BTreeMap<PortNo, u64>,
    packet_ins: u64,
}

impl Controller {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attaches the quantum switch and the qport each host reaches it on.
    pub fn with_qswitch(mut self, id: &str, qports: BTreeMap<Addr, PortNo>) -> Self {
        self.qswitch = Some(id.into());
        self.qports = qports;
        self
    }

    pub fn packet_ins(&self) -> u64 {
        self.packet_ins
    }

    pub fn learned(&self, switch: &str) -> Option<&BTreeMap<Addr, PortNo>> {
        self.mac.get(switch)
    }

    /// Entries every switch gets at boot: metadata always reaches the
    /// controller.
    pub fn boot_flows() -> Vec<FlowEntry> {
        vec![FlowEntry::new(
            METADATA_PRIORITY,
            FlowMatch::kind(PacketKind::Qmeta),
            vec![Action::SendToController],
        )]
    }

    pub fn handle_packet_in(&mut self, switch: &str, pkt: &Packet) -> Vec<Command> {
        self.packet_ins += 1;
        let mut cmds = Vec::new();
        let table = self.mac.entry(switch.to_string()).or_default();
        if let Some(port) = pkt.in_port {
            table.insert(pkt.src.clone(), port);
        }
        match table.get(&pkt.dst).copied() {
            Some(port) if Some(port) == pkt.in_port => {}
            Some(port) => {
                cmds.push(Command::InstallFlow {
                    switch: switch.into(),
                    entry: FlowEntry::new(
                        LEARNED_PRIORITY,
                        FlowMatch::dst(&pkt.dst),
                        vec![Action::ForwardPort(port)],
                    ),
                });
                if let Some(back) = pkt.in_port {
                    cmds.push(Command::InstallFlow {
                        switch: switch.into(),
                        entry: FlowEntry::new(
                            LEARNED_PRIORITY,
                            FlowMatch::dst(&pkt.src),
                            vec![Action::ForwardPort(back)],
                        ),
                    });
                }
                cmds.push(Command::PacketOut {
                    switch: switch.into(),
                    packet: pkt.clone(),
                    out: OutPort::Port(port),
                });
            }
            None => cmds.push(Command::PacketOut {
                switch: switch.into(),
                packet: pkt.clone(),
                out: OutPort::Flood,
            }),
        }
        if pkt.kind == PacketKind::Qmeta && self.seen_qmeta.insert(pkt.id) {
            self.relay_metadata(pkt, &mut cmds);
        }
        cmds
    }

    fn relay_metadata(&mut self, pkt: &Packet, cmds: &mut Vec<Command>) {
        let (Some(meta), Some(qswitch)) = (&pkt.qmeta, &self.qswitch) else {
            return;
        };
        match meta.phase {
            QPhase::Open => {
                let in_port = meta.src_qport.or_else(|| self.qports.get(&pkt.src).copied());
                let out_port = meta.dst_qport.or_else(|| self.qports.get(&pkt.dst).copied());
                let (Some(in_qport), Some(out_qport)) = (in_port, out_port) else {
                    return;
                };
                match self.active.get(&in_qport) {
                    Some(&s) if s == meta.session_id => {}
                    Some(&stale) => cmds.push(Command::QSwitchTeardown {
                        qswitch: qswitch.clone(),
                        session_id: stale,
                    }),
                    None => {}
                }
                self.active.insert(in_qport, meta.session_id);
                cmds.push(Command::QSwitchPathSetup(PathSetup {
                    qswitch: qswitch.clone(),
                    session_id: meta.session_id,
                    in_qport,
                    out_qport,
                    notify: pkt.dst.clone(),
                    pair_count: meta.pair_count,
                    encoding_scheme: meta.encoding_scheme,
                    timestamp: meta.timestamp,
                }));
            }
            QPhase::Close => {
                let held = self
                    .active
                    .iter()
                    .find(|(_, &s)| s == meta.session_id)
                    .map(|(&p, _)| p);
                if let Some(port) = held {
                    self.active.remove(&port);
                    cmds.push(Command::QSwitchTeardown {
                        qswitch: qswitch.clone(),
                        session_id: meta.session_id,
                    });
                }
            }
            QPhase::Frame => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classnet::QuantumMetadata;

    fn arriving(src: &str, dst: &str, port: PortNo, kind: PacketKind) -> Packet {
        let mut p = Packet::new(src, dst, kind, b"x".to_vec());
        p.in_port = Some(port);
        p
    }

    fn qmeta(sid: u64, phase: QPhase) -> QuantumMetadata {
        QuantumMetadata {
            session_id: sid,
            phase,
            pair_count: 4,
            encoding_scheme: 1,
            src_qport: None,
            dst_qport: None,
            timestamp: 0,
        }
    }

    fn ctl() -> Controller {
        Controller::new().with_qswitch("qs1", [("alice".into(), 1), ("bob".into(), 2)].into())
    }

    #[test]
    fn first_packet_floods_then_learns() {
        let mut c = ctl();
        let cmds = c.handle_packet_in("s1", &arriving("alice", "bob", 1, PacketKind::Data));
        assert!(matches!(&cmds[..], [Command::PacketOut { out: OutPort::Flood, .. }]));
        assert_eq!(c.learned("s1").unwrap().get("alice"), Some(&1));
        let cmds = c.handle_packet_in("s1", &arriving("bob", "alice", 2, PacketKind::Data));
        assert_eq!(cmds.len(), 3);
        assert!(matches!(&cmds[0], Command::InstallFlow { entry, .. }
            if entry.matcher.dst.as_deref() == Some("alice")
                && entry.actions == [Action::ForwardPort(1)]));
        assert!(matches!(&cmds[2], Command::PacketOut { out: OutPort::Port(1), .. }));
    }

    #[test]
    fn qopen_yields_one_setup() {
        let mut c = ctl();
        let mut p = arriving("alice", "bob", 1, PacketKind::Data).with_qmeta(qmeta(9, QPhase::Open));
        p.id = 77;
        let setups = |cmds: &[Command]| {
            cmds.iter()
                .filter(|c| matches!(c, Command::QSwitchPathSetup(_)))
                .count()
        };
        let cmds = c.handle_packet_in("s1", &p);
        assert_eq!(setups(&cmds), 1);
        let Some(Command::QSwitchPathSetup(s)) = cmds.last() else {
            panic!()
        };
        assert_eq!((s.in_qport, s.out_qport, s.notify.as_str()), (1, 2, "bob"));
        // the same packet seen again on another switch
        assert_eq!(setups(&c.handle_packet_in("s2", &p)), 0);
        let mut f = arriving("bob", "alice", 2, PacketKind::Data).with_qmeta(qmeta(9, QPhase::Frame));
        f.id = 78;
        assert_eq!(setups(&c.handle_packet_in("s1", &f)), 0);
        let mut close = p.clone().with_qmeta(qmeta(9, QPhase::Close));
        close.id = 79;
        let cmds = c.handle_packet_in("s1", &close);
        assert_eq!(setups(&cmds), 0);
        assert!(cmds.iter().any(|c| matches!(c, Command::QSwitchTeardown { session_id: 9, .. })));
        close.id = 80;
        assert!(!c
            .handle_packet_in("s1", &close)
            .iter()
            .any(|c| matches!(c, Command::QSwitchTeardown { .. })));
    }

    #[test]
    fn stale_session_is_torn_down_first() {
        let mut c = ctl();
        let mut p = arriving("alice", "bob", 1, PacketKind::Data).with_qmeta(qmeta(1, QPhase::Open));
        p.id = 1;
        c.handle_packet_in("s1", &p);
        let mut q = p.clone().with_qmeta(qmeta(2, QPhase::Open));
        q.id = 2;
        let cmds = c.handle_packet_in("s1", &q);
        let kinds: Vec<_> = cmds
            .iter()
            .filter_map(|c| match c {
                Command::QSwitchTeardown { session_id, .. } => Some(("down", *session_id)),
                Command::QSwitchPathSetup(s) => Some(("up", s.session_id)),
                _ => None,
            })
            .collect();
        assert_eq!(kinds, vec![("down", 1), ("up", 2)]);
    }
}
