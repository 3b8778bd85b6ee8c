//! Quantum switch: middleware turning controller path commands into port
//! configurations, and a hardware model that forwards qubits while applying
//! each path's fixed Pauli rotation. The switch never measures.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::classnet::{Addr, PathSetup, PortNo};
use crate::dispatcher::{
    DispatcherError, LocalOp, LossCause, QuantumService, QubitId, SessionId, TransmitOutcome,
};
use crate::noise::ChannelError;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rotation {
    #[default]
    I,
    X,
    Y,
    Z,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::I, Rotation::X, Rotation::Y, Rotation::Z];

    pub fn as_str(self) -> &'static str {
        match self {
            Rotation::I => "I",
            Rotation::X => "X",
            Rotation::Y => "Y",
            Rotation::Z => "Z",
        }
    }

    pub fn local_op(self) -> LocalOp {
        match self {
            Rotation::I => LocalOp::I,
            Rotation::X => LocalOp::X,
            Rotation::Y => LocalOp::Y,
            Rotation::Z => LocalOp::Z,
        }
    }

    /// The channel error with the same action on a qubit.
    pub fn as_error(self) -> ChannelError {
        match self {
            Rotation::I => ChannelError::None,
            Rotation::X => ChannelError::X,
            Rotation::Y => ChannelError::Y,
            Rotation::Z => ChannelError::Z,
        }
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rotation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Rotation::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown rotation `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathConfig {
    pub in_qport: PortNo,
    pub out_qport: PortNo,
    pub rotation: Rotation,
    pub session_id: u64,
    pub expiry: Option<Tick>,
}

/// Sent to the receiving host so it can undo the path rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationNotice {
    pub session_id: u64,
    pub rotation: Rotation,
    pub to: Addr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QSwitchError {
    #[error("quantum port {0} does not exist")]
    UnknownPort(PortNo),
    #[error("quantum port {port} is held by session {holder}")]
    PortConflict { port: PortNo, holder: u64 },
    #[error("no path for session {0}")]
    UnknownSession(u64),
    #[error("no path configured on quantum port {0}")]
    NoPath(PortNo),
    #[error("switch is not attached to the dispatcher")]
    Detached,
    #[error(transparent)]
    Quantum(#[from] DispatcherError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPort {
    pub channel: String,
    pub peer: Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forwarded {
    pub outcome: TransmitOutcome,
    pub channel: String,
    pub dest: Addr,
    pub rotation: Rotation,
}

#[derive(Debug, Clone)]
pub struct QSwitch {
    pub id: String,
    session: Option<SessionId>,
    ports: BTreeMap<PortNo, QPort>,
    rotations: BTreeMap<(PortNo, PortNo), Rotation>,
    paths: BTreeMap<PortNo, PathConfig>,
}

impl QSwitch {
    pub fn new(id: &str, ports: BTreeMap<PortNo, QPort>) -> Self {
        Self {
            id: id.into(),
            session: None,
            ports,
            rotations: BTreeMap::new(),
            paths: BTreeMap::new(),
        }
    }

    /// Fixed device property of the `in → out` port pair; unset pairs are `I`.
    pub fn set_rotation(&mut self, in_qport: PortNo, out_qport: PortNo, r: Rotation) {
        self.rotations.insert((in_qport, out_qport), r);
    }

    pub fn rotation(&self, in_qport: PortNo, out_qport: PortNo) -> Rotation {
        self.rotations
            .get(&(in_qport, out_qport))
            .copied()
            .unwrap_or_default()
    }

    pub fn attach(&mut self, qs: &mut dyn QuantumService, at: Tick) -> Result<SessionId, QSwitchError> {
        let s = qs.register_client(&self.id, at)?;
        self.session = Some(s);
        Ok(s)
    }

    pub fn ports(&self) -> &BTreeMap<PortNo, QPort> {
        &self.ports
    }

    pub fn port_of_channel(&self, channel: &str) -> Option<PortNo> {
        self.ports
            .iter()
            .find(|(_, p)| p.channel == channel)
            .map(|(&n, _)| n)
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathConfig> {
        self.paths.values()
    }

    /// Activates the path for `cmd`. Repeating a setup for the session that
    /// already holds the port refreshes it.
    pub fn configure_path(&mut self, cmd: &PathSetup) -> Result<RotationNotice, QSwitchError> {
        for p in [cmd.in_qport, cmd.out_qport] {
            if !self.ports.contains_key(&p) {
                return Err(QSwitchError::UnknownPort(p));
            }
        }
        if let Some(held) = self.paths.get(&cmd.in_qport) {
            if held.session_id != cmd.session_id {
                return Err(QSwitchError::PortConflict {
                    port: cmd.in_qport,
                    holder: held.session_id,
                });
            }
        }
        let rotation = self.rotation(cmd.in_qport, cmd.out_qport);
        self.paths.insert(
            cmd.in_qport,
            PathConfig {
                in_qport: cmd.in_qport,
                out_qport: cmd.out_qport,
                rotation,
                session_id: cmd.session_id,
                expiry: None,
            },
        );
        Ok(RotationNotice {
            session_id: cmd.session_id,
            rotation,
            to: cmd.notify.clone(),
        })
    }

    pub fn teardown(&mut self, session_id: u64) -> Result<PathConfig, QSwitchError> {
        let port = self
            .paths
            .iter()
            .find(|(_, p)| p.session_id == session_id)
            .map(|(&n, _)| n)
            .ok_or(QSwitchError::UnknownSession(session_id))?;
        Ok(self.paths.remove(&port).expect("found above"))
    }

    /// Forwards a qubit that arrived on `in_qport`. Without an active path
    /// the qubit is destroyed and logged as a `no-path` loss.
    pub fn route(
        &mut self,
        qs: &mut dyn QuantumService,
        qubit: QubitId,
        in_qport: PortNo,
        at: Tick,
    ) -> Result<Forwarded, QSwitchError> {
        let session = self.session.ok_or(QSwitchError::Detached)?;
        if self
            .paths
            .get(&in_qport)
            .is_some_and(|p| p.expiry.is_some_and(|t| at > t))
        {
            self.paths.remove(&in_qport);
        }
        let Some(path) = self.paths.get(&in_qport) else {
            qs.discard(session, qubit, LossCause::NoPath, at)?;
            return Err(QSwitchError::NoPath(in_qport));
        };
        let out = self
            .ports
            .get(&path.out_qport)
            .ok_or(QSwitchError::UnknownPort(path.out_qport))?
            .clone();
        let rotation = path.rotation;
        if rotation != Rotation::I {
            qs.apply_local(session, qubit, rotation.local_op(), at)?;
        }
        let outcome = qs.transmit(session, qubit, &out.channel, &out.peer, at)?;
        Ok(Forwarded {
            outcome,
            channel: out.channel,
            dest: out.peer,
            rotation,
        })
    }
}
