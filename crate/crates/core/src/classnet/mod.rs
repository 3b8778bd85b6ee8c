//! Classical plane: frames, flow-table switches, links and the learning
//! controller.

pub mod controller;
pub mod flow;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use crate::Tick;

pub use controller::{Command, Controller, OutPort, PathSetup};
pub use flow::{Action, FlowEntry, FlowError, FlowMatch, SwitchState};
pub use trace::TraceRecord;

/// Flat symbolic node address.
pub type Addr = String;
pub type PortNo = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Data,
    Handshake,
    Qmeta,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::Handshake => "HANDSHAKE",
            PacketKind::Qmeta => "QMETA",
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PacketKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "DATA" => Ok(PacketKind::Data),
            "HANDSHAKE" => Ok(PacketKind::Handshake),
            "QMETA" => Ok(PacketKind::Qmeta),
            _ => Err(format!("unknown packet kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QPhase {
    Open,
    Frame,
    Close,
}

impl QPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            QPhase::Open => "QOPEN",
            QPhase::Frame => "QFRAME",
            QPhase::Close => "QCLOSE",
        }
    }
}

/// Control information describing an impending or ongoing quantum
/// transmission; carried only by `QMETA` packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantumMetadata {
    pub session_id: u64,
    pub phase: QPhase,
    pub pair_count: u32,
    pub encoding_scheme: u32,
    pub src_qport: Option<PortNo>,
    pub dst_qport: Option<PortNo>,
    pub timestamp: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Unique per run; assigned by the network when the packet is emitted.
    pub id: u64,
    pub src: Addr,
    pub dst: Addr,
    pub in_port: Option<PortNo>,
    pub kind: PacketKind,
    pub payload: Vec<u8>,
    pub qmeta: Option<QuantumMetadata>,
}

impl Packet {
    pub fn new(src: &str, dst: &str, kind: PacketKind, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            id: 0,
            src: src.into(),
            dst: dst.into(),
            in_port: None,
            kind,
            payload: payload.into(),
            qmeta: None,
        }
    }

    pub fn with_qmeta(mut self, meta: QuantumMetadata) -> Self {
        self.kind = PacketKind::Qmeta;
        self.qmeta = Some(meta);
        self
    }

    pub fn is_well_formed(&self) -> bool {
        self.qmeta.is_some() == (self.kind == PacketKind::Qmeta)
    }

    /// Single-line, whitespace-normalised rendering of the payload.
    pub fn summary(&self) -> String {
        let text = String::from_utf8_lossy(&self.payload);
        let mut s = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if s.is_empty() {
            s.push('-');
        }
        s
    }
}
