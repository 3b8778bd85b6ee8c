//! Host-to-host control messages and their packet encoding.
//!
//! Payloads are single text lines, `NAME key=value...`. The names `QOPEN`,
//! `QFRAME` and `QCLOSE` are this crate's own vocabulary.

use std::collections::BTreeMap;
use std::fmt;

use crate::classnet::{Packet, PacketKind, PortNo, QPhase, QuantumMetadata};
use crate::qswitch::Rotation;
use crate::sdc::Dibit;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOp {
    /// Receiver is ready for attempt `a` of frame `k`.
    Ready,
    /// The first half of attempt `(k, a)` arrived.
    Click,
    /// Attempt `(k, a)` timed out at the receiver.
    NoClick,
    /// Attempt `(k, a)` decoded; also opens frame `k + 1`.
    Decoded(Dibit),
}

impl FrameOp {
    fn name(self) -> &'static str {
        match self {
            FrameOp::Ready => "READY",
            FrameOp::Click => "CLICK",
            FrameOp::NoClick => "NOCLICK",
            FrameOp::Decoded(_) => "DECODED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenParams {
    pub msg: u64,
    /// Index of this session's first symbol within the message.
    pub offset: usize,
    /// Symbols carried by this session.
    pub count: usize,
    /// Symbols in the whole message.
    pub total: usize,
    pub fec: bool,
    pub scheme: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Syn { sid: u64 },
    SynAck { sid: u64 },
    Ack { sid: u64 },
    Open { sid: u64, params: OpenParams },
    Frame { sid: u64, op: FrameOp, k: usize, a: u32 },
    Close { sid: u64, abort: bool },
    CloseAck { sid: u64 },
    Rotation { sid: u64, rotation: Rotation },
    Empty { msg: u64 },
}

impl Message {
    pub fn sid(&self) -> Option<u64> {
        match *self {
            Message::Syn { sid }
            | Message::SynAck { sid }
            | Message::Ack { sid }
            | Message::Open { sid, .. }
            | Message::Frame { sid, .. }
            | Message::Close { sid, .. }
            | Message::CloseAck { sid }
            | Message::Rotation { sid, .. } => Some(sid),
            Message::Empty { .. } => None,
        }
    }

    pub fn kind(&self) -> PacketKind {
        match self {
            Message::Syn { .. } | Message::SynAck { .. } | Message::Ack { .. } => {
                PacketKind::Handshake
            }
            Message::Open { .. }
            | Message::Frame { .. }
            | Message::Close { .. }
            | Message::CloseAck { .. } => PacketKind::Qmeta,
            Message::Rotation { .. } | Message::Empty { .. } => PacketKind::Data,
        }
    }

    fn phase(&self) -> Option<QPhase> {
        match self {
            Message::Open { .. } => Some(QPhase::Open),
            Message::Frame { .. } => Some(QPhase::Frame),
            Message::Close { .. } | Message::CloseAck { .. } => Some(QPhase::Close),
            _ => None,
        }
    }

    /// Wraps the message in a packet; `QMETA` messages get metadata with
    /// the given quantum-port hints.
    pub fn to_packet(
        &self,
        src: &str,
        dst: &str,
        now: Tick,
        qports: (Option<PortNo>, Option<PortNo>),
    ) -> Packet {
        let pkt = Packet::new(src, dst, self.kind(), self.to_string().into_bytes());
        match self.phase() {
            Some(phase) => {
                let (pair_count, encoding_scheme) = match self {
                    Message::Open { params, .. } => (params.count as u32, params.scheme),
                    Message::Frame { .. } => (1, 0),
                    _ => (0, 0),
                };
                pkt.with_qmeta(QuantumMetadata {
                    session_id: self.sid().expect("metadata messages carry a session"),
                    phase,
                    pair_count,
                    encoding_scheme,
                    src_qport: qports.0,
                    dst_qport: qports.1,
                    timestamp: now,
                })
            }
            None => pkt,
        }
    }

    pub fn parse(payload: &[u8]) -> Option<Message> {
        let text = std::str::from_utf8(payload).ok()?;
        let mut toks = text.split_whitespace();
        let name = toks.next()?;
        let mut f = BTreeMap::new();
        for t in toks {
            let (k, v) = t.split_once('=')?;
            f.insert(k, v);
        }
        let num = |k: &str| f.get(k)?.parse::<u64>().ok();
        let flag = |k: &str| match f.get(k) {
            Some(&"1") => Some(true),
            Some(&"0") => Some(false),
            _ => None,
        };
        let sid = num("sid");
        Some(match name {
            "SYN" => Message::Syn { sid: sid? },
            "SYNACK" => Message::SynAck { sid: sid? },
            "ACK" => Message::Ack { sid: sid? },
            "QOPEN" => Message::Open {
                sid: sid?,
                params: OpenParams {
                    msg: num("msg")?,
                    offset: num("offset")? as usize,
                    count: num("count")? as usize,
                    total: num("total")? as usize,
                    fec: flag("fec")?,
                    scheme: num("scheme")? as u32,
                },
            },
            "QFRAME" => {
                let op = match *f.get("op")? {
                    "READY" => FrameOp::Ready,
                    "CLICK" => FrameOp::Click,
                    "NOCLICK" => FrameOp::NoClick,
                    "DECODED" => {
                        let d = u8::from_str_radix(f.get("d")?, 2).ok().filter(|&d| d < 4)?;
                        FrameOp::Decoded(Dibit::from_bits(d))
                    }
                    _ => return None,
                };
                Message::Frame {
                    sid: sid?,
                    op,
                    k: num("k")? as usize,
                    a: num("a")? as u32,
                }
            }
            "QCLOSE" => Message::Close {
                sid: sid?,
                abort: flag("abort")?,
            },
            "QCLOSE-ACK" => Message::CloseAck { sid: sid? },
            "ROTATION" => Message::Rotation {
                sid: sid?,
                rotation: f.get("r")?.parse().ok()?,
            },
            "EMPTY" => Message::Empty { msg: num("msg")? },
            _ => return None,
        })
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Syn { sid } => write!(f, "SYN sid={sid}"),
            Message::SynAck { sid } => write!(f, "SYNACK sid={sid}"),
            Message::Ack { sid } => write!(f, "ACK sid={sid}"),
            Message::Open { sid, params: p } => write!(
                f,
                "QOPEN sid={sid} msg={} offset={} count={} total={} fec={} scheme={}",
                p.msg, p.offset, p.count, p.total, p.fec as u8, p.scheme
            ),
            Message::Frame { sid, op, k, a } => {
                write!(f, "QFRAME sid={sid} op={} k={k} a={a}", op.name())?;
                if let FrameOp::Decoded(d) = op {
                    write!(f, " d={d}")?;
                }
                Ok(())
            }
            Message::Close { sid, abort } => write!(f, "QCLOSE sid={sid} abort={}", *abort as u8),
            Message::CloseAck { sid } => write!(f, "QCLOSE-ACK sid={sid}"),
            Message::Rotation { sid, rotation } => write!(f, "ROTATION sid={sid} r={rotation}"),
            Message::Empty { msg } => write!(f, "EMPTY msg={msg}"),
        }
    }
}
