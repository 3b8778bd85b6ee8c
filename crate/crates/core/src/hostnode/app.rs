//! Application-facing messaging API of a host.
//!
//! Applications hand byte strings to [`Application::send`] and read
//! delivered messages with [`Application::recv`]. How the bytes travel is
//! the middleware's business.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

pub type MessageId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Unreachable,
    HandshakeTimeout,
    RetryBudgetExhausted,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailReason::Unreachable => "unreachable",
            FailReason::HandshakeTimeout => "handshake-timeout",
            FailReason::RetryBudgetExhausted => "retry-budget-exhausted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferStatus {
    InProgress,
    Delivered,
    Failed(FailReason),
}

impl fmt::Display for TransferStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferStatus::InProgress => f.write_str("in-progress"),
            TransferStatus::Delivered => f.write_str("delivered"),
            TransferStatus::Failed(r) => write!(f, "failed({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferReport {
    pub id: MessageId,
    pub dest: String,
    pub bytes: usize,
    /// Symbols the message expands to, coding overhead included.
    pub dibits_total: usize,
    /// Symbols acknowledged by the receiver.
    pub dibits_sent: usize,
    /// Symbol frames restarted after a failed attempt.
    pub retransmissions: u64,
    /// Attempts the receiver reported as never arriving.
    pub losses: u64,
    pub handshake_retries: u64,
    /// Acknowledged symbols that differ from what was sent.
    pub decode_mismatches: u64,
    pub status: TransferStatus,
}

impl TransferReport {
    pub(crate) fn new(id: MessageId, dest: &str, bytes: usize) -> Self {
        Self {
            id,
            dest: dest.into(),
            bytes,
            dibits_total: 0,
            dibits_sent: 0,
            retransmissions: 0,
            losses: 0,
            handshake_retries: 0,
            decode_mismatches: 0,
            status: TransferStatus::InProgress,
        }
    }

    pub fn is_done(&self) -> bool {
        self.status != TransferStatus::InProgress
    }
}

impl fmt::Display for TransferReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "id={} dest={} bytes={} dibits={}/{} retransmissions={} losses={} \
             handshake_retries={} mismatches={} status={}",
            self.id,
            self.dest,
            self.bytes,
            self.dibits_sent,
            self.dibits_total,
            self.retransmissions,
            self.losses,
            self.handshake_retries,
            self.decode_mismatches,
            self.status
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incoming {
    pub from: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub(crate) struct Outgoing {
    pub id: MessageId,
    pub dest: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Application {
    outbox: VecDeque<Outgoing>,
    inbox: VecDeque<Incoming>,
    reports: BTreeMap<MessageId, TransferReport>,
    next_id: MessageId,
}

impl Application {
    pub fn send(&mut self, dest: &str, body: &[u8]) -> MessageId {
        self.next_id += 1;
        let id = self.next_id;
        self.reports
            .insert(id, TransferReport::new(id, dest, body.len()));
        self.outbox.push_back(Outgoing {
            id,
            dest: dest.into(),
            body: body.to_vec(),
        });
        id
    }

    /// Oldest delivered message, if any.
    pub fn recv(&mut self) -> Option<Incoming> {
        self.inbox.pop_front()
    }

    /// Oldest delivered message from `src`.
    pub fn recv_from(&mut self, src: &str) -> Option<Vec<u8>> {
        let pos = self.inbox.iter().position(|m| m.from == src)?;
        self.inbox.remove(pos).map(|m| m.body)
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }

    pub fn report(&self, id: MessageId) -> Option<&TransferReport> {
        self.reports.get(&id)
    }

    pub fn reports(&self) -> impl Iterator<Item = &TransferReport> {
        self.reports.values()
    }

    pub(crate) fn take_outgoing(&mut self) -> Option<Outgoing> {
        self.outbox.pop_front()
    }

    pub(crate) fn deliver(&mut self, from: &str, body: Vec<u8>) {
        self.inbox.push_back(Incoming {
            from: from.into(),
            body,
        });
    }

    pub(crate) fn report_mut(&mut self, id: MessageId) -> Option<&mut TransferReport> {
        self.reports.get_mut(&id)
    }
}
