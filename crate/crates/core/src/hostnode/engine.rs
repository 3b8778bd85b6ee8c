//! Handshake state machine shared by the sending and receiving sides.

use std::fmt;

use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SessionState {
    Closed,
    SynSent,
    SynRcvd,
    Established,
    QopenSent,
    Qready,
    QframeWait,
    Closing,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Closed => "CLOSED",
            SessionState::SynSent => "SYN_SENT",
            SessionState::SynRcvd => "SYN_RCVD",
            SessionState::Established => "ESTABLISHED",
            SessionState::QopenSent => "QOPEN_SENT",
            SessionState::Qready => "QREADY",
            SessionState::QframeWait => "QFRAME_WAIT",
            SessionState::Closing => "CLOSING",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sender,
    Receiver,
}

/// Edges of the machine for each side.
pub fn allowed(role: Role, from: SessionState, to: SessionState) -> bool {
    use SessionState::*;
    match role {
        Role::Sender => matches!(
            (from, to),
            (Closed, SynSent)
                | (SynSent, Established)
                | (SynSent, Closed)
                | (Established, QopenSent)
                | (QopenSent, Qready)
                | (QopenSent, Closed)
                | (Qready, QframeWait)
                | (Qready, Closing)
                | (QframeWait, Qready)
                | (QframeWait, Closing)
                | (Closing, Closed)
        ),
        Role::Receiver => matches!(
            (from, to),
            (Closed, SynRcvd)
                | (SynRcvd, Established)
                | (SynRcvd, Closed)
                | (Established, Qready)
                | (Established, Closed)
                | (Qready, QframeWait)
                | (QframeWait, Closed)
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub at: Tick,
    pub sid: u64,
    pub role: Role,
    pub from: SessionState,
    pub to: SessionState,
}

/// Per-session state plus its transition history.
#[derive(Debug, Clone)]
pub struct Machine {
    pub sid: u64,
    pub role: Role,
    state: SessionState,
    pub timer_gen: u64,
    /// Consecutive timeouts in the current stage.
    pub retries: u32,
}

impl Machine {
    pub fn new(sid: u64, role: Role) -> Self {
        Self {
            sid,
            role,
            state: SessionState::Closed,
            timer_gen: 0,
            retries: 0,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    /// Moves to `to`, recording the edge in `log`. Panics on an edge the
    /// machine does not have.
    pub fn go(&mut self, to: SessionState, at: Tick, log: &mut Vec<Transition>) {
        assert!(
            allowed(self.role, self.state, to),
            "session {}: illegal {:?} transition {} -> {}",
            self.sid,
            self.role,
            self.state,
            to
        );
        log.push(Transition {
            at,
            sid: self.sid,
            role: self.role,
            from: self.state,
            to,
        });
        self.state = to;
        self.retries = 0;
    }

    /// Invalidates any armed timer and returns the new generation.
    pub fn rearm(&mut self) -> u64 {
        self.timer_gen += 1;
        self.timer_gen
    }
}

/// Receiver-side detector bookkeeping for the frame in progress.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorState {
    pub last_click: Option<(Tick, crate::dispatcher::QubitId)>,
    pub no_click_timeout: Tick,
}

impl DetectorState {
    pub fn clear(&mut self) {
        self.last_click = None;
    }
}
