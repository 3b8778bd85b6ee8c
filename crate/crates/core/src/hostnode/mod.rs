//! Host stack: application API on top, middleware in the middle, CNIC and
//! QNIC bindings at the bottom.
//!
//! Each outgoing message is split into dibits (optionally repetition coded)
//! and carried by one or more sessions. A session runs
//! `SYN / SYNACK / ACK`, announces itself with `QOPEN`, then moves one symbol
//! per frame. A frame is driven by the receiver:
//!
//! ```text
//! receiver                         sender
//!   READY k a    ───────────────▶  create pair, send first half
//!                ◀ ─ ─ ─ qubit ─ ─
//!   CLICK k a    ───────────────▶  encode, send second half
//!                ◀ ─ ─ ─ qubit ─ ─
//!   DECODED k a d ──────────────▶  next frame, or QCLOSE
//! ```
//!
//! A receiver timeout sends `NOCLICK k a`, and the sender restarts the frame
//! with a fresh pair as attempt `a + 1`.

pub mod app;
pub mod engine;
pub mod message;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::classnet::{Addr, Packet, PortNo};
use crate::dispatcher::{DispatcherError, LocalOp, LossCause, QuantumService, QubitId, SessionId};
use crate::qswitch::Rotation;
use crate::sdc::{self, Dibit, Operator, SchemeRegistry};
use crate::Tick;

use app::{Application, FailReason, MessageId, TransferStatus};
use engine::{DetectorState, Machine, Role, SessionState, Transition};
use message::{FrameOp, Message, OpenParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// One session for the whole message.
    #[default]
    PerMessage,
    /// One session per transmitted symbol.
    PerDibit,
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per-message" => Ok(Granularity::PerMessage),
            "per-dibit" => Ok(Granularity::PerDibit),
            _ => Err(format!("unknown granularity `{s}`")),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::PerMessage => "per-message",
            Granularity::PerDibit => "per-dibit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostSettings {
    /// Restarts allowed per frame and resends allowed per handshake stage.
    pub retry_budget: u32,
    pub granularity: Granularity,
    pub scheme: u32,
    pub fec: bool,
    pub handshake_timeout: Tick,
    pub no_click_timeout: Tick,
}

impl Default for HostSettings {
    fn default() -> Self {
        Self {
            retry_budget: 8,
            granularity: Granularity::PerMessage,
            scheme: 1,
            fec: false,
            handshake_timeout: 16,
            no_click_timeout: 16,
        }
    }
}

/// How the host's QNIC is wired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QnicBinding {
    pub channel: String,
    /// Node at the far end of `channel`.
    pub peer: Addr,
    pub via_qswitch: bool,
    /// Quantum-switch port of every host reachable through it.
    pub qports: BTreeMap<Addr, PortNo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    First,
    Second,
}

/// Physical label travelling with a qubit, like a timing window would.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QubitTag {
    pub sid: u64,
    pub frame: usize,
    pub attempt: u32,
    pub half: Half,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostOutput {
    Packet(Packet),
    Timer { sid: u64, gen: u64, at: Tick },
    Qubit {
        qubit: QubitId,
        tag: QubitTag,
        channel: String,
        dest: Addr,
    },
}

type Res<T = ()> = Result<T, DispatcherError>;

struct Ctx<'a> {
    now: Tick,
    qs: &'a mut dyn QuantumService,
    out: Vec<HostOutput>,
}

fn operator_ops(op: Operator) -> &'static [LocalOp] {
    match op {
        Operator::I => &[LocalOp::I],
        Operator::X => &[LocalOp::X],
        Operator::Z => &[LocalOp::Z],
        Operator::XZ => &[LocalOp::Z, LocalOp::X],
    }
}

struct Transfer {
    id: MessageId,
    dest: Addr,
    symbols: Vec<Dibit>,
    next_offset: usize,
}

struct Outbound {
    m: Machine,
    peer: Addr,
    params: OpenParams,
    symbols: Vec<Dibit>,
    frame: usize,
    attempt: u32,
    in_flight: bool,
    kept: Option<QubitId>,
    second_sent: bool,
    abort: Option<FailReason>,
}

struct Inbound {
    m: Machine,
    peer: Addr,
    params: Option<OpenParams>,
    rotation: Option<Rotation>,
    frame: usize,
    attempt: u32,
    first: Option<QubitId>,
    decoded: Vec<Dibit>,
    detector: DetectorState,
}

impl Inbound {
    fn done(&self) -> bool {
        self.params.as_ref().is_some_and(|p| self.frame >= p.count)
    }
}

struct Partial {
    fec: bool,
    symbols: Vec<Option<Dibit>>,
}

pub struct HostStack {
    pub id: Addr,
    index: u64,
    settings: HostSettings,
    qnic: Option<QnicBinding>,
    reachable: BTreeSet<Addr>,
    schemes: SchemeRegistry,
    session: Option<SessionId>,
    app: Application,
    next_sid: u64,
    current: Option<Transfer>,
    outbound: Option<Outbound>,
    inbound: BTreeMap<u64, Inbound>,
    closed_inbound: BTreeSet<u64>,
    pending_rotation: BTreeMap<u64, Rotation>,
    partial: BTreeMap<(Addr, u64), Partial>,
    transitions: Vec<Transition>,
    dropped_messages: u64,
}

impl HostStack {
    /// `index` must be unique per host; it prefixes every session id.
    pub fn new(
        id: &str,
        index: u64,
        settings: HostSettings,
        qnic: Option<QnicBinding>,
        reachable: BTreeSet<Addr>,
    ) -> Self {
        Self {
            id: id.into(),
            index,
            settings,
            qnic,
            reachable,
            schemes: SchemeRegistry::default(),
            session: None,
            app: Application::default(),
            next_sid: 0,
            current: None,
            outbound: None,
            inbound: BTreeMap::new(),
            closed_inbound: BTreeSet::new(),
            pending_rotation: BTreeMap::new(),
            partial: BTreeMap::new(),
            transitions: Vec::new(),
            dropped_messages: 0,
        }
    }

    pub fn settings(&self) -> &HostSettings {
        &self.settings
    }

    pub fn schemes_mut(&mut self) -> &mut SchemeRegistry {
        &mut self.schemes
    }

    pub fn app(&self) -> &Application {
        &self.app
    }

    pub fn app_mut(&mut self) -> &mut Application {
        &mut self.app
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Sessions not yet back in `CLOSED`.
    pub fn open_sessions(&self) -> usize {
        self.inbound.len() + self.outbound.is_some() as usize
    }

    pub fn is_idle(&self) -> bool {
        self.outbound.is_none() && self.current.is_none()
    }

    /// Messages whose reassembly failed.
    pub fn dropped_messages(&self) -> u64 {
        self.dropped_messages
    }

    pub fn attach(&mut self, qs: &mut dyn QuantumService, at: Tick) -> Res<SessionId> {
        let s = qs.register_client(&self.id, at)?;
        self.session = Some(s);
        Ok(s)
    }

    pub fn session(&self) -> Option<SessionId> {
        self.session
    }

    pub fn qnic(&self) -> Option<&QnicBinding> {
        self.qnic.as_ref()
    }

    fn qsession(&self) -> Res<SessionId> {
        self.session
            .ok_or_else(|| DispatcherError::Simulation(format!("host `{}` has no QNIC", self.id)))
    }

    fn qports_for(&self, dst: &str) -> (Option<PortNo>, Option<PortNo>) {
        match &self.qnic {
            Some(q) if q.via_qswitch => (
                q.qports.get(&self.id).copied(),
                q.qports.get(dst).copied(),
            ),
            _ => (None, None),
        }
    }

    fn send(&self, ctx: &mut Ctx, dst: &str, msg: Message) {
        let pkt = msg.to_packet(&self.id, dst, ctx.now, self.qports_for(dst));
        ctx.out.push(HostOutput::Packet(pkt));
    }

    fn arm(ctx: &mut Ctx, m: &mut Machine, after: Tick) {
        let gen = m.rearm();
        ctx.out.push(HostOutput::Timer {
            sid: m.sid,
            gen,
            at: ctx.now + after,
        });
    }

    fn run<F>(&mut self, now: Tick, qs: &mut dyn QuantumService, f: F) -> Res<Vec<HostOutput>>
    where
        F: FnOnce(&mut Self, &mut Ctx) -> Res,
    {
        let mut ctx = Ctx {
            now,
            qs,
            out: Vec::new(),
        };
        f(self, &mut ctx)?;
        self.pump(&mut ctx)?;
        Ok(ctx.out)
    }

    /// Starts work queued by the application.
    pub fn poll(&mut self, now: Tick, qs: &mut dyn QuantumService) -> Res<Vec<HostOutput>> {
        self.run(now, qs, |_, _| Ok(()))
    }

    pub fn on_packet(
        &mut self,
        now: Tick,
        qs: &mut dyn QuantumService,
        pkt: &Packet,
    ) -> Res<Vec<HostOutput>> {
        let src = pkt.src.clone();
        self.run(now, qs, |h, ctx| match Message::parse(&pkt.payload) {
            Some(msg) => h.handle(ctx, &src, msg),
            None => Ok(()),
        })
    }

    pub fn on_qubit(
        &mut self,
        now: Tick,
        qs: &mut dyn QuantumService,
        qubit: QubitId,
        tag: QubitTag,
    ) -> Res<Vec<HostOutput>> {
        self.run(now, qs, |h, ctx| h.receive_qubit(ctx, qubit, tag))
    }

    pub fn on_timer(
        &mut self,
        now: Tick,
        qs: &mut dyn QuantumService,
        sid: u64,
        gen: u64,
    ) -> Res<Vec<HostOutput>> {
        self.run(now, qs, |h, ctx| h.timer(ctx, sid, gen))
    }

    // ---- sender ----------------------------------------------------------

    fn pump(&mut self, ctx: &mut Ctx) -> Res {
        while self.outbound.is_none() {
            if self.current.is_none() {
                let Some(job) = self.app.take_outgoing() else {
                    return Ok(());
                };
                let reachable = self.reachable.contains(&job.dest) && self.qnic.is_some();
                let report = self.app.report_mut(job.id).expect("report created on send");
                if !reachable {
                    report.status = TransferStatus::Failed(FailReason::Unreachable);
                    continue;
                }
                if job.body.is_empty() {
                    report.status = TransferStatus::Delivered;
                    self.send(ctx, &job.dest, Message::Empty { msg: job.id });
                    continue;
                }
                let mut symbols = sdc::bytes_to_dibits(&job.body);
                if self.settings.fec {
                    symbols = sdc::fec_encode(&symbols);
                }
                report.dibits_total = symbols.len();
                self.current = Some(Transfer {
                    id: job.id,
                    dest: job.dest,
                    symbols,
                    next_offset: 0,
                });
            }
            let t = self.current.as_ref().expect("set above");
            let count = match self.settings.granularity {
                Granularity::PerMessage => t.symbols.len() - t.next_offset,
                Granularity::PerDibit => 1,
            };
            self.next_sid += 1;
            let sid = self.index << 32 | self.next_sid;
            let mut ob = Outbound {
                m: Machine::new(sid, Role::Sender),
                peer: t.dest.clone(),
                params: OpenParams {
                    msg: t.id,
                    offset: t.next_offset,
                    count,
                    total: t.symbols.len(),
                    fec: self.settings.fec,
                    scheme: self.settings.scheme,
                },
                symbols: t.symbols[t.next_offset..t.next_offset + count].to_vec(),
                frame: 0,
                attempt: 0,
                in_flight: false,
                kept: None,
                second_sent: false,
                abort: None,
            };
            ob.m.go(SessionState::SynSent, ctx.now, &mut self.transitions);
            self.send(ctx, &ob.peer, Message::Syn { sid });
            Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
            self.outbound = Some(ob);
        }
        Ok(())
    }

    fn finish_outbound(&mut self, ctx: &mut Ctx) -> Res {
        let Some(mut ob) = self.outbound.take() else {
            return Ok(());
        };
        if ob.m.state() != SessionState::Closed {
            ob.m.go(SessionState::Closed, ctx.now, &mut self.transitions);
        }
        if let Some(q) = ob.kept.take() {
            ctx.qs.discard(self.qsession()?, q, LossCause::Discarded, ctx.now)?;
        }
        let t = self.current.as_mut().expect("session belongs to a transfer");
        let report = self.app.report_mut(t.id).expect("report exists");
        if let Some(reason) = ob.abort {
            report.status = TransferStatus::Failed(reason);
            self.current = None;
        } else {
            t.next_offset += ob.params.count;
            if t.next_offset == t.symbols.len() {
                report.status = TransferStatus::Delivered;
                self.current = None;
            }
        }
        Ok(())
    }

    fn with_report(&mut self, f: impl FnOnce(&mut app::TransferReport)) {
        if let Some(t) = &self.current {
            if let Some(r) = self.app.report_mut(t.id) {
                f(r);
            }
        }
    }

    fn start_attempt(&mut self, ctx: &mut Ctx) -> Res {
        let session = self.qsession()?;
        let qnic = self.qnic.clone().expect("checked at transfer start");
        let ob = self.outbound.as_mut().expect("active session");
        let (kept, sent) = ctx
            .qs
            .create_entangled_pair(session, &qnic.channel, &ob.peer, ctx.now)?;
        ob.kept = Some(kept.id);
        ob.in_flight = true;
        ob.second_sent = false;
        ctx.out.push(HostOutput::Qubit {
            qubit: sent.id,
            tag: QubitTag {
                sid: ob.m.sid,
                frame: ob.frame,
                attempt: ob.attempt,
                half: Half::First,
            },
            channel: qnic.channel.clone(),
            dest: qnic.peer.clone(),
        });
        ob.m.go(SessionState::QframeWait, ctx.now, &mut self.transitions);
        Self::arm(ctx, &mut ob.m, 3 * self.settings.no_click_timeout);
        Ok(())
    }

    /// Abandons the attempt in flight and starts attempt `target`.
    fn restart(&mut self, ctx: &mut Ctx, target: u32) -> Res {
        let session = self.qsession()?;
        let budget = self.settings.retry_budget;
        let ob = self.outbound.as_mut().expect("active session");
        if let Some(q) = ob.kept.take() {
            ctx.qs.discard(session, q, LossCause::Discarded, ctx.now)?;
        }
        let retry = target > 0;
        ob.attempt = target;
        ob.in_flight = false;
        if ob.m.state() == SessionState::QframeWait {
            ob.m.go(SessionState::Qready, ctx.now, &mut self.transitions);
        }
        if retry {
            self.with_report(|r| r.retransmissions += 1);
        }
        if target > budget {
            return self.abort(ctx, FailReason::RetryBudgetExhausted);
        }
        self.start_attempt(ctx)
    }

    fn abort(&mut self, ctx: &mut Ctx, reason: FailReason) -> Res {
        let session = self.qsession()?;
        let ob = self.outbound.as_mut().expect("active session");
        ob.abort = Some(reason);
        if let Some(q) = ob.kept.take() {
            ctx.qs.discard(session, q, LossCause::Discarded, ctx.now)?;
        }
        ob.in_flight = false;
        let (peer, sid) = (ob.peer.clone(), ob.m.sid);
        match ob.m.state() {
            SessionState::SynSent | SessionState::QopenSent => {
                if ob.m.state() == SessionState::QopenSent {
                    self.send(ctx, &peer, Message::Close { sid, abort: true });
                }
                self.finish_outbound(ctx)
            }
            _ => {
                let ob = self.outbound.as_mut().expect("active session");
                ob.m.go(SessionState::Closing, ctx.now, &mut self.transitions);
                Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
                self.send(ctx, &peer, Message::Close { sid, abort: true });
                Ok(())
            }
        }
    }

    /// Records the outcome of the current frame and moves on.
    fn advance_frame(&mut self, ctx: &mut Ctx, decoded: Option<Dibit>) -> Res {
        let session = self.qsession()?;
        let ob = self.outbound.as_mut().expect("active session");
        if let Some(q) = ob.kept.take() {
            ctx.qs.discard(session, q, LossCause::Discarded, ctx.now)?;
        }
        let mismatch = decoded.is_some_and(|d| d != ob.symbols[ob.frame]);
        ob.frame += 1;
        ob.attempt = 0;
        ob.in_flight = false;
        let finished = ob.frame == ob.symbols.len();
        let (peer, sid) = (ob.peer.clone(), ob.m.sid);
        ob.m.go(
            if finished {
                SessionState::Closing
            } else {
                SessionState::Qready
            },
            ctx.now,
            &mut self.transitions,
        );
        if finished {
            Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
        }
        self.with_report(|r| {
            r.dibits_sent += 1;
            r.decode_mismatches += mismatch as u64;
        });
        if finished {
            self.send(ctx, &peer, Message::Close { sid, abort: false });
            Ok(())
        } else {
            self.start_attempt(ctx)
        }
    }

    fn sender_frame(&mut self, ctx: &mut Ctx, op: FrameOp, k: usize, a: u32) -> Res {
        let ob = self.outbound.as_mut().expect("active session");
        let state = ob.m.state();
        if !matches!(
            state,
            SessionState::QopenSent | SessionState::Qready | SessionState::QframeWait
        ) {
            return Ok(());
        }
        if k == ob.frame + 1 && ob.in_flight && ob.second_sent {
            // the DECODED for this frame was lost
            self.advance_frame(ctx, None)?;
            if self.outbound.as_ref().is_none_or(|o| o.m.state() == SessionState::Closing) {
                return Ok(());
            }
        }
        let ob = self.outbound.as_mut().expect("active session");
        if k != ob.frame {
            return Ok(());
        }
        match op {
            FrameOp::Ready | FrameOp::NoClick => {
                let target = if op == FrameOp::NoClick { a + 1 } else { a };
                if op == FrameOp::NoClick && a == ob.attempt && ob.in_flight {
                    self.with_report(|r| r.losses += 1);
                }
                let ob = self.outbound.as_mut().expect("active session");
                if ob.m.state() == SessionState::QopenSent {
                    ob.m.go(SessionState::Qready, ctx.now, &mut self.transitions);
                    ob.attempt = target;
                    return self.start_attempt(ctx);
                }
                if target > ob.attempt || (!ob.in_flight && target == ob.attempt) {
                    self.restart(ctx, target)?;
                }
            }
            FrameOp::Click => {
                if a == ob.attempt && ob.in_flight && !ob.second_sent {
                    let session = self.qsession()?;
                    let qnic = self.qnic.as_ref().expect("checked at transfer start");
                    let ob = self.outbound.as_mut().expect("active session");
                    let q = ob.kept.take().expect("first half still held");
                    let op = self
                        .schemes
                        .encode(ob.params.scheme, ob.symbols[ob.frame])
                        .map_err(|e| DispatcherError::Simulation(e.to_string()))?;
                    for &g in operator_ops(op) {
                        ctx.qs.apply_local(session, q, g, ctx.now)?;
                    }
                    ob.second_sent = true;
                    ctx.out.push(HostOutput::Qubit {
                        qubit: q,
                        tag: QubitTag {
                            sid: ob.m.sid,
                            frame: ob.frame,
                            attempt: ob.attempt,
                            half: Half::Second,
                        },
                        channel: qnic.channel.clone(),
                        dest: qnic.peer.clone(),
                    });
                    Self::arm(ctx, &mut ob.m, 3 * self.settings.no_click_timeout);
                }
            }
            FrameOp::Decoded(d) => {
                if ob.in_flight || ob.attempt == a {
                    self.advance_frame(ctx, Some(d))?;
                }
            }
        }
        Ok(())
    }

    fn sender_timer(&mut self, ctx: &mut Ctx) -> Res {
        let budget = self.settings.retry_budget;
        let ob = self.outbound.as_mut().expect("active session");
        ob.m.retries += 1;
        let exhausted = ob.m.retries > budget;
        let (peer, sid) = (ob.peer.clone(), ob.m.sid);
        match ob.m.state() {
            SessionState::SynSent | SessionState::QopenSent => {
                if exhausted {
                    return self.abort(ctx, FailReason::HandshakeTimeout);
                }
                let msg = if ob.m.state() == SessionState::SynSent {
                    Message::Syn { sid }
                } else {
                    Message::Open {
                        sid,
                        params: ob.params.clone(),
                    }
                };
                Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
                self.send(ctx, &peer, msg);
                self.with_report(|r| r.handshake_retries += 1);
            }
            SessionState::Qready | SessionState::QframeWait => {
                let next = ob.attempt + 1;
                self.restart(ctx, next)?;
            }
            SessionState::Closing => {
                if exhausted {
                    return self.finish_outbound(ctx);
                }
                Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
                let abort = ob.abort.is_some();
                self.send(ctx, &peer, Message::Close { sid, abort });
                self.with_report(|r| r.handshake_retries += 1);
            }
            _ => {}
        }
        Ok(())
    }

    // ---- receiver --------------------------------------------------------

    fn discard(&self, ctx: &mut Ctx, q: QubitId) -> Res {
        ctx.qs.discard(self.qsession()?, q, LossCause::Discarded, ctx.now)
    }

    fn maybe_ready(&mut self, ctx: &mut Ctx, sid: u64) -> Res {
        let via_qswitch = self.qnic.as_ref().is_some_and(|q| q.via_qswitch);
        let Some(ib) = self.inbound.get_mut(&sid) else {
            return Ok(());
        };
        if ib.m.state() != SessionState::Established || ib.params.is_none() {
            return Ok(());
        }
        if ib.rotation.is_none() {
            ib.rotation = self.pending_rotation.remove(&sid);
        }
        if ib.rotation.is_none() && !via_qswitch {
            ib.rotation = Some(Rotation::I);
        }
        if ib.rotation.is_none() {
            return Ok(());
        }
        ib.m.go(SessionState::Qready, ctx.now, &mut self.transitions);
        ib.m.go(SessionState::QframeWait, ctx.now, &mut self.transitions);
        let timeout = self.settings.no_click_timeout;
        ib.detector.no_click_timeout = timeout;
        Self::arm(ctx, &mut ib.m, timeout);
        let peer = ib.peer.clone();
        self.send(ctx, &peer, Message::Frame { sid, op: FrameOp::Ready, k: 0, a: 0 });
        Ok(())
    }

    fn close_inbound(&mut self, ctx: &mut Ctx, sid: u64, keep: bool) -> Res {
        let Some(mut ib) = self.inbound.remove(&sid) else {
            return Ok(());
        };
        if let Some(q) = ib.first.take() {
            self.discard(ctx, q)?;
        }
        ib.m.go(SessionState::Closed, ctx.now, &mut self.transitions);
        self.closed_inbound.insert(sid);
        let Some(p) = ib.params.filter(|_| keep && ib.decoded.len() == ib.frame) else {
            return Ok(());
        };
        if ib.decoded.len() != p.count {
            return Ok(());
        }
        let key = (ib.peer.clone(), p.msg);
        let part = self.partial.entry(key.clone()).or_insert_with(|| Partial {
            fec: p.fec,
            symbols: vec![None; p.total],
        });
        for (i, d) in ib.decoded.iter().enumerate() {
            if let Some(slot) = part.symbols.get_mut(p.offset + i) {
                *slot = Some(*d);
            }
        }
        if part.symbols.iter().all(Option::is_some) {
            let part = self.partial.remove(&key).expect("present");
            let mut symbols: Vec<Dibit> = part.symbols.into_iter().flatten().collect();
            if part.fec {
                match sdc::fec_decode(&symbols) {
                    Ok(s) => symbols = s,
                    Err(_) => {
                        self.dropped_messages += 1;
                        return Ok(());
                    }
                }
            }
            match sdc::dibits_to_bytes(&symbols) {
                Ok(bytes) => self.app.deliver(&key.0, bytes),
                Err(_) => self.dropped_messages += 1,
            }
        }
        Ok(())
    }

    fn receive_qubit(&mut self, ctx: &mut Ctx, qubit: QubitId, tag: QubitTag) -> Res {
        let session = self.qsession()?;
        let Some(ib) = self.inbound.get_mut(&tag.sid) else {
            return self.discard(ctx, qubit);
        };
        let current = ib.m.state() == SessionState::QframeWait && !ib.done();
        if !current || tag.frame != ib.frame || tag.attempt < ib.attempt {
            return self.discard(ctx, qubit);
        }
        if tag.attempt > ib.attempt {
            ib.attempt = tag.attempt;
            if let Some(old) = ib.first.take() {
                ctx.qs.discard(session, old, LossCause::Discarded, ctx.now)?;
            }
        }
        let (sid, k, a, peer) = (tag.sid, ib.frame, ib.attempt, ib.peer.clone());
        match tag.half {
            Half::First => {
                if ib.first.is_some() {
                    return self.discard(ctx, qubit);
                }
                ib.first = Some(qubit);
                ib.detector.last_click = Some((ctx.now, qubit));
                Self::arm(ctx, &mut ib.m, self.settings.no_click_timeout);
                self.send(ctx, &peer, Message::Frame { sid, op: FrameOp::Click, k, a });
            }
            Half::Second => {
                let Some(first) = ib.first.take() else {
                    return self.discard(ctx, qubit);
                };
                let r = ib.rotation.unwrap_or_default();
                if r != Rotation::I {
                    for q in [qubit, first] {
                        ctx.qs.apply_local(session, q, r.local_op(), ctx.now)?;
                    }
                }
                let m = ctx.qs.joint_measure(session, qubit, first, ctx.now)?;
                let scheme = ib.params.as_ref().expect("open before frames").scheme;
                let d = self
                    .schemes
                    .decode(scheme, Dibit::from(m))
                    .map_err(|e| DispatcherError::Simulation(e.to_string()))?;
                ib.decoded.push(d);
                ib.frame += 1;
                ib.attempt = 0;
                ib.m.retries = 0;
                ib.detector.clear();
                Self::arm(ctx, &mut ib.m, self.settings.no_click_timeout);
                self.send(ctx, &peer, Message::Frame { sid, op: FrameOp::Decoded(d), k, a });
            }
        }
        Ok(())
    }

    fn receiver_timer(&mut self, ctx: &mut Ctx, sid: u64) -> Res {
        let budget = self.settings.retry_budget;
        let ib = self.inbound.get_mut(&sid).expect("checked by caller");
        ib.m.retries += 1;
        let retries = ib.m.retries;
        let peer = ib.peer.clone();
        match ib.m.state() {
            SessionState::SynRcvd | SessionState::Established => {
                if retries > budget + 1 {
                    return self.close_inbound(ctx, sid, false);
                }
                Self::arm(ctx, &mut ib.m, self.settings.handshake_timeout);
            }
            SessionState::QframeWait if ib.done() => {
                if retries > budget + 1 {
                    // all symbols are in; the close was lost
                    return self.close_inbound(ctx, sid, true);
                }
                let d = *ib.decoded.last().expect("done implies at least one");
                let (k, a) = (ib.frame - 1, 0);
                Self::arm(ctx, &mut ib.m, self.settings.no_click_timeout);
                self.send(ctx, &peer, Message::Frame { sid, op: FrameOp::Decoded(d), k, a });
            }
            SessionState::QframeWait => {
                if retries > budget + 1 {
                    return self.close_inbound(ctx, sid, false);
                }
                if let Some(q) = ib.first.take() {
                    ctx.qs.discard(self.session.expect("attached"), q, LossCause::Discarded, ctx.now)?;
                }
                let ib = self.inbound.get_mut(&sid).expect("present");
                let (k, a) = (ib.frame, ib.attempt);
                ib.attempt += 1;
                ib.detector.clear();
                Self::arm(ctx, &mut ib.m, self.settings.no_click_timeout);
                self.send(ctx, &peer, Message::Frame { sid, op: FrameOp::NoClick, k, a });
            }
            _ => {}
        }
        Ok(())
    }

    // ---- dispatch --------------------------------------------------------

    fn timer(&mut self, ctx: &mut Ctx, sid: u64, gen: u64) -> Res {
        if let Some(ob) = &self.outbound {
            if ob.m.sid == sid {
                return if ob.m.timer_gen == gen {
                    self.sender_timer(ctx)
                } else {
                    Ok(())
                };
            }
        }
        match self.inbound.get(&sid) {
            Some(ib) if ib.m.timer_gen == gen => self.receiver_timer(ctx, sid),
            _ => Ok(()),
        }
    }

    fn handle(&mut self, ctx: &mut Ctx, src: &str, msg: Message) -> Res {
        let ours = msg
            .sid()
            .is_some_and(|sid| self.outbound.as_ref().is_some_and(|o| o.m.sid == sid));
        if ours {
            let ob = self.outbound.as_mut().expect("checked");
            if ob.peer != src {
                return Ok(());
            }
            match msg {
                Message::SynAck { sid } => match ob.m.state() {
                    SessionState::SynSent => {
                        ob.m.go(SessionState::Established, ctx.now, &mut self.transitions);
                        self.send(ctx, src, Message::Ack { sid });
                        let ob = self.outbound.as_mut().expect("checked");
                        ob.m.go(SessionState::QopenSent, ctx.now, &mut self.transitions);
                        Self::arm(ctx, &mut ob.m, self.settings.handshake_timeout);
                        let params = ob.params.clone();
                        self.send(ctx, src, Message::Open { sid, params });
                    }
                    SessionState::QopenSent => self.send(ctx, src, Message::Ack { sid }),
                    _ => {}
                },
                Message::Frame { op, k, a, .. } => self.sender_frame(ctx, op, k, a)?,
                Message::CloseAck { .. } if ob.m.state() == SessionState::Closing => {
                    self.finish_outbound(ctx)?;
                }
                _ => {}
            }
            return Ok(());
        }
        match msg {
            Message::Syn { sid } => {
                if self.closed_inbound.contains(&sid) {
                    return Ok(());
                }
                if let Some(ib) = self.inbound.get(&sid) {
                    if ib.m.state() == SessionState::SynRcvd {
                        self.send(ctx, src, Message::SynAck { sid });
                    }
                    return Ok(());
                }
                let mut ib = Inbound {
                    m: Machine::new(sid, Role::Receiver),
                    peer: src.into(),
                    params: None,
                    rotation: None,
                    frame: 0,
                    attempt: 0,
                    first: None,
                    decoded: Vec::new(),
                    detector: DetectorState::default(),
                };
                ib.m.go(SessionState::SynRcvd, ctx.now, &mut self.transitions);
                Self::arm(ctx, &mut ib.m, self.settings.handshake_timeout);
                self.inbound.insert(sid, ib);
                self.send(ctx, src, Message::SynAck { sid });
            }
            Message::Ack { sid } => {
                if let Some(ib) = self.inbound.get_mut(&sid) {
                    if ib.m.state() == SessionState::SynRcvd {
                        ib.m.go(SessionState::Established, ctx.now, &mut self.transitions);
                    }
                }
            }
            Message::Open { sid, params } => {
                let Some(ib) = self.inbound.get_mut(&sid) else {
                    return Ok(());
                };
                match ib.m.state() {
                    SessionState::SynRcvd | SessionState::Established => {
                        if ib.m.state() == SessionState::SynRcvd {
                            ib.m.go(SessionState::Established, ctx.now, &mut self.transitions);
                        }
                        if self.schemes.contains(params.scheme) && params.count > 0 {
                            ib.params = Some(params);
                        }
                        self.maybe_ready(ctx, sid)?;
                    }
                    SessionState::QframeWait
                        if ib.frame == 0 && ib.attempt == 0 && ib.first.is_none() =>
                    {
                        self.send(ctx, src, Message::Frame { sid, op: FrameOp::Ready, k: 0, a: 0 });
                    }
                    _ => {}
                }
            }
            Message::Rotation { sid, rotation } => match self.inbound.get_mut(&sid) {
                Some(ib) if ib.rotation.is_none() => {
                    ib.rotation = Some(rotation);
                    self.maybe_ready(ctx, sid)?;
                }
                Some(_) => {}
                None if !self.closed_inbound.contains(&sid) => {
                    self.pending_rotation.insert(sid, rotation);
                }
                None => {}
            },
            Message::Close { sid, abort } => {
                let complete = self.inbound.get(&sid).is_some_and(|ib| ib.done());
                self.close_inbound(ctx, sid, !abort && complete)?;
                self.send(ctx, src, Message::CloseAck { sid });
            }
            Message::Empty { .. } => self.app.deliver(src, Vec::new()),
            Message::SynAck { .. }
            | Message::Frame { .. }
            | Message::CloseAck { .. } => {}
        }
        Ok(())
    }
}
