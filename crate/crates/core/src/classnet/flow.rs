//! Match-action flow tables.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Addr, Packet, PacketKind, PortNo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("entry needs at least one action")]
    NoActions,
    #[error("table {0} does not exist")]
    UnknownTable(usize),
    #[error("goto from table {from} to {to} closes a cycle")]
    GotoCycle { from: usize, to: usize },
    #[error("action `{0}` is not executable")]
    Unsupported(String),
    #[error("cannot parse flow `{text}`: {msg}")]
    Parse { text: String, msg: String },
}

/// Absent fields are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowMatch {
    pub in_port: Option<PortNo>,
    pub src: Option<Addr>,
    pub dst: Option<Addr>,
    pub kind: Option<PacketKind>,
}

impl FlowMatch {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn dst(addr: &str) -> Self {
        Self {
            dst: Some(addr.into()),
            ..Self::default()
        }
    }

    pub fn kind(kind: PacketKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn matches(&self, pkt: &Packet) -> bool {
        self.in_port.is_none_or(|p| pkt.in_port == Some(p))
            && self.src.as_ref().is_none_or(|s| *s == pkt.src)
            && self.dst.as_ref().is_none_or(|d| *d == pkt.dst)
            && self.kind.is_none_or(|k| k == pkt.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    ForwardPort(PortNo),
    SendToController,
    GotoTable(usize),
    Drop,
    /// Header rewrite; accepted by the parser, refused at install.
    SetField { field: String, value: String },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::ForwardPort(p) => write!(f, "output:{p}"),
            Action::SendToController => f.write_str("controller"),
            Action::GotoTable(t) => write!(f, "goto:{t}"),
            Action::Drop => f.write_str("drop"),
            Action::SetField { field, value } => write!(f, "set_field:{field}={value}"),
        }
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |a: &str| a.parse().map_err(|_| format!("bad number in `{s}`"));
        match head {
            "output" => Ok(Action::ForwardPort(num(arg)?)),
            "controller" if arg.is_empty() => Ok(Action::SendToController),
            "goto" => Ok(Action::GotoTable(num(arg)? as usize)),
            "drop" if arg.is_empty() => Ok(Action::Drop),
            "set_field" => {
                let (field, value) = arg
                    .split_once('=')
                    .ok_or_else(|| format!("set_field needs field=value in `{s}`"))?;
                Ok(Action::SetField {
                    field: field.into(),
                    value: value.into(),
                })
            }
            _ => Err(format!("unknown action `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub table: usize,
    pub priority: u16,
    pub matcher: FlowMatch,
    pub actions: Vec<Action>,
    pub packets: u64,
    pub bytes: u64,
}

impl FlowEntry {
    pub fn new(priority: u16, matcher: FlowMatch, actions: Vec<Action>) -> Self {
        Self {
            table: 0,
            priority,
            matcher,
            actions,
            packets: 0,
            bytes: 0,
        }
    }

    pub fn in_table(mut self, table: usize) -> Self {
        self.table = table;
        self
    }
}

impl fmt::Display for FlowEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "table={} priority={}", self.table, self.priority)?;
        let m = &self.matcher;
        if let Some(p) = m.in_port {
            write!(f, " in_port={p}")?;
        }
        if let Some(a) = &m.src {
            write!(f, " src={a}")?;
        }
        if let Some(a) = &m.dst {
            write!(f, " dst={a}")?;
        }
        if let Some(k) = m.kind {
            write!(f, " kind={}", k.as_str())?;
        }
        let actions: Vec<String> = self.actions.iter().map(Action::to_string).collect();
        write!(f, " actions={}", actions.join(","))
    }
}

/// Text form: `[table=N] [priority=P] [in_port=N] [src=A] [dst=A] [kind=K] actions=a,b`.
impl FromStr for FlowEntry {
    type Err = FlowError;
    fn from_str(text: &str) -> Result<Self, FlowError> {
        let err = |msg: String| FlowError::Parse {
            text: text.into(),
            msg,
        };
        let mut entry = FlowEntry::new(0, FlowMatch::any(), Vec::new());
        let mut saw_actions = false;
        for tok in text.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{tok}`")))?;
            let num = || v.parse::<u64>().map_err(|_| err(format!("bad number `{v}`")));
            match k {
                "table" => entry.table = num()? as usize,
                "priority" => {
                    entry.priority = u16::try_from(num()?).map_err(|_| err("priority".into()))?
                }
                "in_port" => entry.matcher.in_port = Some(num()? as PortNo),
                "src" => entry.matcher.src = Some(v.into()),
                "dst" => entry.matcher.dst = Some(v.into()),
                "kind" => entry.matcher.kind = Some(v.parse().map_err(err)?),
                "actions" => {
                    saw_actions = true;
                    for a in v.split(',').filter(|a| !a.is_empty()) {
                        entry.actions.push(a.parse().map_err(err)?);
                    }
                }
                _ => return Err(err(format!("unknown field `{k}`"))),
            }
        }
        if !saw_actions {
            return Err(err("missing actions=".into()));
        }
        Ok(entry)
    }
}

#[derive(Debug, Clone)]
struct Table {
    /// Sorted by descending priority; insertion order among equals.
    entries: Vec<FlowEntry>,
    miss: FlowEntry,
}

/// One classical switch: its flow tables and per-port state.
#[derive(Debug, Clone)]
pub struct SwitchState {
    pub id: String,
    tables: Vec<Table>,
    ports: Vec<PortNo>,
    lookups: u64,
    processed: u64,
}

impl SwitchState {
    pub fn new(id: &str, table_count: usize, ports: Vec<PortNo>) -> Self {
        let tables = (0..table_count.max(1))
            .map(|t| Table {
                entries: Vec::new(),
                miss: FlowEntry::new(0, FlowMatch::any(), vec![Action::SendToController]).in_table(t),
            })
            .collect();
        Self {
            id: id.into(),
            tables,
            ports,
            lookups: 0,
            processed: 0,
        }
    }

    pub fn ports(&self) -> &[PortNo] {
        &self.ports
    }

    pub fn entries(&self, table: usize) -> &[FlowEntry] {
        self.tables.get(table).map_or(&[], |t| &t.entries)
    }

    pub fn miss_entry(&self, table: usize) -> Option<&FlowEntry> {
        self.tables.get(table).map(|t| &t.miss)
    }

    /// Number of packets run through [`Self::match_packet`].
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of table hits, one per table visited per packet.
    pub fn lookups(&self) -> u64 {
        self.lookups
    }

    /// Sum of packet counters over every entry, miss entries included.
    pub fn counter_total(&self) -> u64 {
        self.tables
            .iter()
            .map(|t| t.miss.packets + t.entries.iter().map(|e| e.packets).sum::<u64>())
            .sum()
    }

    fn check_actions(&self, table: usize, actions: &[Action]) -> Result<(), FlowError> {
        if actions.is_empty() {
            return Err(FlowError::NoActions);
        }
        for a in actions {
            match a {
                Action::SetField { .. } => return Err(FlowError::Unsupported(a.to_string())),
                Action::GotoTable(t) => {
                    if *t >= self.tables.len() {
                        return Err(FlowError::UnknownTable(*t));
                    }
                    if self.reaches(*t, table) {
                        return Err(FlowError::GotoCycle {
                            from: table,
                            to: *t,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Whether table `to` is reachable from `from` along goto edges.
    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.tables.len()];
        let mut stack = vec![from];
        while let Some(t) = stack.pop() {
            if t == to {
                return true;
            }
            if std::mem::replace(&mut seen[t], true) {
                continue;
            }
            let tbl = &self.tables[t];
            for e in tbl.entries.iter().chain(std::iter::once(&tbl.miss)) {
                for a in &e.actions {
                    if let Action::GotoTable(n) = a {
                        stack.push(*n);
                    }
                }
            }
        }
        false
    }

    /// Inserts `entry` after every entry of equal or higher priority. An
    /// entry with identical match and priority has its actions replaced.
    pub fn install(&mut self, entry: FlowEntry) -> Result<(), FlowError> {
        if entry.table >= self.tables.len() {
            return Err(FlowError::UnknownTable(entry.table));
        }
        self.check_actions(entry.table, &entry.actions)?;
        let entries = &mut self.tables[entry.table].entries;
        if let Some(e) = entries
            .iter_mut()
            .find(|e| e.priority == entry.priority && e.matcher == entry.matcher)
        {
            e.actions = entry.actions;
            return Ok(());
        }
        let pos = entries.partition_point(|e| e.priority >= entry.priority);
        entries.insert(pos, entry);
        Ok(())
    }

    pub fn set_miss(&mut self, table: usize, actions: Vec<Action>) -> Result<(), FlowError> {
        if table >= self.tables.len() {
            return Err(FlowError::UnknownTable(table));
        }
        self.check_actions(table, &actions)?;
        self.tables[table].miss.actions = actions;
        Ok(())
    }

    /// Resolves the action list for `pkt`, following goto chains from table
    /// 0 and bumping the counters of every entry hit.
    pub fn match_packet(&mut self, pkt: &Packet) -> Vec<Action> {
        self.processed += 1;
        let mut out = Vec::new();
        self.resolve(0, pkt, &mut out);
        out
    }

    fn resolve(&mut self, table: usize, pkt: &Packet, out: &mut Vec<Action>) {
        self.lookups += 1;
        let tbl = &mut self.tables[table];
        let entry = match tbl.entries.iter_mut().find(|e| e.matcher.matches(pkt)) {
            Some(e) => e,
            None => &mut tbl.miss,
        };
        entry.packets += 1;
        entry.bytes += pkt.payload.len() as u64;
        let actions = entry.actions.clone();
        for a in actions {
            match a {
                Action::GotoTable(t) => self.resolve(t, pkt, out),
                a => out.push(a),
            }
        }
    }
}
