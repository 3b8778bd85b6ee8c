//! Topology and scenario files.
//!
//! Both are TOML. A topology lists `[[nodes]]`, `[[links]]`, `[[channels]]`
//! and `[[rotations]]`, with optional `[host_defaults]` and `[dispatcher]`
//! tables; see `data/topology.toml` for a commented example. A scenario has
//! a `seed` and an ordered `[[steps]]` array, each step one of `send`,
//! `expect`, `inject`, `wait` or `snapshot`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::classnet::{FlowEntry, SwitchState};
use crate::dispatcher::ChannelConfig;
use crate::hostnode::{Granularity, HostSettings};
use crate::network::{LinkSpec, NodeRole, NodeSpec, RotationSpec, Topology};
use crate::noise::{MemoryModel, PauliChannelParams};
use crate::sdc::SchemeRegistry;
use crate::Tick;

pub const BUNDLED_TOPOLOGY: &str = include_str!("../data/topology.toml");
pub const BUNDLED_SCENARIO: &str = include_str!("../data/hello.toml");

/// A problem in a config file, located by field path and line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if !self.path.is_empty() {
            write!(f, ": {}", self.path)?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

struct Source<'a> {
    origin: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].matches('\n').count() + 1
    }

    fn err(&self, span: Option<Range<usize>>, path: impl Into<String>, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.origin.into(),
            line: span.map(|s| self.line(&s)),
            path: path.into(),
            message: msg.into(),
        }
    }

    fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ConfigError> {
        toml::from_str(self.text).map_err(|e| self.err(e.span(), "", e.message().trim().to_string()))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: path.display().to_string(),
        line: None,
        path: String::new(),
        message: e.to_string(),
    })
}

// ---- topology --------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    #[serde(default)]
    dispatcher: RawDispatcher,
    #[serde(default)]
    host_defaults: RawHost,
    #[serde(default)]
    nodes: Vec<Spanned<RawNode>>,
    #[serde(default)]
    links: Vec<Spanned<RawLink>>,
    #[serde(default)]
    channels: Vec<Spanned<RawChannel>>,
    #[serde(default)]
    rotations: Vec<Spanned<RawRotation>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDispatcher {
    #[serde(default)]
    op_tick: Tick,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHost {
    retry_budget: Option<u32>,
    granularity: Option<String>,
    scheme: Option<u32>,
    fec: Option<bool>,
    handshake_timeout: Option<Tick>,
    no_click_timeout: Option<Tick>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: Spanned<String>,
    role: Spanned<String>,
    retry_budget: Option<u32>,
    granularity: Option<String>,
    scheme: Option<u32>,
    fec: Option<bool>,
    handshake_timeout: Option<Tick>,
    no_click_timeout: Option<Tick>,
    tables: Option<usize>,
    #[serde(default)]
    flows: Vec<Spanned<String>>,
}

impl RawNode {
    fn host(&self) -> RawHost {
        RawHost {
            retry_budget: self.retry_budget,
            granularity: self.granularity.clone(),
            scheme: self.scheme,
            fec: self.fec,
            handshake_timeout: self.handshake_timeout,
            no_click_timeout: self.no_click_timeout,
        }
    }

    fn has_host_fields(&self) -> bool {
        self.retry_budget.is_some()
            || self.granularity.is_some()
            || self.scheme.is_some()
            || self.fec.is_some()
            || self.handshake_timeout.is_some()
            || self.no_click_timeout.is_some()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    name: Option<String>,
    a: Spanned<String>,
    b: Spanned<String>,
    #[serde(default = "one_tick")]
    latency: Tick,
}

fn one_tick() -> Tick {
    1
}

fn default_depth() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    id: Spanned<String>,
    a: Spanned<String>,
    b: Spanned<String>,
    #[serde(default = "one_tick")]
    latency: Tick,
    #[serde(default = "default_depth")]
    depth: usize,
    noise: Option<Spanned<PauliChannelParams>>,
    memory: Option<Spanned<MemoryModel>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRotation {
    switch: Spanned<String>,
    from: Spanned<String>,
    to: Spanned<String>,
    rotation: Spanned<String>,
}

fn settings(base: &HostSettings, raw: &RawHost) -> Result<HostSettings, String> {
    let mut s = base.clone();
    if let Some(v) = raw.retry_budget {
        s.retry_budget = v;
    }
    if let Some(v) = &raw.granularity {
        s.granularity = v.parse::<Granularity>()?;
    }
    if let Some(v) = raw.scheme {
        if !SchemeRegistry::default().contains(v) {
            return Err(format!("scheme {v} is not registered"));
        }
        s.scheme = v;
    }
    if let Some(v) = raw.fec {
        s.fec = v;
    }
    if let Some(v) = raw.handshake_timeout {
        s.handshake_timeout = v;
    }
    if let Some(v) = raw.no_click_timeout {
        s.no_click_timeout = v;
    }
    if s.handshake_timeout == 0 || s.no_click_timeout == 0 {
        return Err("timeouts must be at least one tick".into());
    }
    Ok(s)
}

const ROLES: [&str; 5] = ["host", "cswitch", "qswitch", "controller", "dispatcher"];

pub fn parse_topology(text: &str, origin: &str) -> Result<Topology, ConfigError> {
    let src = Source { origin, text };
    let raw: RawTopology = src.parse()?;
    let defaults = settings(&HostSettings::default(), &raw.host_defaults)
        .map_err(|m| src.err(None, "host_defaults", m))?;

    let mut nodes = Vec::new();
    let mut roles: BTreeMap<String, &'static str> = BTreeMap::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        let at = |f: &str| format!("nodes[{i}].{f}");
        let n_span = n.span();
        let n = n.get_ref();
        let id = n.id.get_ref().clone();
        let role = ROLES
            .into_iter()
            .find(|r| *r == n.role.get_ref())
            .ok_or_else(|| {
                src.err(
                    Some(n.role.span()),
                    at("role"),
                    format!("unknown role `{}`; expected one of {}", n.role.get_ref(), ROLES.join(", ")),
                )
            })?;
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '=') {
            return Err(src.err(Some(n.id.span()), at("id"), format!("invalid node id `{id}`")));
        }
        if roles.insert(id.clone(), role).is_some() {
            return Err(src.err(Some(n.id.span()), at("id"), format!("duplicate node id `{id}`")));
        }
        if role != "host" && n.has_host_fields() {
            return Err(src.err(Some(n_span.clone()), at("role"), "host settings on a non-host node"));
        }
        if role != "cswitch" && (n.tables.is_some() || !n.flows.is_empty()) {
            return Err(src.err(Some(n_span.clone()), at("flows"), "flow tables on a non-switch node"));
        }
        let role = match role {
            "host" => NodeRole::Host(
                settings(&defaults, &n.host()).map_err(|m| src.err(Some(n_span.clone()), at("role"), m))?,
            ),
            "cswitch" => {
                let tables = n.tables.unwrap_or(1);
                if tables == 0 {
                    return Err(src.err(Some(n_span.clone()), at("tables"), "need at least one table"));
                }
                let mut probe = SwitchState::new(&id, tables, Vec::new());
                let mut flows = Vec::new();
                for (j, f) in n.flows.iter().enumerate() {
                    let e = f
                        .get_ref()
                        .parse::<FlowEntry>()
                        .and_then(|e| probe.install(e.clone()).map(|_| e))
                        .map_err(|e| src.err(Some(f.span()), at(&format!("flows[{j}]")), e.to_string()))?;
                    flows.push(e);
                }
                NodeRole::CSwitch { tables, flows }
            }
            "qswitch" => NodeRole::QSwitch,
            "controller" => NodeRole::Controller,
            _ => NodeRole::Dispatcher,
        };
        nodes.push(NodeSpec { id, role });
    }
    for (role, word) in [("controller", "controller"), ("dispatcher", "dispatcher")] {
        let count = roles.values().filter(|r| **r == role).count();
        if count != 1 {
            return Err(src.err(None, "nodes", format!("exactly one {word} required, found {count}")));
        }
    }
    if roles.values().filter(|r| **r == "qswitch").count() > 1 {
        return Err(src.err(None, "nodes", "at most one qswitch is supported"));
    }

    let mut links = Vec::new();
    let mut names = BTreeSet::new();
    let mut degree: BTreeMap<String, usize> = BTreeMap::new();
    // union-find over classical nodes; a merge of connected nodes is a loop
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    fn find(p: &mut BTreeMap<String, String>, x: &str) -> String {
        let up = p.get(x).cloned().unwrap_or_else(|| x.to_string());
        if up == x {
            return up;
        }
        let r = find(p, &up);
        p.insert(x.to_string(), r.clone());
        r
    }
    for (i, l) in raw.links.iter().enumerate() {
        let l_span = l.span();
        let l = l.get_ref();
        for (f, end) in [("a", &l.a), ("b", &l.b)] {
            let path = format!("links[{i}].{f}");
            match roles.get(end.get_ref()) {
                None => {
                    return Err(src.err(
                        Some(end.span()),
                        path,
                        format!("unknown node `{}`", end.get_ref()),
                    ))
                }
                Some(&r @ ("controller" | "dispatcher")) => {
                    return Err(src.err(Some(end.span()), path, format!("a {r} has no data-plane links")))
                }
                Some(&r) => {
                    let d = degree.entry(end.get_ref().clone()).or_default();
                    *d += 1;
                    if r != "cswitch" && *d > 1 {
                        return Err(src.err(
                            Some(end.span()),
                            path,
                            format!("`{}` may have only one classical link", end.get_ref()),
                        ));
                    }
                }
            }
        }
        if l.a.get_ref() == l.b.get_ref() {
            return Err(src.err(Some(l_span), format!("links[{i}]"), "link connects a node to itself"));
        }
        let (ra, rb) = (find(&mut parent, l.a.get_ref()), find(&mut parent, l.b.get_ref()));
        if ra == rb {
            return Err(src.err(Some(l_span), format!("links[{i}]"), "classical links form a loop"));
        }
        parent.insert(ra, rb);
        let mut spec = LinkSpec::new(l.a.get_ref(), l.b.get_ref(), l.latency);
        if let Some(n) = &l.name {
            spec.name = n.clone();
        }
        if !names.insert(spec.name.clone()) {
            return Err(src.err(Some(l_span), format!("links[{i}].name"), format!("duplicate link `{}`", spec.name)));
        }
        links.push(spec);
    }

    let mut channels = Vec::new();
    let mut channel_ids = BTreeSet::new();
    let mut qdegree: BTreeMap<String, usize> = BTreeMap::new();
    for (i, c) in raw.channels.iter().enumerate() {
        let c = c.get_ref();
        let at = |f: &str| format!("channels[{i}].{f}");
        if !channel_ids.insert(c.id.get_ref().clone()) {
            return Err(src.err(Some(c.id.span()), at("id"), format!("duplicate channel `{}`", c.id.get_ref())));
        }
        for (f, end) in [("a", &c.a), ("b", &c.b)] {
            match roles.get(end.get_ref()) {
                None => {
                    return Err(src.err(Some(end.span()), at(f), format!("unknown node `{}`", end.get_ref())))
                }
                Some(&"host") => {
                    let d = qdegree.entry(end.get_ref().clone()).or_default();
                    *d += 1;
                    if *d > 1 {
                        return Err(src.err(
                            Some(end.span()),
                            at(f),
                            format!("host `{}` already has a quantum channel", end.get_ref()),
                        ));
                    }
                }
                Some(&"qswitch") => {}
                Some(r) => {
                    return Err(src.err(Some(end.span()), at(f), format!("a {r} cannot terminate a quantum channel")))
                }
            }
        }
        if c.a.get_ref() == c.b.get_ref() {
            return Err(src.err(Some(c.a.span()), at("b"), "channel connects a node to itself"));
        }
        let noise = c.noise.as_ref().map(|n| *n.get_ref()).unwrap_or_default();
        let memory = c.memory.as_ref().map(|m| *m.get_ref()).unwrap_or_default();
        let span_of = |s: Option<Range<usize>>| s.or(Some(c.id.span()));
        noise
            .validate()
            .map_err(|e| src.err(span_of(c.noise.as_ref().map(|n| n.span())), at("noise"), e.to_string()))?;
        memory
            .validate()
            .map_err(|e| src.err(span_of(c.memory.as_ref().map(|m| m.span())), at("memory"), e.to_string()))?;
        if c.depth == 0 {
            return Err(src.err(Some(c.id.span()), at("depth"), "history depth must be at least 1"));
        }
        channels.push(ChannelConfig {
            id: c.id.get_ref().clone(),
            a: c.a.get_ref().clone(),
            b: c.b.get_ref().clone(),
            base_noise: noise,
            memory,
            depth: c.depth,
            latency: c.latency,
        });
    }

    let mut rotations = Vec::new();
    for (i, r) in raw.rotations.iter().enumerate() {
        let r = r.get_ref();
        let at = |f: &str| format!("rotations[{i}].{f}");
        if roles.get(r.switch.get_ref()) != Some(&"qswitch") {
            return Err(src.err(Some(r.switch.span()), at("switch"), format!("`{}` is not a qswitch", r.switch.get_ref())));
        }
        for (f, ch) in [("from", &r.from), ("to", &r.to)] {
            let ok = channels
                .iter()
                .any(|c| &c.id == ch.get_ref() && c.peer_of(r.switch.get_ref()).is_some());
            if !ok {
                return Err(src.err(
                    Some(ch.span()),
                    at(f),
                    format!("`{}` is not a channel of `{}`", ch.get_ref(), r.switch.get_ref()),
                ));
            }
        }
        let rotation = r
            .rotation
            .get_ref()
            .parse()
            .map_err(|m: String| src.err(Some(r.rotation.span()), at("rotation"), m))?;
        rotations.push(RotationSpec {
            switch: r.switch.get_ref().clone(),
            from: r.from.get_ref().clone(),
            to: r.to.get_ref().clone(),
            rotation,
        });
    }

    Ok(Topology {
        nodes,
        links,
        channels,
        rotations,
        op_tick: raw.dispatcher.op_tick,
    })
}

pub fn load_topology(path: &Path) -> Result<Topology, ConfigError> {
    parse_topology(&read(path)?, &path.display().to_string())
}

pub fn bundled_topology() -> Topology {
    parse_topology(BUNDLED_TOPOLOGY, "topology.toml").expect("bundled topology is valid")
}

// ---- scenario --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Send { from: String, to: String, message: Vec<u8> },
    /// Runs to quiescence, then checks `at` received `message` from `from`.
    Expect { at: String, from: String, message: Vec<u8> },
    SetLink { link: String, up: bool },
    DropNext { link: String, prefix: String },
    Wait(Tick),
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub steps: Vec<Step>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    steps: Vec<Spanned<RawStep>>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawStep {
    Send { from: String, to: String, message: String },
    Expect { at: String, from: String, message: String },
    Inject {
        link: String,
        state: Option<String>,
        drop_next: Option<String>,
    },
    Wait(Tick),
    Snapshot(String),
}

/// Parses a scenario and checks it against `topo`.
pub fn parse_scenario(text: &str, origin: &str, topo: &Topology) -> Result<Scenario, ConfigError> {
    let src = Source { origin, text };
    let raw: RawScenario = src.parse()?;
    let is_host = |id: &str| topo.hosts().any(|h| h.id == id);
    let mut sent = BTreeSet::new();
    let mut steps = Vec::new();
    for (i, s) in raw.steps.iter().enumerate() {
        let span = Some(s.span());
        let path = format!("steps[{i}]");
        let hosts_exist = |ids: &[&String]| -> Result<(), ConfigError> {
            for id in ids {
                if !is_host(id) {
                    return Err(src.err(span.clone(), path.clone(), format!("`{id}` is not a host")));
                }
            }
            Ok(())
        };
        let step = match s.get_ref() {
            RawStep::Send { from, to, message } => {
                hosts_exist(&[from, to])?;
                sent.insert((from.clone(), to.clone(), message.clone()));
                Step::Send {
                    from: from.clone(),
                    to: to.clone(),
                    message: message.clone().into_bytes(),
                }
            }
            RawStep::Expect { at, from, message } => {
                hosts_exist(&[at, from])?;
                if !sent.contains(&(from.clone(), at.clone(), message.clone())) {
                    return Err(src.err(span, path, "expect does not match an earlier send"));
                }
                Step::Expect {
                    at: at.clone(),
                    from: from.clone(),
                    message: message.clone().into_bytes(),
                }
            }
            RawStep::Inject { link, state, drop_next } => {
                if !topo.links.iter().any(|l| &l.name == link) {
                    return Err(src.err(span, path, format!("unknown link `{link}`")));
                }
                match (state.as_deref(), drop_next) {
                    (Some("down"), None) => Step::SetLink { link: link.clone(), up: false },
                    (Some("up"), None) => Step::SetLink { link: link.clone(), up: true },
                    (None, Some(p)) => Step::DropNext { link: link.clone(), prefix: p.clone() },
                    _ => {
                        return Err(src.err(
                            span,
                            path,
                            "inject needs exactly one of state = \"down\"|\"up\" or drop_next",
                        ))
                    }
                }
            }
            RawStep::Wait(t) => Step::Wait(*t),
            RawStep::Snapshot(l) => Step::Snapshot(l.clone()),
        };
        steps.push(step);
    }
    Ok(Scenario {
        seed: raw.seed,
        steps,
    })
}

pub fn load_scenario(path: &Path, topo: &Topology) -> Result<Scenario, ConfigError> {
    parse_scenario(&read(path)?, &path.display().to_string(), topo)
}

pub fn bundled_scenario() -> Scenario {
    parse_scenario(BUNDLED_SCENARIO, "hello.toml", &bundled_topology()).expect("bundled scenario is valid")
}
