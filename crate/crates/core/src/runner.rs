//! Scenario execution, run artifacts and the text views over them.

use std::fmt::Write as _;
use std::path::Path;

use crate::classnet::TraceRecord;
use crate::config::{Scenario, Step};
use crate::dispatcher::{Event, EventKind, QuantumService};
use crate::network::{Network, NetworkError, Topology};
use crate::Tick;

pub const TRACE_FILE: &str = "trace.txt";
pub const EVENTS_FILE: &str = "events.txt";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    /// Expectation failures in step order.
    pub failures: Vec<String>,
    pub trace: String,
    pub events: String,
    pub report: String,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(TRACE_FILE), &self.trace)?;
        std::fs::write(dir.join(EVENTS_FILE), &self.events)?;
        std::fs::write(dir.join(REPORT_FILE), &self.report)
    }
}

fn show(bytes: &[u8]) -> String {
    format!("{:?}", String::from_utf8_lossy(bytes))
}

/// Runs `scenario` on a network built around `qs`.
pub fn run_with(
    topo: &Topology,
    scenario: &Scenario,
    qs: Box<dyn QuantumService>,
) -> Result<RunOutcome, NetworkError> {
    let mut net = Network::new(topo, qs)?;
    let mut failures = Vec::new();
    let mut snapshots = String::new();
    for (i, step) in scenario.steps.iter().enumerate() {
        match step {
            Step::Send { from, to, message } => {
                net.send(from, to, message)?;
            }
            Step::Expect { at, from, message } => {
                net.run_until_idle()?;
                match net.recv_from(at, from) {
                    Some(got) if &got == message => {}
                    Some(got) => failures.push(format!(
                        "step {i}: {at} expected {} from {from}, got {}",
                        show(message),
                        show(&got)
                    )),
                    None => failures.push(format!(
                        "step {i}: {at} expected {} from {from}, nothing arrived",
                        show(message)
                    )),
                }
            }
            Step::SetLink { link, up } => net.set_link(link, *up)?,
            Step::DropNext { link, prefix } => net.drop_next(link, prefix)?,
            Step::Wait(t) => net.run_for(*t)?,
            Step::Snapshot(label) => {
                net.run_until_idle()?;
                snapshots.push_str(&net.snapshot(label));
            }
        }
    }
    net.run_until_idle()?;

    let mut trace = String::new();
    for r in net.trace() {
        let _ = writeln!(trace, "{r}");
    }
    let mut events = String::new();
    for e in net.events(true)? {
        let _ = writeln!(events, "{e}");
    }
    let mut report = String::new();
    let _ = writeln!(report, "seed {}", scenario.seed);
    let _ = writeln!(report, "finished t={}", net.now());
    for h in net.hosts() {
        for r in h.app().reports() {
            let _ = writeln!(report, "transfer src={} {r}", h.id);
        }
    }
    report.push_str(&snapshots);
    for f in net.faults() {
        let _ = writeln!(report, "fault {f}");
    }
    if failures.is_empty() {
        let _ = writeln!(report, "result ok");
    } else {
        for f in &failures {
            let _ = writeln!(report, "failure {f}");
        }
    }
    Ok(RunOutcome {
        failures,
        trace,
        events,
        report,
    })
}

/// Runs with an in-process dispatcher seeded from `seed` (or the scenario).
pub fn run_in_process(
    topo: &Topology,
    scenario: &Scenario,
    seed: Option<u64>,
) -> Result<RunOutcome, NetworkError> {
    let mut s = scenario.clone();
    s.seed = seed.unwrap_or(s.seed);
    let d = crate::dispatcher::Dispatcher::new(topo.dispatcher_config(s.seed))?;
    run_with(topo, &s, Box::new(d))
}

// ---- views -----------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub kind: Option<EventKind>,
    pub source: Option<String>,
    pub since: Option<Tick>,
    pub until: Option<Tick>,
}

impl EventFilter {
    fn time_ok(&self, t: Tick) -> bool {
        self.since.is_none_or(|s| t >= s) && self.until.is_none_or(|u| t <= u)
    }

    pub fn accepts(&self, e: &Event) -> bool {
        self.kind.is_none_or(|k| e.kind == k)
            && self.source.as_ref().is_none_or(|s| &e.source == s)
            && self.time_ok(e.timestamp)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceFilter {
    pub link: Option<String>,
    pub kind: Option<String>,
    pub node: Option<String>,
    pub since: Option<Tick>,
    pub until: Option<Tick>,
}

impl TraceFilter {
    pub fn accepts(&self, r: &TraceRecord) -> bool {
        self.link.as_ref().is_none_or(|l| &r.link == l)
            && self.kind.as_ref().is_none_or(|k| r.kind.eq_ignore_ascii_case(k))
            && self.node.as_ref().is_none_or(|n| &r.src == n || &r.dst == n)
            && self.since.is_none_or(|s| r.timestamp >= s)
            && self.until.is_none_or(|u| r.timestamp <= u)
    }
}

fn parse_lines<T: std::str::FromStr<Err = String>>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.parse().map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn parse_events(text: &str) -> Result<Vec<Event>, String> {
    parse_lines(text)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, String> {
    parse_lines(text)
}

fn event_line(e: &Event) -> String {
    let mut s = format!("{:>8}  quantum  #{:<6} {:<12} {}", e.timestamp, e.seq, e.source, e.kind.as_str());
    for (k, v) in &e.payload {
        let _ = write!(s, " {k}={v}");
    }
    s
}

fn trace_line(r: &TraceRecord) -> String {
    let mut s = format!(
        "{:>8}  packet   {:<14} {} -> {} {} {}",
        r.timestamp, r.link, r.src, r.dst, r.kind, r.summary
    );
    if r.dropped {
        s.push_str(" [dropped]");
    }
    s
}

/// Listing of the events accepted by `filter`, ordered by sequence number.
pub fn format_events(events: &[Event], filter: &EventFilter) -> String {
    let mut sel: Vec<&Event> = events.iter().filter(|e| filter.accepts(e)).collect();
    sel.sort_by_key(|e| e.seq);
    sel.into_iter().map(|e| event_line(e) + "\n").collect()
}

pub fn format_trace(trace: &[TraceRecord], filter: &TraceFilter) -> String {
    trace
        .iter()
        .filter(|r| filter.accepts(r))
        .map(|r| trace_line(r) + "\n")
        .collect()
}

/// Packets and quantum events merged on the shared clock. At equal
/// timestamps packets come first, each stream keeping its own order.
pub fn correlate(events: &[Event], trace: &[TraceRecord], filter: &EventFilter) -> String {
    let mut rows: Vec<(Tick, u8, usize, String)> = Vec::new();
    for (i, r) in trace.iter().enumerate() {
        if filter.time_ok(r.timestamp) {
            rows.push((r.timestamp, 0, i, trace_line(r)));
        }
    }
    let mut sel: Vec<&Event> = events.iter().filter(|e| filter.accepts(e)).collect();
    sel.sort_by_key(|e| e.seq);
    for (i, e) in sel.into_iter().enumerate() {
        rows.push((e.timestamp, 1, i, event_line(e)));
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    rows.into_iter().map(|r| r.3 + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{bundled_scenario, bundled_topology};

    #[test]
    fn hello_scenario_passes() {
        let out = run_in_process(&bundled_topology(), &bundled_scenario(), None).unwrap();
        assert!(out.passed(), "{:?}\n{}", out.failures, out.report);
        assert!(out.report.contains("status=delivered"));
    }

    #[test]
    fn empty_inputs_give_empty_views() {
        assert_eq!(format_events(&parse_events("").unwrap(), &EventFilter::default()), "");
        assert_eq!(correlate(&[], &[], &EventFilter::default()), "");
    }
}
