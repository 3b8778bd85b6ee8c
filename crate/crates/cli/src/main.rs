use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use qsdn::config::{self, ConfigError, Scenario};
use qsdn::dispatcher::client::RemoteDispatcher;
use qsdn::dispatcher::server::DispatcherServer;
use qsdn::dispatcher::EventKind;
use qsdn::network::Topology;
use qsdn::runner::{self, EventFilter, TraceFilter};
use qsdn::sdc::SchemeRegistry;
use qsdn::Tick;

#[derive(Parser)]
#[command(name = "qsdn", version, about = "Software-defined quantum network emulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write trace.txt, events.txt and report.txt.
    Run(RunArgs),
    /// Check a topology (and optionally a scenario) without running it.
    Validate {
        /// Topology file; the bundled one when omitted.
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// List quantum events from an events file.
    DumpEvents(DumpEventsArgs),
    /// List packets from a trace file.
    DumpTrace(DumpTraceArgs),
    /// Print the registered dibit encodings.
    Schemes,
    /// Serve the dispatcher over TCP until a client asks it to stop.
    Serve {
        #[arg(long, default_value_t = 7450)]
        dispatcher_port: u16,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Topology file; the bundled one when omitted.
    config: Option<PathBuf>,
    /// Scenario file; the bundled `hello` scenario when omitted.
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use an external dispatcher on 127.0.0.1:PORT instead of an in-process one.
    #[arg(long)]
    dispatcher_port: Option<u16>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DumpEventsArgs {
    file: PathBuf,
    #[arg(long)]
    kind: Option<EventKind>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    since: Option<Tick>,
    #[arg(long)]
    until: Option<Tick>,
    /// Interleave a packet trace; defaults to trace.txt next to FILE.
    #[arg(long, num_args = 0..=1, value_name = "TRACE")]
    correlate: Option<Option<PathBuf>>,
}

#[derive(Args)]
struct DumpTraceArgs {
    file: PathBuf,
    #[arg(long)]
    link: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    /// Only packets from or to this node.
    #[arg(long)]
    node: Option<String>,
    #[arg(long)]
    since: Option<Tick>,
    #[arg(long)]
    until: Option<Tick>,
}

const OK: u8 = 0;
const EXPECTATION: u8 = 1;
const CONFIG: u8 = 2;

fn topology(path: Option<&Path>) -> Result<Topology, ConfigError> {
    match path {
        Some(p) => config::load_topology(p),
        None => Ok(config::bundled_topology()),
    }
}

fn scenario(path: Option<&Path>, topo: &Topology) -> Result<Scenario, ConfigError> {
    match path {
        Some(p) => config::load_scenario(p, topo),
        None => config::parse_scenario(config::BUNDLED_SCENARIO, "hello.toml", topo),
    }
}

fn run(args: RunArgs) -> anyhow::Result<u8> {
    let (topo, scen) = match topology(args.config.as_deref())
        .and_then(|t| scenario(args.scenario.as_deref(), &t).map(|s| (t, s)))
    {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(CONFIG);
        }
    };
    let outcome = match args.dispatcher_port {
        None => runner::run_in_process(&topo, &scen, args.seed),
        Some(port) => {
            let mut s = scen.clone();
            s.seed = args.seed.unwrap_or(s.seed);
            let remote = RemoteDispatcher::connect(("127.0.0.1", port), &topo.dispatcher_config(s.seed))
                .with_context(|| format!("connecting to dispatcher on port {port}"))?;
            runner::run_with(&topo, &s, Box::new(remote))
        }
    }?;
    outcome
        .write_to(&args.out_dir)
        .with_context(|| format!("writing artifacts to {}", args.out_dir.display()))?;
    print!("{}", outcome.report);
    match outcome.failures.first() {
        None => Ok(OK),
        Some(f) => {
            eprintln!("expectation failed: {f}");
            Ok(EXPECTATION)
        }
    }
}

fn validate(config: Option<PathBuf>, scen: Option<PathBuf>) -> u8 {
    let checked = topology(config.as_deref()).and_then(|t| match &scen {
        Some(p) => config::load_scenario(p, &t).map(|s| (t, Some(s))),
        None => Ok((t, None)),
    });
    match checked {
        Ok((t, s)) => {
            println!(
                "valid: {} nodes, {} links, {} channels, {} rotations",
                t.nodes.len(),
                t.links.len(),
                t.channels.len(),
                t.rotations.len()
            );
            if let Some(s) = s {
                println!("scenario: seed {}, {} steps", s.seed, s.steps.len());
            }
            OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            CONFIG
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dump_events(a: DumpEventsArgs) -> anyhow::Result<u8> {
    let events = runner::parse_events(&read(&a.file)?).map_err(anyhow::Error::msg)?;
    let filter = EventFilter {
        kind: a.kind,
        source: a.source,
        since: a.since,
        until: a.until,
    };
    let out = match a.correlate {
        None => runner::format_events(&events, &filter),
        Some(trace) => {
            let path = trace.unwrap_or_else(|| {
                a.file
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(runner::TRACE_FILE)
            });
            let trace = runner::parse_trace(&read(&path)?).map_err(anyhow::Error::msg)?;
            runner::correlate(&events, &trace, &filter)
        }
    };
    print!("{out}");
    Ok(OK)
}

fn dump_trace(a: DumpTraceArgs) -> anyhow::Result<u8> {
    let trace = runner::parse_trace(&read(&a.file)?).map_err(anyhow::Error::msg)?;
    let filter = TraceFilter {
        link: a.link,
        kind: a.kind,
        node: a.node,
        since: a.since,
        until: a.until,
    };
    print!("{}", runner::format_trace(&trace, &filter));
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Validate { config, scenario } => Ok(validate(config, scenario)),
        Cmd::DumpEvents(a) => dump_events(a),
        Cmd::DumpTrace(a) => dump_trace(a),
        Cmd::Schemes => {
            print!("{}", SchemeRegistry::default().dump());
            Ok(OK)
        }
        Cmd::Serve { dispatcher_port } => DispatcherServer::bind(("127.0.0.1", dispatcher_port))
            .and_then(|s| {
                eprintln!("dispatcher listening on {}", s.local_addr()?);
                s.run()
            })
            .map(|_| OK)
            .context("dispatcher server"),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(CONFIG)
        }
    }
}
