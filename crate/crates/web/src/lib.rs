//! Browser bindings: run a message across the bundled network, run a
//! scenario, list encoding schemes. Every entry point returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qsdn::config;
use qsdn::network::Network;
use qsdn::noise::PauliChannelParams;
use qsdn::runner;
use qsdn::sdc::{self, SchemeRegistry};

/// One symbol as the receiver saw it.
#[derive(Debug, Serialize)]
pub struct Symbol {
    pub sent: String,
    pub received: String,
    pub op: String,
}

#[derive(Debug, Serialize)]
pub struct Delivery {
    pub delivered: Option<String>,
    pub report: String,
    pub symbols: Vec<Symbol>,
    pub symbol_errors: usize,
    pub trace: Vec<String>,
    pub event_count: usize,
}

#[derive(Debug, Serialize)]
pub struct ScenarioRun {
    pub passed: bool,
    pub failures: Vec<String>,
    pub report: String,
    pub trace: String,
    pub events: String,
}

#[derive(Debug, Clone, Copy)]
pub struct Knobs {
    pub scheme: u32,
    pub depolarizing: f64,
    pub loss: f64,
    pub fec: bool,
    pub seed: u64,
}

/// Sends `message` from alice to bob over the bundled topology, with the
/// noise applied to bob's quantum channel.
pub fn deliver(message: &str, k: Knobs) -> Result<Delivery, String> {
    let mut topo = config::bundled_topology();
    let mut noise = PauliChannelParams::depolarizing(k.depolarizing);
    noise.p_loss = k.loss;
    noise.validate().map_err(|e| e.to_string())?;
    if !SchemeRegistry::default().contains(k.scheme) {
        return Err(format!("scheme {} is not registered", k.scheme));
    }
    topo.channel_mut("q-bob").ok_or("bundled topology lacks q-bob")?.base_noise = noise;
    for n in &mut topo.nodes {
        if let qsdn::network::NodeRole::Host(s) = &mut n.role {
            s.scheme = k.scheme;
            s.fec = k.fec;
            s.retry_budget = 32;
        }
    }
    let mut net = Network::in_process(&topo, k.seed).map_err(|e| e.to_string())?;
    let id = net.send("alice", "bob", message.as_bytes()).map_err(|e| e.to_string())?;
    net.run_until_idle().map_err(|e| e.to_string())?;
    let report = net.report("alice", id).map(|r| r.to_string()).unwrap_or_default();
    let got = net.recv_from("bob", "alice");
    let sent = sdc::bytes_to_dibits(message.as_bytes());
    let received = got.as_deref().map(sdc::bytes_to_dibits).unwrap_or_default();
    let reg = SchemeRegistry::default();
    let symbols: Vec<Symbol> = sent
        .iter()
        .enumerate()
        .map(|(i, d)| Symbol {
            sent: d.to_string(),
            received: received.get(i).map_or("--".into(), |r| r.to_string()),
            op: reg.encode(k.scheme, *d).map(|o| o.as_str().to_string()).unwrap_or_default(),
        })
        .collect();
    let symbol_errors = symbols.iter().filter(|s| s.sent != s.received).count();
    let event_count = net.events(false).map_err(|e| e.to_string())?.len();
    Ok(Delivery {
        delivered: got.map(|b| String::from_utf8_lossy(&b).into_owned()),
        report,
        symbols,
        symbol_errors,
        trace: net.trace().iter().map(|r| r.to_string()).collect(),
        event_count,
    })
}

pub fn scenario(topology: &str, scenario: &str, seed: Option<u64>) -> Result<ScenarioRun, String> {
    let topo = config::parse_topology(topology, "topology").map_err(|e| e.to_string())?;
    let scen = config::parse_scenario(scenario, "scenario", &topo).map_err(|e| e.to_string())?;
    let out = runner::run_in_process(&topo, &scen, seed).map_err(|e| e.to_string())?;
    Ok(ScenarioRun {
        passed: out.passed(),
        failures: out.failures,
        report: out.report,
        trace: out.trace,
        events: out.events,
    })
}

fn json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::json!({ "ok": true, "value": v }).to_string(),
        Err(e) => serde_json::json!({ "ok": false, "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn send_message(message: &str, scheme: u32, depolarizing: f64, loss: f64, fec: bool, seed: u32) -> String {
    let k = Knobs {
        scheme,
        depolarizing,
        loss,
        fec,
        seed: seed.into(),
    };
    json(deliver(message, k))
}

/// `seed < 0` keeps the scenario's own seed.
#[wasm_bindgen]
pub fn run_scenario(topology: &str, scenario_text: &str, seed: f64) -> String {
    let seed = (seed >= 0.0).then_some(seed as u64);
    json(scenario(topology, scenario_text, seed))
}

#[wasm_bindgen]
pub fn schemes() -> String {
    SchemeRegistry::default().dump()
}

#[wasm_bindgen]
pub fn bundled_topology() -> String {
    config::BUNDLED_TOPOLOGY.to_string()
}

#[wasm_bindgen]
pub fn bundled_scenario() -> String {
    config::BUNDLED_SCENARIO.to_string()
}
