//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

mod support;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use qsdn::config;
use qsdn::dispatcher::client::RemoteDispatcher;
use qsdn::dispatcher::server::DispatcherServer;
use qsdn::dispatcher::{EventKind, QuantumService};
use qsdn::hostnode::app::TransferStatus;
use qsdn::network::Network;
use qsdn::noise::PauliChannelParams;
use qsdn::qswitch::Rotation;
use qsdn::runner;
use qsdn::sdc::{self, Dibit, EncodingScheme, SchemeRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::net::{bundled, set_all_hosts, transfer};
use support::sdc::PreShared;
use support::*;

/// Statistical tolerance for every Monte-Carlo check, in binomial or
/// standard-error sigmas.
const SIGMAS: f64 = 3.0;
const CALIBRATION_N: usize = 10_000;
const FIDELITY_DIBITS: usize = 10_000;
const FIDELITY_BUDGET: Duration = Duration::from_secs(30);
const CIRCUITS: usize = 1000;
const LOSS_TRIALS: u64 = 10;
const LOSS_BUDGET: u32 = 64;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

fn table_fidelity() -> Outcome {
    let start = Instant::now();
    let hosts = ["alice", "bob", "charlie"];
    // 0b00011011 carries every dibit once
    let all_four = [0b0001_1011u8];
    let mut exhaustive = 0;
    for scheme in SchemeRegistry::default().iter() {
        let mut topo = bundled();
        set_all_hosts(&mut topo, |s| s.scheme = scheme.id);
        let mut net = Network::in_process(&topo, 1).map_err(|e| e.to_string())?;
        for a in hosts {
            for b in hosts.iter().filter(|&&b| b != a) {
                let (r, got) = transfer(&mut net, a, b, &all_four);
                ensure(got.as_deref() == Some(&all_four[..]) && r.decode_mismatches == 0, || {
                    format!("scheme {} {a}->{b}: {r}", scheme.id)
                })?;
                exhaustive += 1;
            }
        }
    }
    let body = random_bytes(FIDELITY_DIBITS / 4, 2024);
    let mut net = Network::in_process(&bundled(), 2).map_err(|e| e.to_string())?;
    let (r, got) = transfer(&mut net, "alice", "bob", &body);
    let got = got.ok_or_else(|| format!("nothing delivered: {r}"))?;
    let errors = sdc::bytes_to_dibits(&got)
        .iter()
        .zip(sdc::bytes_to_dibits(&body))
        .filter(|(a, b)| **a != *b)
        .count();
    let took = start.elapsed();
    ensure(errors == 0 && r.decode_mismatches == 0, || format!("{errors} dibit errors"))?;
    ensure(r.dibits_sent == FIDELITY_DIBITS, || format!("{r}"))?;
    ensure(took < FIDELITY_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{exhaustive} exhaustive transfers (all host pairs, all schemes), {FIDELITY_DIBITS} random dibits with 0 errors in {:.1}s",
        took.as_secs_f64()
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc);
    let mut measured = 0;
    for i in 0..CIRCUITS {
        let n = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=40);
        let ops = random_program(&mut rng, n, depth);
        measured += check_against_oracle(n, &ops, &mut rng).map_err(|e| format!("circuit {i}: {e}"))?;
    }
    Ok(format!("{CIRCUITS} circuits, {measured} measurements agree with the statevector"))
}

fn noise_calibration() -> Outcome {
    let std = EncodingScheme::standard();
    let mut rates = Vec::new();
    for (i, p) in [0.03, 0.09, 0.3].into_iter().enumerate() {
        // every non-identity Pauli must flip the decoded symbol
        let want = 1.0 - single_traversal_flip_dist(p)[0];
        let symbols: Vec<Dibit> = random_bytes(CALIBRATION_N, 30 + i as u64)
            .into_iter()
            .map(Dibit::from_bits)
            .collect();
        let mut link = PreShared::direct(PauliChannelParams::depolarizing(p), 300 + i as u64);
        let (wrong, n) = link.error_count(&std, &symbols);
        let rate = wrong as f64 / n as f64;
        let tol = SIGMAS * binomial_sigma(want, n);
        ensure((rate - want).abs() <= tol, || format!("p={p}: measured {rate:.4}, want {want:.4} ± {tol:.4}"))?;
        rates.push(format!("p={p}: {rate:.4}"));
    }
    Ok(rates.join(", "))
}

fn fec_gain() -> Outcome {
    let p = 0.1;
    let std = EncodingScheme::standard();
    let data: Vec<Dibit> = random_bytes(CALIBRATION_N, 41).into_iter().map(Dibit::from_bits).collect();
    let mut plain_link = PreShared::direct(PauliChannelParams::depolarizing(p), 400);
    let (plain_wrong, n) = plain_link.error_count(&std, &data);
    let plain = plain_wrong as f64 / n as f64;

    let mut link = PreShared::direct(PauliChannelParams::depolarizing(p), 401);
    let received: Vec<Dibit> = sdc::fec_encode(&data)
        .into_iter()
        .map(|s| link.send(&std, s, true).ok_or("unexpected loss"))
        .collect::<Result<_, _>>()?;
    let decoded = sdc::fec_decode(&received).map_err(|e| e.to_string())?;
    let coded = decoded.iter().zip(&data).filter(|(a, b)| a != b).count() as f64 / data.len() as f64;
    let want = fec_residual_error(&single_traversal_flip_dist(p));
    let tol = SIGMAS * binomial_sigma(want, data.len());
    ensure(coded < plain, || format!("coded {coded:.4} not below plain {plain:.4}"))?;
    ensure((coded - want).abs() <= tol, || format!("coded {coded:.4}, oracle {want:.4} ± {tol:.4}"))?;
    Ok(format!("p={p}: unprotected {plain:.4}, repetition-3 {coded:.4} (oracle {want:.4})"))
}

fn sdn_behaviour() -> Outcome {
    // (a) learning quiescence for the alice/bob pair
    let mut net = Network::in_process(&bundled(), 5).map_err(|e| e.to_string())?;
    let (r, _) = transfer(&mut net, "alice", "bob", b"quiescence");
    ensure(r.status == TransferStatus::Delivered, || format!("{r}"))?;
    transfer(&mut net, "bob", "alice", b"and back");
    let trace = net.trace();
    let pair = |src: &str, dst: &str| {
        (src == "alice" && dst == "bob") || (src == "bob" && dst == "alice")
    };
    let pair_packets: Vec<&str> = trace
        .iter()
        .filter(|t| t.link == "alice-s1" || t.link == "bob-s1")
        .filter(|t| pair(&t.src, &t.dst) && t.link.starts_with(&t.src))
        .map(|t| t.summary.as_str())
        .collect();
    let learning_ins: Vec<_> = trace
        .iter()
        .filter(|t| t.kind == "PACKET_IN" && pair(&t.src, &t.dst) && !t.summary.starts_with("QMETA"))
        .collect();
    ensure(learning_ins.len() <= 2, || format!("{} learning packet-ins", learning_ins.len()))?;
    ensure(
        learning_ins.iter().zip(&pair_packets).all(|(i, p)| i.summary.ends_with(p)),
        || "packet-ins beyond the first two pair packets".into(),
    )?;

    // (b) one path setup per QOPEN, all quantum forwarding inside a setup window
    let mut net = Network::in_process(&bundled(), 6).map_err(|e| e.to_string())?;
    for (a, b) in [("alice", "bob"), ("bob", "charlie"), ("charlie", "alice"), ("alice", "charlie")] {
        transfer(&mut net, a, b, b"metadata");
    }
    let trace = net.trace().to_vec();
    let sid_of = |s: &str| s.split(' ').find_map(|w| w.strip_prefix("sid=")).map(str::to_string);
    let mut setups: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut windows = Vec::new();
    let mut open_at = BTreeMap::new();
    for t in &trace {
        match t.kind.as_str() {
            "PATH_SETUP" => {
                let sid = sid_of(&t.summary).unwrap_or_default();
                setups.entry(sid.clone()).or_default().push(t.timestamp);
                open_at.insert(sid, t.timestamp);
            }
            "TEARDOWN" => {
                let sid = sid_of(&t.summary).unwrap_or_default();
                if let Some(o) = open_at.remove(&sid) {
                    windows.push((o, t.timestamp));
                }
            }
            _ => {}
        }
    }
    let qopens: Vec<String> = trace
        .iter()
        .filter(|t| t.summary.starts_with("QOPEN") && !t.link.starts_with("ctl:") && t.link.starts_with(&t.src))
        .filter_map(|t| sid_of(&t.summary))
        .collect();
    ensure(qopens.len() == 4, || format!("{} QOPENs", qopens.len()))?;
    for sid in &qopens {
        let n = setups.get(sid).map_or(0, Vec::len);
        ensure(n == 1, || format!("session {sid}: {n} path setups"))?;
    }
    let events = net.events(true).map_err(|e| e.to_string())?;
    let routed: Vec<u64> = events
        .iter()
        .filter(|e| e.kind == EventKind::Transmit && e.source == "qs1")
        .map(|e| e.timestamp)
        .collect();
    ensure(!routed.is_empty(), || "no qubits routed".into())?;
    ensure(
        routed.iter().all(|&t| windows.iter().any(|&(a, b)| a < t && t <= b)),
        || "qubit routed outside a configured path".into(),
    )?;
    ensure(
        !events.iter().any(|e| e.kind == EventKind::Loss && e.get("cause") == Some("no-path")),
        || "no-path loss in a normal run".into(),
    )?;

    // (c) a switch without a path logs the loss
    use qsdn::dispatcher::{ChannelConfig, Dispatcher, DispatcherConfig, LossCause, TransmitOutcome};
    use qsdn::qswitch::{QPort, QSwitch, QSwitchError};
    let channels = vec![
        ChannelConfig::noiseless("qa", "alice", "qs"),
        ChannelConfig::noiseless("qb", "qs", "bob"),
    ];
    let mut d = Dispatcher::new(DispatcherConfig { seed: 1, op_tick: 0, channels }).map_err(|e| e.to_string())?;
    let a = d.register_client("alice", 0).map_err(|e| e.to_string())?;
    let mut sw = QSwitch::new(
        "qs",
        BTreeMap::from([
            (1, QPort { channel: "qa".into(), peer: "alice".into() }),
            (2, QPort { channel: "qb".into(), peer: "bob".into() }),
        ]),
    );
    sw.attach(&mut d, 0).map_err(|e| e.to_string())?;
    let (x, y) = d.create_entangled_pair(a, "qa", "qs", 1).map_err(|e| e.to_string())?;
    d.discard(a, y.id, LossCause::Discarded, 1).map_err(|e| e.to_string())?;
    ensure(d.transmit(a, x.id, "qa", "qs", 1) == Ok(TransmitOutcome::Delivered), || "setup".into())?;
    let routed = sw.route(&mut d, x.id, 1, 2);
    ensure(matches!(routed, Err(QSwitchError::NoPath(1))), || format!("route gave {routed:?}"))?;
    let logged = d
        .events()
        .iter()
        .any(|e| e.kind == EventKind::Loss && e.get("cause") == Some("no-path") && e.get("qubit") == Some(&x.id.to_string()));
    ensure(logged && !d.qubit(x.id).map_err(|e| e.to_string())?.alive, || "no-path loss not logged".into())?;
    Ok(format!(
        "{} learning packet-ins for the pair; 4 QOPEN -> 4 path setups, {} routed qubits in window; unrouted qubit logged no-path",
        learning_ins.len(),
        routed_count(&events)
    ))
}

fn routed_count(events: &[qsdn::dispatcher::Event]) -> usize {
    events.iter().filter(|e| e.kind == EventKind::Transmit && e.source == "qs1").count()
}

fn rotation_compensation() -> Outcome {
    let std = EncodingScheme::standard();
    let mut cases = 0;
    for r in Rotation::ALL {
        let flip = oracle_flip(r.as_error());
        for d in Dibit::ALL {
            let mut link = PreShared::via_switch(r, 60 + cases);
            let fixed = link.send(&std, d, true);
            ensure(fixed == Some(d), || format!("{r} {d}: compensated gave {fixed:?}"))?;
            let raw = link.send(&std, d, false).ok_or("lost")?;
            ensure(raw.bits() == d.bits() ^ flip, || format!("{r} {d}: uncompensated gave {raw}"))?;
            cases += 1;
        }
    }
    let nontrivial = Rotation::ALL.iter().filter(|r| oracle_flip(r.as_error()) != 0).count();
    ensure(nontrivial == 3, || "identity check".into())?;
    Ok(format!("{cases} cases decode with compensation and flip by the predicted XOR without"))
}

fn determinism() -> Outcome {
    let mut topo = bundled();
    topo.channel_mut("q-bob").ok_or("q-bob")?.base_noise = PauliChannelParams::depolarizing(0.1);
    topo.channel_mut("q-alice").ok_or("q-alice")?.base_noise = PauliChannelParams::lossy(0.2);
    set_all_hosts(&mut topo, |s| s.retry_budget = 32);
    let scen = config::bundled_scenario();
    let a = runner::run_in_process(&topo, &scen, None).map_err(|e| e.to_string())?;
    let b = runner::run_in_process(&topo, &scen, None).map_err(|e| e.to_string())?;
    ensure(a.trace == b.trace && a.events == b.events && a.report == b.report, || "runs differ".into())?;
    let events = runner::parse_events(&a.events)?;
    ensure(
        events.windows(2).all(|w| w[0].seq < w[1].seq && w[0].timestamp <= w[1].timestamp),
        || "event order violated".into(),
    )?;
    let trace = runner::parse_trace(&a.trace)?;
    ensure(trace.windows(2).all(|w| w[0].timestamp <= w[1].timestamp), || "trace order".into())?;

    let server = DispatcherServer::bind("127.0.0.1:0").map_err(|e| e.to_string())?.spawn().map_err(|e| e.to_string())?;
    let remote = RemoteDispatcher::connect(server.addr(), &topo.dispatcher_config(scen.seed)).map_err(|e| e.to_string())?;
    let ext = runner::run_with(&topo, &scen, Box::new(remote)).map_err(|e| e.to_string())?;
    server.shutdown();
    ensure(ext == a, || "external dispatcher run differs".into())?;
    Ok(format!(
        "{} trace lines and {} events identical across runs and across in-process/external dispatchers",
        trace.len(),
        events.len()
    ))
}

fn loss_recovery() -> Outcome {
    let p_loss: f64 = 0.5;
    // both halves cross the lossy channel
    let s = (1.0 - p_loss) * (1.0 - p_loss);
    let mean = (1.0 - s) / s;
    let var = (1.0 - s) / (s * s);
    let dibits = 100usize;
    let mut total = 0u64;
    for trial in 0..LOSS_TRIALS {
        let mut topo = bundled();
        topo.channel_mut("q-bob").ok_or("q-bob")?.base_noise = PauliChannelParams::lossy(p_loss);
        set_all_hosts(&mut topo, |h| h.retry_budget = LOSS_BUDGET);
        let mut net = Network::in_process(&topo, 800 + trial).map_err(|e| e.to_string())?;
        let body = random_bytes(dibits / 4, trial);
        let (r, got) = transfer(&mut net, "alice", "bob", &body);
        ensure(got.as_deref() == Some(&body[..]), || format!("trial {trial}: {r}"))?;
        ensure(r.losses == r.retransmissions, || format!("trial {trial}: {r}"))?;
        total += r.retransmissions;
    }
    let n = (LOSS_TRIALS as usize * dibits) as f64;
    let per_dibit = total as f64 / n;
    let tol = SIGMAS * (var / n).sqrt();
    ensure((per_dibit - mean).abs() <= tol, || {
        format!("{per_dibit:.3} retransmissions per dibit, predicted {mean:.3} ± {tol:.3}")
    })?;
    Ok(format!(
        "{LOSS_TRIALS} messages of {dibits} dibits intact; {per_dibit:.3} retransmissions per dibit, predicted {mean:.3} ± {tol:.3}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("table fidelity", table_fidelity),
        ("stabilizer oracle equivalence", oracle_equivalence),
        ("noise calibration", noise_calibration),
        ("fec gain", fec_gain),
        ("sdn behaviour", sdn_behaviour),
        ("rotation compensation", rotation_compensation),
        ("determinism and ordering", determinism),
        ("loss recovery", loss_recovery),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
