use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use qsdn::config::BUNDLED_TOPOLOGY;
use qsdn::dispatcher::client::RemoteDispatcher;

fn qsdn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsdn")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qsdn(&args)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bundled_run_succeeds_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("result ok"));
    for f in ["trace.txt", "events.txt", "report.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), stdout(&o));
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--seed", "99"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("seed 99\n"));
}

#[test]
fn unmet_expectation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let lossy = BUNDLED_TOPOLOGY.replacen(
        "id = \"q-bob\"",
        "id = \"q-bob\"\nnoise = { p_x = 0.0, p_y = 0.0, p_z = 0.0, p_loss = 1.0 }",
        1,
    );
    let topo = write(dir.path(), "lossy.toml", &lossy);
    let o = run_into(&dir.path().join("out"), &[&topo]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("expectation failed"));
    assert!(stdout(&o).contains("retry-budget-exhausted"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &BUNDLED_TOPOLOGY.replacen("b = \"s1\"", "b = \"nowhere\"", 1));
    let o = run_into(dir.path(), &[&bad]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.toml:"), "{}", stderr(&o));

    let topo = write(dir.path(), "t.toml", BUNDLED_TOPOLOGY);
    let scen = write(dir.path(), "s.toml", "seed = 1\n[[steps]]\nsend = { from = \"zed\", to = \"bob\", message = \"x\" }\n");
    assert_eq!(code(&run_into(dir.path(), &[&topo, &scen])), 2);
    assert_eq!(code(&run_into(dir.path(), &["/no/such/topology.toml"])), 2);
}

#[test]
fn validate_reports_without_running() {
    let o = qsdn(&["validate"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("valid: 7 nodes, 4 links, 3 channels, 3 rotations"));

    let dir = tempfile::tempdir().unwrap();
    let two = write(dir.path(), "two.toml", &format!("{BUNDLED_TOPOLOGY}\n[[nodes]]\nid = \"c2\"\nrole = \"controller\"\n"));
    let o = qsdn(&["validate", &two]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("controller"));

    let topo = write(dir.path(), "t.toml", BUNDLED_TOPOLOGY);
    let scen = write(dir.path(), "s.toml", "seed = 3\n[[steps]]\nwait = 4\n");
    let o = qsdn(&["validate", &topo, "--scenario", &scen]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("scenario: seed 3, 1 steps"));
}

#[test]
fn dump_views_filter_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_into(dir.path(), &[])), 0);
    let events = dir.path().join("events.txt");
    let trace = dir.path().join("trace.txt");
    let ev = events.to_str().unwrap();

    let o = qsdn(&["dump-events", ev, "--kind", "MEASURED"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(!out.is_empty() && out.lines().all(|l| l.contains("MEASURED")));

    let o = qsdn(&["dump-events", ev, "--source", "qs1", "--since", "10", "--until", "60"]);
    assert!(stdout(&o).lines().all(|l| l.contains(" qs1 ")));

    let merged = stdout(&qsdn(&["dump-events", ev, "--correlate"]));
    let explicit = stdout(&qsdn(&["dump-events", ev, "--correlate", trace.to_str().unwrap()]));
    assert_eq!(merged, explicit);
    assert!(merged.contains(" packet ") && merged.contains(" quantum "));
    let stamps: Vec<u64> = merged.lines().map(|l| l.split_whitespace().next().unwrap().parse().unwrap()).collect();
    assert!(stamps.windows(2).all(|w| w[0] <= w[1]));

    let o = qsdn(&["dump-trace", trace.to_str().unwrap(), "--link", "bob-s1", "--kind", "handshake"]);
    assert_eq!(stdout(&o).lines().count(), 6);
    let o = qsdn(&["dump-trace", trace.to_str().unwrap(), "--node", "controller"]);
    assert!(stdout(&o).lines().all(|l| l.contains("controller")));

    let empty = write(dir.path(), "empty.txt", "");
    let o = qsdn(&["dump-events", &empty]);
    assert_eq!((code(&o), stdout(&o)), (0, String::new()));
    assert_eq!(code(&qsdn(&["dump-trace", ev])), 2, "events are not a trace");
    assert_eq!(code(&qsdn(&["dump-events", "/no/such/events.txt"])), 2);
}

#[test]
fn schemes_lists_both_tables() {
    let o = qsdn(&["schemes"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("scheme 1") && out.contains("scheme 2"));
    assert!(out.contains("11    XZ  Psi-   11"));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn external_dispatcher_matches_in_process() {
    let port = free_port();
    let mut server = Command::new(env!("CARGO_BIN_EXE_qsdn"))
        .args(["serve", "--dispatcher-port", &port.to_string()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    let local = tempfile::tempdir().unwrap();
    let remote = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_into(local.path(), &[])), 0);
    let o = run_into(remote.path(), &["--dispatcher-port", &port.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["trace.txt", "events.txt", "report.txt"] {
        let a = std::fs::read(local.path().join(f)).unwrap();
        let b = std::fs::read(remote.path().join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    RemoteDispatcher::attach(("127.0.0.1", port)).unwrap().shutdown_server().unwrap();
    assert!(server.wait().unwrap().success());
}

#[test]
fn unreachable_dispatcher_is_reported() {
    let port = free_port();
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--dispatcher-port", &port.to_string()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("connecting to dispatcher"));
}
