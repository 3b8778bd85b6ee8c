mod support;

use std::collections::BTreeMap;

use qsdn::classnet::PathSetup;
use qsdn::dispatcher::{
    ChannelConfig, Dispatcher, DispatcherConfig, EventKind, QuantumService, SessionId,
    TransmitOutcome,
};
use qsdn::network::Network;
use qsdn::qswitch::{QPort, QSwitch, QSwitchError, Rotation};
use support::net::{bundled, transfer};

fn rig() -> (Dispatcher, QSwitch, SessionId) {
    let channels = vec![
        ChannelConfig::noiseless("qa", "alice", "qs"),
        ChannelConfig::noiseless("qb", "qs", "bob"),
    ];
    let mut d = Dispatcher::new(DispatcherConfig { seed: 1, op_tick: 0, channels }).unwrap();
    let alice = d.register_client("alice", 0).unwrap();
    d.register_client("bob", 0).unwrap();
    let ports = BTreeMap::from([
        (1, QPort { channel: "qa".into(), peer: "alice".into() }),
        (2, QPort { channel: "qb".into(), peer: "bob".into() }),
    ]);
    let mut sw = QSwitch::new("qs", ports);
    sw.set_rotation(1, 2, Rotation::Y);
    sw.attach(&mut d, 0).unwrap();
    (d, sw, alice)
}

fn setup(sid: u64, in_qport: u32, out_qport: u32) -> PathSetup {
    PathSetup {
        qswitch: "qs".into(),
        session_id: sid,
        in_qport,
        out_qport,
        notify: "bob".into(),
        pair_count: 4,
        encoding_scheme: 1,
        timestamp: 0,
    }
}

/// Sends a fresh half from alice into the switch and returns its id.
fn inbound(d: &mut Dispatcher, alice: SessionId) -> qsdn::dispatcher::QubitId {
    let (x, y) = d.create_entangled_pair(alice, "qa", "qs", 1).unwrap();
    d.discard(alice, y.id, qsdn::dispatcher::LossCause::Discarded, 1).unwrap();
    assert_eq!(d.transmit(alice, x.id, "qa", "qs", 1).unwrap(), TransmitOutcome::Delivered);
    x.id
}

#[test]
fn no_path_is_a_logged_loss() {
    let (mut d, mut sw, alice) = rig();
    let q = inbound(&mut d, alice);
    assert!(matches!(sw.route(&mut d, q, 1, 2), Err(QSwitchError::NoPath(1))));
    assert!(!d.qubit(q).unwrap().alive);
    let loss = d.events().iter().rev().find(|e| e.kind == EventKind::Loss).unwrap();
    assert_eq!(loss.get("cause"), Some("no-path"));
    assert_eq!(loss.source, "qs");
    assert_eq!(loss.get("qubit"), Some(q.to_string().as_str()));
}

#[test]
fn configured_path_forwards_with_its_rotation_until_torn_down() {
    let (mut d, mut sw, alice) = rig();
    let notice = sw.configure_path(&setup(5, 1, 2)).unwrap();
    assert_eq!((notice.session_id, notice.rotation, notice.to.as_str()), (5, Rotation::Y, "bob"));
    let q = inbound(&mut d, alice);
    let f = sw.route(&mut d, q, 1, 2).unwrap();
    assert_eq!((f.outcome, f.channel.as_str(), f.dest.as_str(), f.rotation), (TransmitOutcome::Delivered, "qb", "bob", Rotation::Y));
    assert_eq!(d.qubit(q).unwrap().owner, "bob");
    let op = d.events().iter().rev().find(|e| e.kind == EventKind::OpApplied).unwrap();
    assert_eq!((op.source.as_str(), op.get("op")), ("qs", Some("Y")));

    // the reverse direction has its own (identity) rotation and no path yet
    let back = sw.configure_path(&setup(6, 2, 1)).unwrap();
    assert_eq!(back.rotation, Rotation::I);
    assert_eq!(sw.paths().count(), 2);

    assert_eq!(sw.teardown(5).unwrap().session_id, 5);
    assert!(matches!(sw.teardown(5), Err(QSwitchError::UnknownSession(5))));
    let q = inbound(&mut d, alice);
    assert!(matches!(sw.route(&mut d, q, 1, 3), Err(QSwitchError::NoPath(1))));
}

#[test]
fn ports_are_held_by_one_session() {
    let (_d, mut sw, _) = rig();
    sw.configure_path(&setup(5, 1, 2)).unwrap();
    sw.configure_path(&setup(5, 1, 2)).unwrap();
    assert!(matches!(sw.configure_path(&setup(6, 1, 2)), Err(QSwitchError::PortConflict { port: 1, holder: 5 })));
    assert!(matches!(sw.configure_path(&setup(7, 1, 9)), Err(QSwitchError::UnknownPort(9))));
}

#[test]
fn detached_switch_cannot_route() {
    let (mut d, _, alice) = rig();
    let mut loose = QSwitch::new("qs2", BTreeMap::new());
    let q = inbound(&mut d, alice);
    assert!(matches!(loose.route(&mut d, q, 1, 2), Err(QSwitchError::Detached)));
}

#[test]
fn switch_never_measures_in_the_network() {
    let mut net = Network::in_process(&bundled(), 3).unwrap();
    transfer(&mut net, "alice", "bob", b"through the switch");
    transfer(&mut net, "charlie", "alice", b"and back");
    let events = net.events(true).unwrap();
    let measured: Vec<_> = events.iter().filter(|e| e.kind == EventKind::Measured).collect();
    assert!(!measured.is_empty());
    assert!(measured.iter().all(|e| e.source != "qs1"));
    assert!(events.iter().any(|e| e.kind == EventKind::Transmit && e.source == "qs1"));
    // rotations from the topology are applied by the switch
    assert!(events.iter().any(|e| e.kind == EventKind::OpApplied && e.source == "qs1"));
    let sw = net.qswitch("qs1").unwrap();
    assert_eq!(sw.paths().count(), 0, "paths are torn down on close");
}
