//! Small topologies and helpers for driving a whole network.

use qsdn::classnet::TraceRecord;
use qsdn::config::bundled_topology;
use qsdn::dispatcher::ChannelConfig;
use qsdn::hostnode::app::TransferReport;
use qsdn::hostnode::HostSettings;
use qsdn::network::{LinkSpec, Network, NodeRole, NodeSpec, Topology};
use qsdn::noise::PauliChannelParams;

fn node(id: &str, role: NodeRole) -> NodeSpec {
    NodeSpec { id: id.into(), role }
}

pub fn host(id: &str) -> NodeSpec {
    node(id, NodeRole::Host(HostSettings::default()))
}

pub fn cswitch(id: &str) -> NodeSpec {
    node(id, NodeRole::CSwitch { tables: 1, flows: Vec::new() })
}

pub fn infra() -> Vec<NodeSpec> {
    vec![node("controller", NodeRole::Controller), node("dispatcher", NodeRole::Dispatcher)]
}

/// alice and bob on one switch, joined by a direct quantum channel `q-ab`.
pub fn direct_pair(noise: PauliChannelParams) -> Topology {
    let mut nodes = vec![host("alice"), host("bob"), cswitch("s1")];
    nodes.extend(infra());
    Topology {
        nodes,
        links: vec![LinkSpec::new("alice", "s1", 1), LinkSpec::new("bob", "s1", 1)],
        channels: vec![ChannelConfig::noiseless("q-ab", "alice", "bob").with_noise(noise)],
        rotations: Vec::new(),
        op_tick: 0,
    }
}

pub fn bundled() -> Topology {
    bundled_topology()
}

pub fn set_all_hosts(topo: &mut Topology, f: impl Fn(&mut HostSettings)) {
    for n in &mut topo.nodes {
        if let NodeRole::Host(s) = &mut n.role {
            f(s);
        }
    }
}

/// Sends one message, runs to quiescence and returns the sender's report
/// and what the receiver got.
pub fn transfer(net: &mut Network, src: &str, dst: &str, body: &[u8]) -> (TransferReport, Option<Vec<u8>>) {
    let id = net.send(src, dst, body).unwrap();
    net.run_until_idle().unwrap();
    let report = net.report(src, id).unwrap().clone();
    (report, net.recv_from(dst, src))
}

pub fn on_link<'a>(trace: &'a [TraceRecord], link: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
    trace.iter().filter(move |r| r.link == link)
}

/// Delivered records on `link` whose payload starts with `word`.
pub fn count_word(trace: &[TraceRecord], link: &str, word: &str) -> usize {
    on_link(trace, link)
        .filter(|r| !r.dropped && r.summary.split(' ').next() == Some(word))
        .count()
}
