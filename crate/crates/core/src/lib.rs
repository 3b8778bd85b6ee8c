//! Emulation of a programmable quantum network: classical hosts and
//! flow-table switches, a learning controller that relays quantum metadata to
//! a quantum switch, and a dispatcher service owning all quantum state.

pub mod circuit;
pub mod classnet;
pub mod config;
pub mod dispatcher;
pub mod hostnode;
pub mod network;
pub mod noise;
pub mod qswitch;
pub mod rng;
pub mod runner;
pub mod sdc;
pub mod sched;
pub mod stabilizer;

/// Simulated time in logical ticks.
pub type Tick = u64;
