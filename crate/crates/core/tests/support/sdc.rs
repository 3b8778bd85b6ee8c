//! Pre-shared pair harness: the idle half reaches bob over a noiseless
//! direct channel, only the encoded half crosses the channel under test.

use std::collections::BTreeMap;

use qsdn::classnet::PathSetup;
use qsdn::dispatcher::{
    ChannelConfig, Dispatcher, DispatcherConfig, LocalOp, QuantumService, SessionId,
    TransmitOutcome,
};
use qsdn::noise::{ChannelError, NoiseModel, PauliChannelParams};
use qsdn::qswitch::{QPort, QSwitch, Rotation};
use qsdn::sdc::{Dibit, EncodingScheme, Operator};
use qsdn::Tick;

/// Noise model that applies the same error on every transmission.
#[derive(Debug, Clone, Copy)]
pub struct Always(pub ChannelError);

impl NoiseModel for Always {
    fn effective_params(
        &self,
        _base: &PauliChannelParams,
        _history: &mut dyn Iterator<Item = Tick>,
        _now: Tick,
    ) -> PauliChannelParams {
        let mut p = PauliChannelParams::NOISELESS;
        match self.0 {
            ChannelError::X => p.p_x = 1.0,
            ChannelError::Y => p.p_y = 1.0,
            ChannelError::Z => p.p_z = 1.0,
            ChannelError::Loss => p.p_loss = 1.0,
            ChannelError::None => {}
        }
        p
    }
}

pub struct PreShared {
    pub d: Dispatcher,
    alice: SessionId,
    bob: SessionId,
    switch: Option<QSwitch>,
    t: Tick,
}

impl PreShared {
    /// Encoded half over channel `q` (alice-bob) with `noise`.
    pub fn direct(noise: PauliChannelParams, seed: u64) -> Self {
        Self::build(
            vec![ChannelConfig::noiseless("q", "alice", "bob").with_noise(noise)],
            None,
            seed,
        )
    }

    /// Encoded half through quantum switch `qs` whose alice-to-bob path
    /// applies `rotation`.
    pub fn via_switch(rotation: Rotation, seed: u64) -> Self {
        let channels = vec![
            ChannelConfig::noiseless("qa", "alice", "qs"),
            ChannelConfig::noiseless("qb", "qs", "bob"),
        ];
        let ports = BTreeMap::from([
            (1, QPort { channel: "qa".into(), peer: "alice".into() }),
            (2, QPort { channel: "qb".into(), peer: "bob".into() }),
        ]);
        let mut sw = QSwitch::new("qs", ports);
        sw.set_rotation(1, 2, rotation);
        Self::build(channels, Some(sw), seed)
    }

    fn build(mut channels: Vec<ChannelConfig>, switch: Option<QSwitch>, seed: u64) -> Self {
        channels.push(ChannelConfig::noiseless("pre", "alice", "bob"));
        let mut d = Dispatcher::new(DispatcherConfig { seed, op_tick: 0, channels }).unwrap();
        let alice = d.register_client("alice", 0).unwrap();
        let bob = d.register_client("bob", 0).unwrap();
        let switch = switch.map(|mut sw| {
            sw.attach(&mut d, 0).unwrap();
            let notice = sw
                .configure_path(&PathSetup {
                    qswitch: "qs".into(),
                    session_id: 1,
                    in_qport: 1,
                    out_qport: 2,
                    notify: "bob".into(),
                    pair_count: 1,
                    encoding_scheme: 1,
                    timestamp: 0,
                })
                .unwrap();
            assert_eq!(notice.rotation, sw.rotation(1, 2));
            sw
        });
        Self { d, alice, bob, switch, t: 0 }
    }

    /// One symbol end to end; `None` when the encoded half is lost. With
    /// `compensate` bob undoes the switch rotation before measuring.
    pub fn send(&mut self, scheme: &EncodingScheme, dibit: Dibit, compensate: bool) -> Option<Dibit> {
        self.t += 1;
        let t = self.t;
        let (a, b) = (self.alice, self.bob);
        let (enc, idle) = self.d.create_entangled_pair(a, "pre", "bob", t).unwrap();
        assert_eq!(self.d.transmit(a, idle.id, "pre", "bob", t).unwrap(), TransmitOutcome::Delivered);
        let ops: &[LocalOp] = match scheme.encode(dibit) {
            Operator::I => &[],
            Operator::X => &[LocalOp::X],
            Operator::Z => &[LocalOp::Z],
            Operator::XZ => &[LocalOp::Z, LocalOp::X],
        };
        for &op in ops {
            self.d.apply_local(a, enc.id, op, t).unwrap();
        }
        let mut rotation = Rotation::I;
        let delivered = match &mut self.switch {
            None => self.d.transmit(a, enc.id, "q", "bob", t).unwrap(),
            Some(sw) => match self.d.transmit(a, enc.id, "qa", "qs", t).unwrap() {
                TransmitOutcome::Lost => TransmitOutcome::Lost,
                TransmitOutcome::Delivered => {
                    let f = sw.route(&mut self.d, enc.id, 1, t).unwrap();
                    rotation = f.rotation;
                    f.outcome
                }
            },
        };
        if delivered == TransmitOutcome::Lost {
            self.d.discard(b, idle.id, qsdn::dispatcher::LossCause::Discarded, t).unwrap();
            return None;
        }
        if compensate && rotation != Rotation::I {
            self.d.apply_local(b, enc.id, rotation.local_op(), t).unwrap();
        }
        let m = self.d.joint_measure(b, enc.id, idle.id, t).unwrap();
        Some(scheme.decode(Dibit::from(m)))
    }

    /// Sends `symbols` and counts wrong decodes; losses are not counted.
    pub fn error_count(&mut self, scheme: &EncodingScheme, symbols: &[Dibit]) -> (usize, usize) {
        let mut wrong = 0;
        let mut arrived = 0;
        for &s in symbols {
            if let Some(got) = self.send(scheme, s, true) {
                arrived += 1;
                wrong += usize::from(got != s);
            }
        }
        (wrong, arrived)
    }
}
