//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use num_complex::Complex64;
use qsdn::noise::ChannelError;
use qsdn::stabilizer::GateOp;
use rand::Rng;

pub mod net;
pub mod sdc;

const EPS: f64 = 1e-9;

/// Dense statevector over at most a handful of qubits. Qubit `q` is bit `q`
/// of the basis index.
#[derive(Clone, Debug)]
pub struct StateVector {
    pub n: usize,
    pub amp: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amp = vec![Complex64::new(0.0, 0.0); 1 << n];
        amp[0] = Complex64::new(1.0, 0.0);
        Self { n, amp }
    }

    pub fn apply(&mut self, g: GateOp) {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        match g {
            GateOp::H(q) => {
                let m = 1 << q;
                for i in 0..self.amp.len() {
                    if i & m == 0 {
                        let (a, b) = (self.amp[i], self.amp[i | m]);
                        self.amp[i] = (a + b) * inv;
                        self.amp[i | m] = (a - b) * inv;
                    }
                }
            }
            GateOp::S(q) => {
                for (i, a) in self.amp.iter_mut().enumerate() {
                    if i >> q & 1 == 1 {
                        *a *= Complex64::new(0.0, 1.0);
                    }
                }
            }
            GateOp::X(q) => {
                let m = 1 << q;
                for i in 0..self.amp.len() {
                    if i & m == 0 {
                        self.amp.swap(i, i | m);
                    }
                }
            }
            GateOp::Z(q) => {
                for (i, a) in self.amp.iter_mut().enumerate() {
                    if i >> q & 1 == 1 {
                        *a = -*a;
                    }
                }
            }
            GateOp::Y(q) => {
                self.apply(GateOp::Z(q));
                self.apply(GateOp::X(q));
            }
            GateOp::Cnot(c, t) => {
                for i in 0..self.amp.len() {
                    if i >> c & 1 == 1 && i >> t & 1 == 0 {
                        self.amp.swap(i, i | 1 << t);
                    }
                }
            }
            GateOp::Measure(_) => panic!("use prob_one/collapse"),
        }
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        self.amp
            .iter()
            .enumerate()
            .filter(|(i, _)| i >> q & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn collapse(&mut self, q: usize, outcome: bool) {
        let p = if outcome { self.prob_one(q) } else { 1.0 - self.prob_one(q) };
        assert!(p > EPS, "collapse onto zero-probability branch");
        let norm = p.sqrt();
        for (i, a) in self.amp.iter_mut().enumerate() {
            if (i >> q & 1 == 1) != outcome {
                *a = Complex64::new(0.0, 0.0);
            } else {
                *a /= norm;
            }
        }
    }

    /// Outcome of measuring `q` if it is certain.
    pub fn certain(&self, q: usize) -> Option<bool> {
        let p = self.prob_one(q);
        if p < EPS {
            Some(false)
        } else if p > 1.0 - EPS {
            Some(true)
        } else {
            None
        }
    }
}

/// Applies `ops` to `Φ+` on qubits (0, 1), runs the `CNOT(0,1); H(0)` analyzer
/// densely and returns the certain `(b1, b0)` bits as a number.
pub fn oracle_bell_outcome(ops: &[GateOp]) -> u8 {
    let mut sv = StateVector::zero(2);
    sv.apply(GateOp::H(0));
    sv.apply(GateOp::Cnot(0, 1));
    for &g in ops {
        sv.apply(g);
    }
    sv.apply(GateOp::Cnot(0, 1));
    sv.apply(GateOp::H(0));
    let b1 = sv.certain(0).expect("analyzer output on qubit 0 must be certain");
    let b0 = sv.certain(1).expect("analyzer output on qubit 1 must be certain");
    ((b1 as u8) << 1) | b0 as u8
}

/// Standard table operators as gate lists on qubit 0.
pub fn table_ops(dibit: u8) -> Vec<GateOp> {
    match dibit {
        0 => vec![],
        1 => vec![GateOp::X(0)],
        2 => vec![GateOp::Z(0)],
        3 => vec![GateOp::Z(0), GateOp::X(0)],
        _ => unreachable!(),
    }
}

pub fn pauli_gate(e: ChannelError, q: usize) -> Vec<GateOp> {
    match e {
        ChannelError::X => vec![GateOp::X(q)],
        ChannelError::Y => vec![GateOp::Y(q)],
        ChannelError::Z => vec![GateOp::Z(q)],
        _ => vec![],
    }
}

/// Decoded symbol flip caused by Pauli `e` on the transmitted half, derived
/// by dense simulation rather than from the codec.
pub fn oracle_flip(e: ChannelError) -> u8 {
    oracle_bell_outcome(&pauli_gate(e, 0))
}

/// Exact per-symbol error distribution after one traversal of a symmetric
/// Pauli channel with total error `p`: index is the XOR flip.
pub fn single_traversal_flip_dist(p: f64) -> [f64; 4] {
    let mut dist = [0.0; 4];
    dist[0] += 1.0 - p;
    for e in [ChannelError::X, ChannelError::Y, ChannelError::Z] {
        dist[oracle_flip(e) as usize] += p / 3.0;
    }
    dist
}

/// XOR-convolution of two flip distributions (two independent traversals).
pub fn xor_convolve(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i ^ j] += a[i] * b[j];
        }
    }
    out
}

/// Residual symbol error of the repetition-3 code, by brute force over all
/// 4^3 corruption patterns of the three copies.
pub fn fec_residual_error(flip: &[f64; 4]) -> f64 {
    let mut err = 0.0;
    for a in 0..4usize {
        for b in 0..4usize {
            for c in 0..4usize {
                let prob = flip[a] * flip[b] * flip[c];
                let lane = |m: usize| [a, b, c].iter().filter(|&&x| x & m != 0).count() >= 2;
                if lane(2) || lane(1) {
                    err += prob;
                }
            }
        }
    }
    err
}

pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn random_clifford<R: Rng>(rng: &mut R, n: usize, depth: usize) -> Vec<GateOp> {
    (0..depth)
        .map(|_| {
            let q = rng.gen_range(0..n);
            match rng.gen_range(0..if n > 1 { 6 } else { 5 }) {
                0 => GateOp::H(q),
                1 => GateOp::S(q),
                2 => GateOp::X(q),
                3 => GateOp::Y(q),
                4 => GateOp::Z(q),
                _ => {
                    let mut t = rng.gen_range(0..n - 1);
                    if t >= q {
                        t += 1;
                    }
                    GateOp::Cnot(q, t)
                }
            }
        })
        .collect()
}

/// Random program over `n` qubits: Clifford gates with measurements mixed in,
/// ending with a measurement of every qubit.
pub fn random_program<R: Rng>(rng: &mut R, n: usize, depth: usize) -> Vec<GateOp> {
    let mut ops = Vec::new();
    for g in random_clifford(rng, n, depth) {
        ops.push(g);
        if rng.gen_bool(0.15) {
            ops.push(GateOp::Measure(rng.gen_range(0..n)));
        }
    }
    ops.extend((0..n).map(GateOp::Measure));
    ops
}

/// Runs `ops` on a tableau and a dense statevector side by side. Every
/// measurement must have probability in {0, 1/2, 1}, the tableau's
/// determinism flag must agree with the oracle, and deterministic outcomes
/// must match. Returns the number of measurements checked.
pub fn check_against_oracle<R: Rng>(
    n: usize,
    ops: &[GateOp],
    rng: &mut R,
) -> Result<usize, String> {
    use qsdn::stabilizer::StabilizerTableau;
    let mut t = StabilizerTableau::new(n);
    let mut sv = StateVector::zero(n);
    let mut checked = 0;
    for (step, &g) in ops.iter().enumerate() {
        match g {
            GateOp::Measure(q) => {
                let p1 = sv.prob_one(q);
                let on_grid = [0.0, 0.5, 1.0].iter().any(|v| (p1 - v).abs() < EPS);
                if !on_grid {
                    return Err(format!("step {step}: probability {p1} not in {{0, 1/2, 1}}"));
                }
                let rec = t.measure(q, rng).map_err(|e| e.to_string())?;
                match sv.certain(q) {
                    Some(o) if !rec.deterministic || rec.outcome != o => {
                        return Err(format!("step {step}: oracle certain {o}, tableau {rec:?}"));
                    }
                    None if rec.deterministic => {
                        return Err(format!("step {step}: oracle random, tableau deterministic"));
                    }
                    _ => {}
                }
                sv.collapse(q, rec.outcome);
                checked += 1;
            }
            g => {
                t.apply_gate(g).map_err(|e| e.to_string())?;
                sv.apply(g);
            }
        }
        t.check_invariants().map_err(|e| format!("step {step}: {e}"))?;
    }
    Ok(checked)
}
