//! Stabilizer-tableau simulation of Clifford circuits.
//!
//! The tableau follows the Aaronson-Gottesman layout: for `n` qubits there are
//! `2n` generator rows plus one scratch row. Rows `0..n` are destabilizers,
//! rows `n..2n` are stabilizers, and row `2n` is scratch space used by
//! deterministic measurement. Each row stores its X and Z bits packed into
//! `u64` words and a single sign bit.
//!
//! Phases are only tracked up to the sign of each generator, so global phase is
//! unobservable. `Y` is applied as `Z` followed by `X`.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Index of a qubit inside a tableau.
pub type Qubit = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilizerError {
    #[error("qubit index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: Qubit, n: usize },
    #[error("two-qubit operation needs distinct qubits, got {0} twice")]
    SameQubit(Qubit),
    #[error("measurement is not a unitary gate")]
    NotUnitary,
    #[error("tableau invariant violated: {0}")]
    Invariant(String),
}

/// A Clifford gate or single-qubit Z-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateOp {
    H(Qubit),
    S(Qubit),
    X(Qubit),
    Y(Qubit),
    Z(Qubit),
    Cnot(Qubit, Qubit),
    Measure(Qubit),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    S,
    X,
    Y,
    Z,
    Cnot,
    Measure,
}

impl GateOp {
    pub fn kind(&self) -> GateKind {
        match self {
            GateOp::H(_) => GateKind::H,
            GateOp::S(_) => GateKind::S,
            GateOp::X(_) => GateKind::X,
            GateOp::Y(_) => GateKind::Y,
            GateOp::Z(_) => GateKind::Z,
            GateOp::Cnot(..) => GateKind::Cnot,
            GateOp::Measure(_) => GateKind::Measure,
        }
    }

    pub fn targets(&self) -> Vec<Qubit> {
        match *self {
            GateOp::H(q)
            | GateOp::S(q)
            | GateOp::X(q)
            | GateOp::Y(q)
            | GateOp::Z(q)
            | GateOp::Measure(q) => vec![q],
            GateOp::Cnot(c, t) => vec![c, t],
        }
    }

    /// Checks index bounds and target distinctness against a register of `n` qubits.
    pub fn validate(&self, n: usize) -> Result<(), StabilizerError> {
        for q in self.targets() {
            if q >= n {
                return Err(StabilizerError::IndexOutOfRange { index: q, n });
            }
        }
        if let GateOp::Cnot(c, t) = *self {
            if c == t {
                return Err(StabilizerError::SameQubit(c));
            }
        }
        Ok(())
    }
}

/// Outcome of a single-qubit measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeasurementRecord {
    pub qubit: Qubit,
    pub outcome: bool,
    pub deterministic: bool,
}

/// Outcome of a Bell-basis measurement as the bit pair `(b1, b0)`.
///
/// With the `CNOT(q1, q2); H(q1)` analyzer, `Φ+ → 00`, `Ψ+ → 01`, `Φ− → 10`
/// and `Ψ− → 11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BellOutcome {
    pub b1: bool,
    pub b0: bool,
}

impl BellOutcome {
    pub fn as_bits(&self) -> u8 {
        ((self.b1 as u8) << 1) | self.b0 as u8
    }
}

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    words: usize,
    // 2n + 1 rows each
    x: Vec<Vec<u64>>,
    z: Vec<Vec<u64>>,
    r: Vec<bool>,
}

fn word_count(n: usize) -> usize {
    n.div_ceil(WORD).max(1)
}

#[inline]
fn bit(row: &[u64], q: Qubit) -> bool {
    (row[q / WORD] >> (q % WORD)) & 1 == 1
}

#[inline]
fn set_bit(row: &mut [u64], q: Qubit, v: bool) {
    let mask = 1u64 << (q % WORD);
    if v {
        row[q / WORD] |= mask;
    } else {
        row[q / WORD] &= !mask;
    }
}

impl StabilizerTableau {
    /// Creates the `|0…0⟩` state on `n` qubits.
    pub fn new(n: usize) -> Self {
        let words = word_count(n);
        let rows = 2 * n + 1;
        let mut x = vec![vec![0u64; words]; rows];
        let mut z = vec![vec![0u64; words]; rows];
        for i in 0..n {
            set_bit(&mut x[i], i, true);
            set_bit(&mut z[n + i], i, true);
        }
        Self {
            n,
            words,
            x,
            z,
            r: vec![false; rows],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// Appends `k` fresh qubits in `|0⟩`, unentangled with the existing ones.
    pub fn extend_by(&mut self, k: usize) {
        if k == 0 {
            return;
        }
        let old = self.n;
        let n = old + k;
        let words = word_count(n);
        let rows = 2 * n + 1;
        let mut x = vec![vec![0u64; words]; rows];
        let mut z = vec![vec![0u64; words]; rows];
        let mut r = vec![false; rows];
        for i in 0..old {
            // destabilizer i keeps index i, stabilizer i moves from old+i to n+i
            for (dst, src) in [(i, i), (n + i, old + i)] {
                x[dst][..self.words].copy_from_slice(&self.x[src]);
                z[dst][..self.words].copy_from_slice(&self.z[src]);
                r[dst] = self.r[src];
            }
        }
        for q in old..n {
            set_bit(&mut x[q], q, true);
            set_bit(&mut z[n + q], q, true);
        }
        self.n = n;
        self.words = words;
        self.x = x;
        self.z = z;
        self.r = r;
    }

    fn check(&self, q: Qubit) -> Result<(), StabilizerError> {
        if q >= self.n {
            Err(StabilizerError::IndexOutOfRange { index: q, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Applies a unitary gate by Clifford conjugation of every generator.
    pub fn apply_gate(&mut self, gate: GateOp) -> Result<(), StabilizerError> {
        gate.validate(self.n)?;
        let rows = 2 * self.n;
        match gate {
            GateOp::H(a) => {
                for i in 0..rows {
                    let xa = bit(&self.x[i], a);
                    let za = bit(&self.z[i], a);
                    self.r[i] ^= xa & za;
                    set_bit(&mut self.x[i], a, za);
                    set_bit(&mut self.z[i], a, xa);
                }
            }
            GateOp::S(a) => {
                for i in 0..rows {
                    let xa = bit(&self.x[i], a);
                    let za = bit(&self.z[i], a);
                    self.r[i] ^= xa & za;
                    set_bit(&mut self.z[i], a, za ^ xa);
                }
            }
            GateOp::X(a) => {
                for i in 0..rows {
                    self.r[i] ^= bit(&self.z[i], a);
                }
            }
            GateOp::Z(a) => {
                for i in 0..rows {
                    self.r[i] ^= bit(&self.x[i], a);
                }
            }
            GateOp::Y(a) => {
                for i in 0..rows {
                    self.r[i] ^= bit(&self.x[i], a) ^ bit(&self.z[i], a);
                }
            }
            GateOp::Cnot(a, b) => {
                for i in 0..rows {
                    let xa = bit(&self.x[i], a);
                    let za = bit(&self.z[i], a);
                    let xb = bit(&self.x[i], b);
                    let zb = bit(&self.z[i], b);
                    self.r[i] ^= xa & zb & !(xb ^ za);
                    set_bit(&mut self.x[i], b, xb ^ xa);
                    set_bit(&mut self.z[i], a, za ^ zb);
                }
            }
            GateOp::Measure(_) => return Err(StabilizerError::NotUnitary),
        }
        Ok(())
    }

    /// Phase contribution when multiplying Pauli (x1,z1) into (x2,z2), in units of i.
    fn g(x1: bool, z1: bool, x2: bool, z2: bool) -> i32 {
        match (x1, z1) {
            (false, false) => 0,
            (true, true) => z2 as i32 - x2 as i32,
            (true, false) => z2 as i32 * (2 * x2 as i32 - 1),
            (false, true) => x2 as i32 * (1 - 2 * z2 as i32),
        }
    }

    /// Left-multiplies row `h` by row `i`.
    fn rowsum(&mut self, h: usize, i: usize) {
        let mut sum: i32 = 2 * self.r[h] as i32 + 2 * self.r[i] as i32;
        for q in 0..self.n {
            sum += Self::g(
                bit(&self.x[i], q),
                bit(&self.z[i], q),
                bit(&self.x[h], q),
                bit(&self.z[h], q),
            );
        }
        self.r[h] = sum.rem_euclid(4) == 2;
        for w in 0..self.words {
            let (xi, zi) = (self.x[i][w], self.z[i][w]);
            self.x[h][w] ^= xi;
            self.z[h][w] ^= zi;
        }
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        let (xs, zs) = (self.x[src].clone(), self.z[src].clone());
        self.x[dst] = xs;
        self.z[dst] = zs;
        self.r[dst] = self.r[src];
    }

    fn clear_row(&mut self, row: usize) {
        self.x[row].iter_mut().for_each(|w| *w = 0);
        self.z[row].iter_mut().for_each(|w| *w = 0);
        self.r[row] = false;
    }

    /// Returns the outcome the measurement of `q` would have if it is deterministic.
    pub fn peek_deterministic(&self, q: Qubit) -> Result<Option<bool>, StabilizerError> {
        self.check(q)?;
        let n = self.n;
        if (n..2 * n).any(|p| bit(&self.x[p], q)) {
            return Ok(None);
        }
        let mut scratch = self.clone();
        Ok(Some(scratch.deterministic_outcome(q)))
    }

    fn deterministic_outcome(&mut self, q: Qubit) -> bool {
        let n = self.n;
        let scratch = 2 * n;
        self.clear_row(scratch);
        for i in 0..n {
            if bit(&self.x[i], q) {
                self.rowsum(scratch, i + n);
            }
        }
        self.r[scratch]
    }

    /// Measures `q` in the Z basis, collapsing the state when the outcome is random.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        q: Qubit,
        rng: &mut R,
    ) -> Result<MeasurementRecord, StabilizerError> {
        self.check(q)?;
        let n = self.n;
        if let Some(p) = (n..2 * n).find(|&p| bit(&self.x[p], q)) {
            for i in 0..2 * n {
                if i != p && bit(&self.x[i], q) {
                    self.rowsum(i, p);
                }
            }
            self.copy_row(p - n, p);
            self.clear_row(p);
            set_bit(&mut self.z[p], q, true);
            let outcome: bool = rng.gen();
            self.r[p] = outcome;
            Ok(MeasurementRecord {
                qubit: q,
                outcome,
                deterministic: false,
            })
        } else {
            let outcome = self.deterministic_outcome(q);
            Ok(MeasurementRecord {
                qubit: q,
                outcome,
                deterministic: true,
            })
        }
    }

    /// Joint measurement discriminating the four Bell states of `(q1, q2)`.
    ///
    /// Runs `CNOT(q1, q2); H(q1)` and then measures `q1` into `b1` and `q2` into `b0`.
    pub fn bell_measure<R: Rng + ?Sized>(
        &mut self,
        q1: Qubit,
        q2: Qubit,
        rng: &mut R,
    ) -> Result<BellOutcome, StabilizerError> {
        self.check(q1)?;
        self.check(q2)?;
        if q1 == q2 {
            return Err(StabilizerError::SameQubit(q1));
        }
        self.apply_gate(GateOp::Cnot(q1, q2))?;
        self.apply_gate(GateOp::H(q1))?;
        let b1 = self.measure(q1, rng)?.outcome;
        let b0 = self.measure(q2, rng)?.outcome;
        Ok(BellOutcome { b1, b0 })
    }

    /// Measures `q` and flips it back to `|0⟩`, disentangling it from the rest.
    pub fn reset<R: Rng + ?Sized>(&mut self, q: Qubit, rng: &mut R) -> Result<(), StabilizerError> {
        if self.measure(q, rng)?.outcome {
            self.apply_gate(GateOp::X(q))?;
        }
        Ok(())
    }

    fn symplectic(&self, i: usize, j: usize) -> bool {
        let mut acc = 0u32;
        for w in 0..self.words {
            acc ^= ((self.x[i][w] & self.z[j][w]) ^ (self.z[i][w] & self.x[j][w])).count_ones();
        }
        acc & 1 == 1
    }

    /// Verifies the commutation relations and full rank of the generator set.
    pub fn check_invariants(&self) -> Result<(), StabilizerError> {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                if self.symplectic(n + i, n + j) {
                    return Err(StabilizerError::Invariant(format!(
                        "stabilizers {i} and {j} anticommute"
                    )));
                }
                if self.symplectic(i, j) {
                    return Err(StabilizerError::Invariant(format!(
                        "destabilizers {i} and {j} anticommute"
                    )));
                }
                let anti = self.symplectic(i, n + j);
                if anti != (i == j) {
                    return Err(StabilizerError::Invariant(format!(
                        "destabilizer {i} / stabilizer {j} commutation wrong"
                    )));
                }
            }
        }
        // Rank over GF(2) of the 2n x 2n matrix [x | z].
        let mut rows: Vec<Vec<bool>> = (0..2 * n)
            .map(|i| {
                (0..n)
                    .map(|q| bit(&self.x[i], q))
                    .chain((0..n).map(|q| bit(&self.z[i], q)))
                    .collect()
            })
            .collect();
        let mut rank = 0;
        for col in 0..2 * n {
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col]) else {
                continue;
            };
            rows.swap(rank, pivot);
            for r in 0..rows.len() {
                if r != rank && rows[r][col] {
                    let (a, b) = if r < rank {
                        let (lo, hi) = rows.split_at_mut(rank);
                        (&mut lo[r], &hi[0])
                    } else {
                        let (lo, hi) = rows.split_at_mut(r);
                        (&mut hi[0], &lo[rank])
                    };
                    a.iter_mut().zip(b).for_each(|(x, y)| *x ^= *y);
                }
            }
            rank += 1;
        }
        if rank != 2 * n {
            return Err(StabilizerError::Invariant(format!("rank {rank} < {}", 2 * n)));
        }
        Ok(())
    }
}

impl fmt::Debug for StabilizerTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "StabilizerTableau(n={})", self.n)?;
        for i in 0..2 * self.n {
            let sign = if self.r[i] { '-' } else { '+' };
            let paulis: String = (0..self.n)
                .map(|q| match (bit(&self.x[i], q), bit(&self.z[i], q)) {
                    (false, false) => '.',
                    (true, false) => 'X',
                    (false, true) => 'Z',
                    (true, true) => 'Y',
                })
                .collect();
            let tag = if i < self.n { "D" } else { "S" };
            writeln!(f, "  {tag} {sign}{paulis}")?;
        }
        Ok(())
    }
}

/// A tableau plus a free-list of released slots.
///
/// Released qubits are reset to `|0⟩` and their indices are handed out again
/// (lowest first) before the tableau grows.
#[derive(Debug, Clone)]
pub struct QubitPool {
    tableau: StabilizerTableau,
    free: BTreeSet<Qubit>,
}

impl Default for QubitPool {
    fn default() -> Self {
        Self::new()
    }
}

impl QubitPool {
    pub fn new() -> Self {
        Self {
            tableau: StabilizerTableau::new(0),
            free: BTreeSet::new(),
        }
    }

    pub fn tableau(&self) -> &StabilizerTableau {
        &self.tableau
    }

    pub fn tableau_mut(&mut self) -> &mut StabilizerTableau {
        &mut self.tableau
    }

    pub fn live(&self) -> usize {
        self.tableau.num_qubits() - self.free.len()
    }

    pub fn allocate(&mut self) -> Qubit {
        if let Some(q) = self.free.pop_first() {
            return q;
        }
        let q = self.tableau.num_qubits();
        self.tableau.extend_by(1);
        q
    }

    pub fn release<R: Rng + ?Sized>(&mut self, q: Qubit, rng: &mut R) -> Result<(), StabilizerError> {
        self.tableau.reset(q, rng)?;
        self.free.insert(q);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn fresh_qubits_measure_zero() {
        let mut t = StabilizerTableau::new(2);
        let mut r = rng();
        for q in 0..2 {
            let m = t.measure(q, &mut r).unwrap();
            assert!(!m.outcome && m.deterministic);
        }
        t.check_invariants().unwrap();
    }

    #[test]
    fn empty_tableau_extends() {
        let mut t = StabilizerTableau::new(0);
        t.check_invariants().unwrap();
        t.extend_by(2);
        assert_eq!(t, StabilizerTableau::new(2));
        let mut t = StabilizerTableau::new(0);
        t.extend_by(1);
        assert!(!t.measure(0, &mut rng()).unwrap().outcome);
    }

    #[test]
    fn extend_keeps_bell_pair() {
        let mut t = StabilizerTableau::new(2);
        t.apply_gate(GateOp::H(0)).unwrap();
        t.apply_gate(GateOp::Cnot(0, 1)).unwrap();
        t.extend_by(1);
        t.check_invariants().unwrap();
        let mut r = rng();
        let m = t.measure(2, &mut r).unwrap();
        assert!(!m.outcome && m.deterministic);
        let a = t.measure(0, &mut r).unwrap();
        let b = t.measure(1, &mut r).unwrap();
        assert!(!a.deterministic && b.deterministic);
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn hadamard_is_involution_and_x_flips() {
        let mut t = StabilizerTableau::new(1);
        t.apply_gate(GateOp::H(0)).unwrap();
        t.apply_gate(GateOp::H(0)).unwrap();
        let m = t.measure(0, &mut rng()).unwrap();
        assert!(!m.outcome && m.deterministic);
        t.apply_gate(GateOp::X(0)).unwrap();
        let m = t.measure(0, &mut rng()).unwrap();
        assert!(m.outcome && m.deterministic);
    }

    #[test]
    fn gate_errors() {
        let mut t = StabilizerTableau::new(2);
        assert_eq!(
            t.apply_gate(GateOp::X(2)),
            Err(StabilizerError::IndexOutOfRange { index: 2, n: 2 })
        );
        assert_eq!(t.apply_gate(GateOp::Cnot(1, 1)), Err(StabilizerError::SameQubit(1)));
        assert_eq!(t.apply_gate(GateOp::Measure(0)), Err(StabilizerError::NotUnitary));
        assert!(t.measure(5, &mut rng()).is_err());
        assert_eq!(t.bell_measure(0, 0, &mut rng()), Err(StabilizerError::SameQubit(0)));
    }

    fn bell_with(ops: &[GateOp]) -> BellOutcome {
        let mut t = StabilizerTableau::new(2);
        t.apply_gate(GateOp::H(0)).unwrap();
        t.apply_gate(GateOp::Cnot(0, 1)).unwrap();
        for &g in ops {
            t.apply_gate(g).unwrap();
        }
        t.bell_measure(0, 1, &mut rng()).unwrap()
    }

    #[test]
    fn bell_measure_convention() {
        assert_eq!(bell_with(&[]).as_bits(), 0b00);
        assert_eq!(bell_with(&[GateOp::X(0)]).as_bits(), 0b01);
        assert_eq!(bell_with(&[GateOp::Z(0)]).as_bits(), 0b10);
        assert_eq!(bell_with(&[GateOp::Z(0), GateOp::X(0)]).as_bits(), 0b11);
    }

    #[test]
    fn pool_reuses_released_slots() {
        let mut pool = QubitPool::new();
        let mut r = rng();
        let a = pool.allocate();
        let b = pool.allocate();
        pool.tableau_mut().apply_gate(GateOp::H(a)).unwrap();
        pool.tableau_mut().apply_gate(GateOp::Cnot(a, b)).unwrap();
        pool.release(a, &mut r).unwrap();
        assert_eq!(pool.live(), 1);
        assert_eq!(pool.allocate(), a);
        let m = pool.tableau_mut().measure(a, &mut r).unwrap();
        assert!(!m.outcome && m.deterministic);
        pool.tableau().check_invariants().unwrap();
    }

    #[test]
    fn wide_register_crosses_word_boundary() {
        let mut t = StabilizerTableau::new(70);
        t.apply_gate(GateOp::H(3)).unwrap();
        t.apply_gate(GateOp::Cnot(3, 68)).unwrap();
        t.check_invariants().unwrap();
        let mut r = rng();
        let a = t.measure(68, &mut r).unwrap();
        let b = t.measure(3, &mut r).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert!(b.deterministic);
    }
}
