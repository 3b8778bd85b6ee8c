//! Superdense-coding codec: dibit/operator tables, outcome decoding and a
//! repetition-3 classical code.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::noise::ChannelError;
use crate::stabilizer::{BellOutcome, GateOp, Qubit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdcError {
    #[error("unknown encoding scheme {0}")]
    UnknownScheme(u32),
    #[error("scheme {0} is not a bijection")]
    NotBijective(u32),
    #[error("repetition decode needs a multiple of 3 symbols, got {0}")]
    BadLength(usize),
    #[error("symbol stream of {0} dibits does not fill whole bytes")]
    PartialByte(usize),
}

/// A two-bit symbol `b1 b0`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Dibit(u8);

impl Dibit {
    pub const ALL: [Dibit; 4] = [Dibit(0), Dibit(1), Dibit(2), Dibit(3)];

    pub fn new(b1: bool, b0: bool) -> Self {
        Dibit(((b1 as u8) << 1) | b0 as u8)
    }

    /// Low two bits of `v`.
    pub fn from_bits(v: u8) -> Self {
        Dibit(v & 0b11)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn b1(self) -> bool {
        self.0 & 0b10 != 0
    }

    pub fn b0(self) -> bool {
        self.0 & 0b01 != 0
    }
}

impl std::ops::BitXor for Dibit {
    type Output = Dibit;
    fn bitxor(self, rhs: Dibit) -> Dibit {
        Dibit(self.0 ^ rhs.0)
    }
}

impl From<BellOutcome> for Dibit {
    fn from(m: BellOutcome) -> Self {
        Dibit::new(m.b1, m.b0)
    }
}

impl fmt::Debug for Dibit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02b}", self.0)
    }
}

impl fmt::Display for Dibit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02b}", self.0)
    }
}

/// Local encoding operator applied to the sender's half of a `Φ+` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    I,
    X,
    Z,
    /// `Z` first, then `X`.
    XZ,
}

impl Operator {
    pub fn gates(self, q: Qubit) -> Vec<GateOp> {
        match self {
            Operator::I => vec![],
            Operator::X => vec![GateOp::X(q)],
            Operator::Z => vec![GateOp::Z(q)],
            Operator::XZ => vec![GateOp::Z(q), GateOp::X(q)],
        }
    }

    /// Analyzer outcome produced when this operator acts on `Φ+`.
    pub fn bell_outcome(self) -> Dibit {
        match self {
            Operator::I => Dibit(0b00),
            Operator::X => Dibit(0b01),
            Operator::Z => Dibit(0b10),
            Operator::XZ => Dibit(0b11),
        }
    }

    pub fn bell_state(self) -> &'static str {
        match self {
            Operator::I => "Phi+",
            Operator::X => "Psi+",
            Operator::Z => "Phi-",
            Operator::XZ => "Psi-",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::I => "I",
            Operator::X => "X",
            Operator::Z => "Z",
            Operator::XZ => "XZ",
        }
    }
}

/// The dibit flip a Pauli error on either half of a Bell pair induces on the
/// decoded symbol.
pub fn pauli_flip(e: ChannelError) -> Dibit {
    match e {
        ChannelError::X => Dibit(0b01),
        ChannelError::Z => Dibit(0b10),
        ChannelError::Y => Dibit(0b11),
        ChannelError::None | ChannelError::Loss => Dibit(0b00),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingScheme {
    pub id: u32,
    encode: [Operator; 4],
    decode: [Dibit; 4],
}

impl EncodingScheme {
    /// Builds a scheme from the operator assigned to each dibit; the outcome
    /// map is derived as its inverse.
    pub fn from_operators(id: u32, encode: [Operator; 4]) -> Result<Self, SdcError> {
        let mut decode = [None; 4];
        for d in Dibit::ALL {
            let slot = &mut decode[encode[d.0 as usize].bell_outcome().0 as usize];
            if slot.is_some() {
                return Err(SdcError::NotBijective(id));
            }
            *slot = Some(d);
        }
        Ok(Self {
            id,
            encode,
            decode: decode.map(|d| d.expect("bijection checked")),
        })
    }

    /// The dibit/operator table: `00→I`, `01→X`, `10→Z`, `11→XZ`.
    pub fn standard() -> Self {
        Self::from_operators(1, [Operator::I, Operator::X, Operator::Z, Operator::XZ])
            .expect("standard table is bijective")
    }

    pub fn encode(&self, d: Dibit) -> Operator {
        self.encode[d.0 as usize]
    }

    pub fn decode(&self, m: Dibit) -> Dibit {
        self.decode[m.0 as usize]
    }
}

#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<u32, EncodingScheme>,
}

impl Default for SchemeRegistry {
    /// Scheme 1 is the standard table; scheme 2 is a permutation of it.
    fn default() -> Self {
        let mut r = Self {
            schemes: BTreeMap::new(),
        };
        r.register(EncodingScheme::standard());
        r.register(
            EncodingScheme::from_operators(2, [Operator::X, Operator::I, Operator::XZ, Operator::Z])
                .expect("permuted table is bijective"),
        );
        r
    }
}

impl SchemeRegistry {
    pub fn register(&mut self, scheme: EncodingScheme) {
        self.schemes.insert(scheme.id, scheme);
    }

    pub fn get(&self, id: u32) -> Result<&EncodingScheme, SdcError> {
        self.schemes.get(&id).ok_or(SdcError::UnknownScheme(id))
    }

    pub fn contains(&self, id: u32) -> bool {
        self.schemes.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EncodingScheme> {
        self.schemes.values()
    }

    pub fn encode(&self, id: u32, d: Dibit) -> Result<Operator, SdcError> {
        Ok(self.get(id)?.encode(d))
    }

    pub fn decode(&self, id: u32, m: Dibit) -> Result<Dibit, SdcError> {
        Ok(self.get(id)?.decode(m))
    }

    /// Text table of every scheme, one row per dibit.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in self.iter() {
            out.push_str(&format!("scheme {}\n", s.id));
            out.push_str("  b1b0  op  state  outcome\n");
            for d in Dibit::ALL {
                let op = s.encode(d);
                out.push_str(&format!(
                    "  {d}    {:<3} {:<6} {}\n",
                    op.as_str(),
                    op.bell_state(),
                    op.bell_outcome()
                ));
            }
        }
        out
    }
}

/// Splits bytes into dibits, most significant pair first.
pub fn bytes_to_dibits(bytes: &[u8]) -> Vec<Dibit> {
    bytes
        .iter()
        .flat_map(|&b| [6u8, 4, 2, 0].map(|s| Dibit::from_bits(b >> s)))
        .collect()
}

pub fn dibits_to_bytes(dibits: &[Dibit]) -> Result<Vec<u8>, SdcError> {
    if dibits.len() % 4 != 0 {
        return Err(SdcError::PartialByte(dibits.len()));
    }
    Ok(dibits
        .chunks(4)
        .map(|c| c.iter().fold(0u8, |acc, d| (acc << 2) | d.0))
        .collect())
}

pub fn fec_encode(dibits: &[Dibit]) -> Vec<Dibit> {
    dibits.iter().flat_map(|&d| [d, d, d]).collect()
}

/// Majority vote per bit lane over each consecutive triple.
pub fn fec_decode(dibits: &[Dibit]) -> Result<Vec<Dibit>, SdcError> {
    if dibits.len() % 3 != 0 {
        return Err(SdcError::BadLength(dibits.len()));
    }
    Ok(dibits
        .chunks(3)
        .map(|c| {
            let lane = |mask: u8| c.iter().filter(|d| d.0 & mask != 0).count() >= 2;
            Dibit::new(lane(0b10), lane(0b01))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table() {
        let s = EncodingScheme::standard();
        assert_eq!(s.encode(Dibit::from_bits(0b00)), Operator::I);
        assert_eq!(s.encode(Dibit::from_bits(0b01)), Operator::X);
        assert_eq!(s.encode(Dibit::from_bits(0b10)), Operator::Z);
        assert_eq!(s.encode(Dibit::from_bits(0b11)), Operator::XZ);
        for d in Dibit::ALL {
            assert_eq!(s.decode(d), d);
        }
    }

    #[test]
    fn permuted_scheme_inverts() {
        let reg = SchemeRegistry::default();
        let s = reg.get(2).unwrap();
        for d in Dibit::ALL {
            assert_eq!(s.decode(s.encode(d).bell_outcome()), d);
        }
        assert_eq!(reg.get(9), Err(SdcError::UnknownScheme(9)));
    }

    #[test]
    fn non_bijective_rejected() {
        assert_eq!(
            EncodingScheme::from_operators(7, [Operator::I, Operator::I, Operator::Z, Operator::XZ]),
            Err(SdcError::NotBijective(7))
        );
    }

    #[test]
    fn byte_packing() {
        let d = bytes_to_dibits(&[0b1101_0010]);
        assert_eq!(d.iter().map(|d| d.bits()).collect::<Vec<_>>(), vec![3, 1, 0, 2]);
        assert_eq!(dibits_to_bytes(&d).unwrap(), vec![0b1101_0010]);
        assert_eq!(dibits_to_bytes(&d[..3]), Err(SdcError::PartialByte(3)));
        assert!(bytes_to_dibits(&[]).is_empty());
    }

    #[test]
    fn repetition_code() {
        let msg: Vec<Dibit> = [0, 1, 2, 3].map(Dibit::from_bits).to_vec();
        let mut coded = fec_encode(&msg);
        assert_eq!(coded.len(), 12);
        assert_eq!(fec_decode(&coded).unwrap(), msg);
        // one corrupted copy per triple
        for (i, flip) in [1u8, 2, 3, 1].into_iter().enumerate() {
            coded[3 * i + i % 3] = coded[3 * i + i % 3] ^ Dibit::from_bits(flip);
        }
        assert_eq!(fec_decode(&coded).unwrap(), msg);
        assert_eq!(fec_decode(&coded[..4]), Err(SdcError::BadLength(4)));
    }

    #[test]
    fn lane_majority_can_mix_copies() {
        // 01, 10, 11 -> lanes: b1 has 2 votes, b0 has 2 votes
        let triple = [1, 2, 3].map(Dibit::from_bits);
        assert_eq!(fec_decode(&triple).unwrap(), vec![Dibit::from_bits(3)]);
    }
}
