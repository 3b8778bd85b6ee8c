//! Pauli and loss channels, with optional history-dependent scaling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stabilizer::{GateOp, Qubit, StabilizerError, StabilizerTableau};
use crate::Tick;

const SUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("probability `{name}` = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("channel probabilities sum to {0} > 1")]
    SumExceedsOne(f64),
    #[error("memory model: {0}")]
    Memory(String),
    #[error(transparent)]
    Stabilizer(#[from] StabilizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliChannelParams {
    #[serde(default)]
    pub p_x: f64,
    #[serde(default)]
    pub p_y: f64,
    #[serde(default)]
    pub p_z: f64,
    #[serde(default)]
    pub p_loss: f64,
}

impl PauliChannelParams {
    pub const NOISELESS: Self = Self {
        p_x: 0.0,
        p_y: 0.0,
        p_z: 0.0,
        p_loss: 0.0,
    };

    /// Symmetric depolarizing-style channel: `p_x = p_y = p_z = p / 3`.
    pub fn depolarizing(p: f64) -> Self {
        Self {
            p_x: p / 3.0,
            p_y: p / 3.0,
            p_z: p / 3.0,
            p_loss: 0.0,
        }
    }

    pub fn lossy(p_loss: f64) -> Self {
        Self {
            p_loss,
            ..Self::NOISELESS
        }
    }

    pub fn total(&self) -> f64 {
        self.p_x + self.p_y + self.p_z + self.p_loss
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        for (name, value) in [
            ("p_x", self.p_x),
            ("p_y", self.p_y),
            ("p_z", self.p_z),
            ("p_loss", self.p_loss),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NoiseError::OutOfRange { name, value });
            }
        }
        let total = self.total();
        if total > 1.0 + SUM_SLACK {
            return Err(NoiseError::SumExceedsOne(total));
        }
        Ok(())
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            p_x: self.p_x * factor,
            p_y: self.p_y * factor,
            p_z: self.p_z * factor,
            p_loss: self.p_loss * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelError {
    None,
    X,
    Y,
    Z,
    Loss,
}

impl ChannelError {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelError::None => "NONE",
            ChannelError::X => "X",
            ChannelError::Y => "Y",
            ChannelError::Z => "Z",
            ChannelError::Loss => "LOSS",
        }
    }

    /// The gate this error applies, if it is a Pauli.
    pub fn gate(&self, q: Qubit) -> Option<GateOp> {
        match self {
            ChannelError::X => Some(GateOp::X(q)),
            ChannelError::Y => Some(GateOp::Y(q)),
            ChannelError::Z => Some(GateOp::Z(q)),
            ChannelError::None | ChannelError::Loss => None,
        }
    }
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelError {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "NONE" => ChannelError::None,
            "X" => ChannelError::X,
            "Y" => ChannelError::Y,
            "Z" => ChannelError::Z,
            "LOSS" => ChannelError::Loss,
            _ => return Err(format!("unknown channel error `{s}`")),
        })
    }
}

/// Multiplicative load-dependent scaling: every transmission recorded inside
/// the trailing `window` multiplies the error probabilities by `load_factor`,
/// up to `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModel {
    #[serde(default)]
    pub window: Tick,
    #[serde(default = "one")]
    pub load_factor: f64,
    #[serde(default = "one")]
    pub cap: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self::MEMORYLESS
    }
}

impl MemoryModel {
    pub const MEMORYLESS: Self = Self {
        window: 0,
        load_factor: 1.0,
        cap: 1.0,
    };

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.load_factor >= 1.0) {
            return Err(NoiseError::Memory(format!(
                "load_factor {} must be >= 1",
                self.load_factor
            )));
        }
        if !(self.cap >= 1.0) {
            return Err(NoiseError::Memory(format!("cap {} must be >= 1", self.cap)));
        }
        Ok(())
    }

    /// Number of history timestamps in `(now - window, now]`.
    pub fn in_window<I: IntoIterator<Item = Tick>>(&self, history: I, now: Tick) -> usize {
        history
            .into_iter()
            .filter(|&ts| ts <= now && now - ts < self.window)
            .count()
    }
}

/// Strategy for deriving per-transmission parameters from the channel history.
pub trait NoiseModel: Send + fmt::Debug {
    fn effective_params(
        &self,
        base: &PauliChannelParams,
        history: &mut dyn Iterator<Item = Tick>,
        now: Tick,
    ) -> PauliChannelParams;
}

impl NoiseModel for MemoryModel {
    fn effective_params(
        &self,
        base: &PauliChannelParams,
        history: &mut dyn Iterator<Item = Tick>,
        now: Tick,
    ) -> PauliChannelParams {
        effective_params(base, self, history, now)
    }
}

/// Scales every error probability by `min(cap, load_factor^k)` and clamps
/// proportionally if the total would exceed one.
pub fn effective_params<I: IntoIterator<Item = Tick>>(
    base: &PauliChannelParams,
    memory: &MemoryModel,
    history: I,
    now: Tick,
) -> PauliChannelParams {
    let k = memory.in_window(history, now);
    if k == 0 || memory.load_factor == 1.0 {
        return *base;
    }
    let factor = memory.load_factor.powi(k.min(i32::MAX as usize) as i32).min(memory.cap);
    let scaled = base.scaled(factor);
    let total = scaled.total();
    if total > 1.0 {
        scaled.scaled(1.0 / total)
    } else {
        scaled
    }
}

/// Draws one categorical sample: X, Y, Z, LOSS by their probabilities, NONE otherwise.
pub fn sample_error<R: Rng + ?Sized>(
    params: &PauliChannelParams,
    rng: &mut R,
) -> Result<ChannelError, NoiseError> {
    params.validate()?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (p, e) in [
        (params.p_x, ChannelError::X),
        (params.p_y, ChannelError::Y),
        (params.p_z, ChannelError::Z),
        (params.p_loss, ChannelError::Loss),
    ] {
        acc += p;
        if p > 0.0 && u < acc {
            return Ok(e);
        }
    }
    Ok(ChannelError::None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Kept,
    Lost,
}

/// Applies a sampled error to qubit `q`. Loss is signalled, not applied; the
/// caller owns destroying the qubit.
pub fn apply_error(
    tableau: &mut StabilizerTableau,
    q: Qubit,
    error: ChannelError,
) -> Result<Applied, NoiseError> {
    if q >= tableau.num_qubits() {
        return Err(StabilizerError::IndexOutOfRange {
            index: q,
            n: tableau.num_qubits(),
        }
        .into());
    }
    match error.gate(q) {
        Some(g) => {
            tableau.apply_gate(g)?;
            Ok(Applied::Kept)
        }
        None if error == ChannelError::Loss => Ok(Applied::Lost),
        None => Ok(Applied::Kept),
    }
}
