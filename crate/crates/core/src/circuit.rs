//! Line-oriented circuit description language (`.qc` files).
//!
//! ```text
//! # Bell pair
//! qubits 2
//! h 0
//! cx 0 1
//! measure 0 -> a
//! measure 1 -> b
//! ```
//!
//! One statement per line. `#` starts a comment. Mnemonics are
//! case-insensitive. The `qubits N` header must be the first statement.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::stabilizer::{GateOp, MeasurementRecord, StabilizerError, StabilizerTableau};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: qubit {index} out of range for {count} qubits")]
    IndexOutOfRange { line: usize, index: usize, count: usize },
    #[error("missing `qubits N` header")]
    MissingHeader,
    #[error("line {line}: duplicate `qubits` header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: malformed integer `{token}`")]
    MalformedInteger { line: usize, token: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("circuit needs {needed} qubits but tableau has {available}")]
    TooManyQubits { needed: usize, available: usize },
    #[error(transparent)]
    Stabilizer(#[from] StabilizerError),
}

/// A parsed program: header size, gates in source order, and one optional
/// label per `measure` statement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Circuit {
    pub qubit_count: usize,
    pub ops: Vec<GateOp>,
    pub measure_labels: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRecord {
    pub record: MeasurementRecord,
    pub label: Option<String>,
}

impl Circuit {
    pub fn new(qubit_count: usize) -> Self {
        Self {
            qubit_count,
            ..Default::default()
        }
    }

    pub fn push(&mut self, op: GateOp) -> &mut Self {
        if matches!(op, GateOp::Measure(_)) {
            self.measure_labels.push(None);
        }
        self.ops.push(op);
        self
    }

    pub fn push_measure(&mut self, q: usize, label: impl Into<String>) -> &mut Self {
        self.ops.push(GateOp::Measure(q));
        self.measure_labels.push(Some(label.into()));
        self
    }

    /// Renders back to the textual grammar; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut out = format!("qubits {}\n", self.qubit_count);
        let mut labels = self.measure_labels.iter();
        for op in &self.ops {
            let _ = match *op {
                GateOp::H(q) => writeln!(out, "h {q}"),
                GateOp::S(q) => writeln!(out, "s {q}"),
                GateOp::X(q) => writeln!(out, "x {q}"),
                GateOp::Y(q) => writeln!(out, "y {q}"),
                GateOp::Z(q) => writeln!(out, "z {q}"),
                GateOp::Cnot(c, t) => writeln!(out, "cx {c} {t}"),
                GateOp::Measure(q) => match labels.next().cloned().flatten() {
                    Some(l) => writeln!(out, "measure {q} -> {l}"),
                    None => writeln!(out, "measure {q}"),
                },
            };
        }
        out
    }
}

fn parse_index(token: &str, line: usize, count: usize) -> Result<usize, ParseError> {
    let index: usize = token.parse().map_err(|_| ParseError::MalformedInteger {
        line,
        token: token.to_string(),
    })?;
    if index >= count {
        return Err(ParseError::IndexOutOfRange { line, index, count });
    }
    Ok(index)
}

pub fn parse(src: &str) -> Result<Circuit, ParseError> {
    let mut circuit: Option<Circuit> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mnemonic = tokens[0].to_ascii_lowercase();
        let args = &tokens[1..];

        if mnemonic == "qubits" {
            if circuit.is_some() {
                return Err(ParseError::DuplicateHeader { line });
            }
            let [n] = args else {
                return Err(ParseError::Syntax {
                    line,
                    msg: "expected `qubits N`".into(),
                });
            };
            let count = n.parse().map_err(|_| ParseError::MalformedInteger {
                line,
                token: n.to_string(),
            })?;
            circuit = Some(Circuit::new(count));
            continue;
        }

        let c = match circuit.as_mut() {
            Some(c) => c,
            None => {
                if !matches!(mnemonic.as_str(), "h" | "s" | "x" | "y" | "z" | "cx" | "measure") {
                    return Err(ParseError::UnknownMnemonic {
                        line,
                        mnemonic: tokens[0].to_string(),
                    });
                }
                return Err(ParseError::MissingHeader);
            }
        };
        let n = c.qubit_count;
        let arity = |want: usize| -> Result<(), ParseError> {
            if args.len() == want {
                Ok(())
            } else {
                Err(ParseError::Syntax {
                    line,
                    msg: format!("`{mnemonic}` takes {want} operand(s), got {}", args.len()),
                })
            }
        };
        match mnemonic.as_str() {
            "h" | "s" | "x" | "y" | "z" => {
                arity(1)?;
                let q = parse_index(args[0], line, n)?;
                c.push(match mnemonic.as_str() {
                    "h" => GateOp::H(q),
                    "s" => GateOp::S(q),
                    "x" => GateOp::X(q),
                    "y" => GateOp::Y(q),
                    _ => GateOp::Z(q),
                });
            }
            "cx" => {
                arity(2)?;
                let ctl = parse_index(args[0], line, n)?;
                let tgt = parse_index(args[1], line, n)?;
                if ctl == tgt {
                    return Err(ParseError::Syntax {
                        line,
                        msg: "cx needs two distinct qubits".into(),
                    });
                }
                c.push(GateOp::Cnot(ctl, tgt));
            }
            "measure" => match args {
                [q] => {
                    let q = parse_index(q, line, n)?;
                    c.push(GateOp::Measure(q));
                }
                [q, "->", label] => {
                    let q = parse_index(q, line, n)?;
                    c.push_measure(q, *label);
                }
                _ => {
                    return Err(ParseError::Syntax {
                        line,
                        msg: "expected `measure q [-> label]`".into(),
                    })
                }
            },
            _ => {
                return Err(ParseError::UnknownMnemonic {
                    line,
                    mnemonic: tokens[0].to_string(),
                })
            }
        }
    }
    circuit.ok_or(ParseError::MissingHeader)
}

/// Runs every operation in order; measurement records come back in program order.
pub fn execute<R: Rng + ?Sized>(
    circuit: &Circuit,
    tableau: &mut StabilizerTableau,
    rng: &mut R,
) -> Result<Vec<LabeledRecord>, ExecError> {
    if circuit.qubit_count > tableau.num_qubits() {
        return Err(ExecError::TooManyQubits {
            needed: circuit.qubit_count,
            available: tableau.num_qubits(),
        });
    }
    let mut labels = circuit.measure_labels.iter();
    let mut records = Vec::new();
    for &op in &circuit.ops {
        match op {
            GateOp::Measure(q) => {
                let record = tableau.measure(q, rng)?;
                records.push(LabeledRecord {
                    record,
                    label: labels.next().cloned().flatten(),
                });
            }
            g => tableau.apply_gate(g)?,
        }
    }
    Ok(records)
}
