//! Gate-level circuit representation, text serialization, and the compilers
//! from (layout, schedule) to memory, stability, and surgery circuits.
//!
//! Text format, one instruction per line, `OPCODE(param) target ...`:
//!
//! ```text
//! RZ 0 1 2
//! H 4
//! CX 3 1 4 5
//! MZ(0.001) 3
//! TICK
//! DEP2(0.001) 3 1
//! DETECTOR(2,3,5) rec[-4] rec[-1]
//! OBSERVABLE_INCLUDE(0) rec[-9]
//! ```
//!
//! `rec[-k]` is the k-th most recent measurement record at that point in the
//! instruction stream. Parse and print round-trip bit-exactly: probabilities
//! print in Rust's shortest-roundtrip form and reparse to the same f64.

mod build;
mod surgery;
mod text;

pub use build::{memory_circuit, plaquette_circuit, record_steps, stability_circuit, PlaquetteTriple};
pub use surgery::{surgery_circuit, surgery_circuit_xx, surgery_circuit_zz, SurgeryKind};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Measurement or logical basis.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl std::fmt::Display for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Basis::X => write!(f, "X"),
            Basis::Z => write!(f, "Z"),
        }
    }
}

/// Whether ancillas are reinitialized after each measurement.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ResetMode {
    Reset,
    NoReset,
}

#[derive(Clone, PartialEq, Debug)]
pub enum Instruction {
    Rz(Vec<u32>),
    Rx(Vec<u32>),
    H(Vec<u32>),
    /// Control/target pairs, applied left to right.
    Cx(Vec<(u32, u32)>),
    /// Z-basis measurement; `flip` is the record-flip probability annotation.
    Mz { flip: f64, targets: Vec<u32> },
    /// X-basis measurement.
    Mx { flip: f64, targets: Vec<u32> },
    /// Layer boundary; idle noise is assigned per TICK-delimited layer.
    Tick,
    XError { p: f64, targets: Vec<u32> },
    ZError { p: f64, targets: Vec<u32> },
    /// Single-qubit depolarizing: X, Y, Z each with p/3.
    Dep1 { p: f64, targets: Vec<u32> },
    /// Two-qubit depolarizing: each of the 15 non-identity Paulis with p/15.
    Dep2 { p: f64, pairs: Vec<(u32, u32)> },
    /// Deterministic parity of measurement records, labeled (row, col, step).
    Detector { coord: (i32, i32, i32), recs: Vec<i64> },
    ObservableInclude { index: u32, recs: Vec<i64> },
}

/// Builder provenance carried alongside the instruction stream. Not part of
/// the text format; parsing yields defaults.
#[derive(Clone, Default, Debug, Serialize, Deserialize)]
pub struct CircuitMeta {
    pub name: String,
    pub schedule: String,
    pub cycles: usize,
    pub mode: Option<ResetMode>,
    pub basis: Option<Basis>,
}

#[derive(Clone, Default, Debug)]
pub struct Circuit {
    pub instructions: Vec<Instruction>,
    pub num_qubits: u32,
    pub meta: CircuitMeta,
}

/// Detector and observable record references resolved to absolute indices.
pub struct ResolvedCircuit {
    pub num_records: u32,
    pub detectors: Vec<ResolvedDetector>,
    /// Record sets per observable index, dense from 0.
    pub observables: Vec<Vec<u32>>,
}

pub struct ResolvedDetector {
    pub coord: (i32, i32, i32),
    pub records: Vec<u32>,
}

impl Circuit {
    pub fn new(num_qubits: u32) -> Self {
        Circuit { instructions: Vec::new(), num_qubits, meta: CircuitMeta::default() }
    }

    pub fn num_measurements(&self) -> u32 {
        self.instructions
            .iter()
            .map(|i| match i {
                Instruction::Mz { targets, .. } | Instruction::Mx { targets, .. } => {
                    targets.len() as u32
                }
                _ => 0,
            })
            .sum()
    }

    pub fn num_detectors(&self) -> u32 {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Detector { .. }))
            .count() as u32
    }

    pub fn num_observables(&self) -> u32 {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::ObservableInclude { index, .. } => Some(index + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// True when the circuit carries probabilistic noise annotations.
    /// Deterministic `X_ERROR(1)`/`Z_ERROR(1)` injections are program
    /// content (state preparation flips, fault probes), not noise.
    pub fn is_noised(&self) -> bool {
        self.instructions.iter().any(|i| match i {
            Instruction::XError { p, .. } | Instruction::ZError { p, .. } => {
                *p > 0.0 && *p < 1.0
            }
            Instruction::Dep1 { p, .. } | Instruction::Dep2 { p, .. } => *p > 0.0,
            Instruction::Mz { flip, .. } | Instruction::Mx { flip, .. } => *flip > 0.0,
            _ => false,
        })
    }

    /// Resolve all `rec[-k]` references to absolute record indices, checking
    /// bounds along the way.
    pub fn resolve(&self) -> Result<ResolvedCircuit> {
        let mut count: i64 = 0;
        let mut detectors = Vec::new();
        let mut observables: Vec<Vec<u32>> = Vec::new();
        for (pos, inst) in self.instructions.iter().enumerate() {
            match inst {
                Instruction::Mz { targets, .. } | Instruction::Mx { targets, .. } => {
                    count += targets.len() as i64;
                }
                Instruction::Detector { coord, recs } => {
                    let records = resolve_recs(recs, count, pos)?;
                    detectors.push(ResolvedDetector { coord: *coord, records });
                }
                Instruction::ObservableInclude { index, recs } => {
                    let records = resolve_recs(recs, count, pos)?;
                    let idx = *index as usize;
                    if observables.len() <= idx {
                        observables.resize_with(idx + 1, Vec::new);
                    }
                    observables[idx].extend(records);
                }
                _ => {}
            }
        }
        Ok(ResolvedCircuit { num_records: count as u32, detectors, observables })
    }

    /// Structural validation: record references resolve, probabilities are in
    /// range, CX pairs are well-formed.
    pub fn validate(&self) -> Result<()> {
        for inst in &self.instructions {
            let p = match inst {
                Instruction::Mz { flip, .. } | Instruction::Mx { flip, .. } => Some(*flip),
                Instruction::XError { p, .. }
                | Instruction::ZError { p, .. }
                | Instruction::Dep1 { p, .. }
                | Instruction::Dep2 { p, .. } => Some(*p),
                _ => None,
            };
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::BadProbability(p));
                }
            }
            if let Instruction::Cx(pairs) = inst {
                for &(c, t) in pairs {
                    if c == t {
                        return Err(Error::Invalid(format!("CX with equal targets {c}")));
                    }
                }
            }
        }
        self.resolve()?;
        Ok(())
    }

    pub fn push(&mut self, inst: Instruction) {
        self.instructions.push(inst);
    }
}

fn resolve_recs(recs: &[i64], count: i64, pos: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(recs.len());
    for &k in recs {
        if k >= 0 || count + k < 0 {
            return Err(Error::Invalid(format!(
                "record reference rec[{k}] out of range at instruction {pos} ({count} records seen)"
            )));
        }
        out.push((count + k) as u32);
    }
    Ok(out)
}
