//! Circuit text format: printing and parsing with bit-exact round-trip.

use super::{Circuit, Instruction};
use crate::{Error, Result};
use std::fmt::Write as _;

impl std::fmt::Display for Circuit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for inst in &self.instructions {
            writeln!(f, "{inst}")?;
        }
        Ok(())
    }
}

impl std::fmt::Display for Instruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn targets(f: &mut std::fmt::Formatter<'_>, ts: &[u32]) -> std::fmt::Result {
            for t in ts {
                write!(f, " {t}")?;
            }
            Ok(())
        }
        fn pairs(f: &mut std::fmt::Formatter<'_>, ps: &[(u32, u32)]) -> std::fmt::Result {
            for (a, b) in ps {
                write!(f, " {a} {b}")?;
            }
            Ok(())
        }
        fn recs(f: &mut std::fmt::Formatter<'_>, rs: &[i64]) -> std::fmt::Result {
            for r in rs {
                write!(f, " rec[{r}]")?;
            }
            Ok(())
        }
        match self {
            Instruction::Rz(ts) => {
                write!(f, "RZ")?;
                targets(f, ts)
            }
            Instruction::Rx(ts) => {
                write!(f, "RX")?;
                targets(f, ts)
            }
            Instruction::H(ts) => {
                write!(f, "H")?;
                targets(f, ts)
            }
            Instruction::Cx(ps) => {
                write!(f, "CX")?;
                pairs(f, ps)
            }
            Instruction::Mz { flip, targets: ts } => {
                if *flip > 0.0 {
                    write!(f, "MZ({flip})")?;
                } else {
                    write!(f, "MZ")?;
                }
                targets(f, ts)
            }
            Instruction::Mx { flip, targets: ts } => {
                if *flip > 0.0 {
                    write!(f, "MX({flip})")?;
                } else {
                    write!(f, "MX")?;
                }
                targets(f, ts)
            }
            Instruction::Tick => write!(f, "TICK"),
            Instruction::XError { p, targets: ts } => {
                write!(f, "X_ERROR({p})")?;
                targets(f, ts)
            }
            Instruction::ZError { p, targets: ts } => {
                write!(f, "Z_ERROR({p})")?;
                targets(f, ts)
            }
            Instruction::Dep1 { p, targets: ts } => {
                write!(f, "DEP1({p})")?;
                targets(f, ts)
            }
            Instruction::Dep2 { p, pairs: ps } => {
                write!(f, "DEP2({p})")?;
                pairs(f, ps)
            }
            Instruction::Detector { coord, recs: rs } => {
                write!(f, "DETECTOR({},{},{})", coord.0, coord.1, coord.2)?;
                recs(f, rs)
            }
            Instruction::ObservableInclude { index, recs: rs } => {
                write!(f, "OBSERVABLE_INCLUDE({index})")?;
                recs(f, rs)
            }
        }
    }
}

impl Circuit {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write!(s, "{self}").expect("string write cannot fail");
        s
    }

    /// Parse the text format. Blank lines and `#` comments are accepted on
    /// input; the printer never emits them, so printed text reparses exactly.
    pub fn parse(text: &str) -> Result<Circuit> {
        let mut c = Circuit::new(0);
        let mut max_q: i64 = -1;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let inst = parse_line(line).map_err(|msg| Error::Parse { line: lineno + 1, msg })?;
            for q in instruction_qubits(&inst) {
                max_q = max_q.max(q as i64);
            }
            c.instructions.push(inst);
        }
        c.num_qubits = (max_q + 1) as u32;
        c.validate()?;
        Ok(c)
    }
}

fn instruction_qubits(inst: &Instruction) -> Vec<u32> {
    match inst {
        Instruction::Rz(ts)
        | Instruction::Rx(ts)
        | Instruction::H(ts)
        | Instruction::XError { targets: ts, .. }
        | Instruction::ZError { targets: ts, .. }
        | Instruction::Dep1 { targets: ts, .. }
        | Instruction::Mz { targets: ts, .. }
        | Instruction::Mx { targets: ts, .. } => ts.clone(),
        Instruction::Cx(ps) | Instruction::Dep2 { pairs: ps, .. } => {
            ps.iter().flat_map(|&(a, b)| [a, b]).collect()
        }
        _ => Vec::new(),
    }
}

fn parse_line(line: &str) -> std::result::Result<Instruction, String> {
    let (head, rest) = match line.find(char::is_whitespace) {
        Some(i) => (&line[..i], line[i..].trim_start()),
        None => (line, ""),
    };
    let (opcode, param) = match head.find('(') {
        Some(i) => {
            if !head.ends_with(')') {
                return Err(format!("malformed parameter in {head:?}"));
            }
            (&head[..i], Some(&head[i + 1..head.len() - 1]))
        }
        None => (head, None),
    };

    let prob = |param: Option<&str>| -> std::result::Result<f64, String> {
        match param {
            None => Ok(0.0),
            Some(s) => s.parse::<f64>().map_err(|e| format!("bad probability {s:?}: {e}")),
        }
    };
    let req_prob = |param: Option<&str>| -> std::result::Result<f64, String> {
        param.ok_or_else(|| "missing probability parameter".to_string()).and_then(|s| {
            s.parse::<f64>().map_err(|e| format!("bad probability {s:?}: {e}"))
        })
    };
    let qubits = |rest: &str| -> std::result::Result<Vec<u32>, String> {
        rest.split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| format!("bad qubit {t:?}: {e}")))
            .collect()
    };
    let pairs = |rest: &str| -> std::result::Result<Vec<(u32, u32)>, String> {
        let flat = qubits(rest)?;
        if flat.len() % 2 != 0 {
            return Err("odd number of pair targets".to_string());
        }
        Ok(flat.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    };
    let recs = |rest: &str| -> std::result::Result<Vec<i64>, String> {
        rest.split_whitespace()
            .map(|t| {
                t.strip_prefix("rec[")
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| format!("expected rec[-k], got {t:?}"))
                    .and_then(|s| s.parse::<i64>().map_err(|e| format!("bad record index: {e}")))
            })
            .collect()
    };

    match opcode {
        "RZ" => Ok(Instruction::Rz(qubits(rest)?)),
        "RX" => Ok(Instruction::Rx(qubits(rest)?)),
        "H" => Ok(Instruction::H(qubits(rest)?)),
        "CX" => Ok(Instruction::Cx(pairs(rest)?)),
        "MZ" => Ok(Instruction::Mz { flip: prob(param)?, targets: qubits(rest)? }),
        "MX" => Ok(Instruction::Mx { flip: prob(param)?, targets: qubits(rest)? }),
        "TICK" => {
            if !rest.is_empty() {
                return Err("TICK takes no targets".to_string());
            }
            Ok(Instruction::Tick)
        }
        "X_ERROR" => Ok(Instruction::XError { p: req_prob(param)?, targets: qubits(rest)? }),
        "Z_ERROR" => Ok(Instruction::ZError { p: req_prob(param)?, targets: qubits(rest)? }),
        "DEP1" => Ok(Instruction::Dep1 { p: req_prob(param)?, targets: qubits(rest)? }),
        "DEP2" => Ok(Instruction::Dep2 { p: req_prob(param)?, pairs: pairs(rest)? }),
        "DETECTOR" => {
            let param = param.ok_or("DETECTOR requires (row,col,step)")?;
            let parts: Vec<&str> = param.split(',').collect();
            if parts.len() != 3 {
                return Err(format!("expected 3 detector coordinates, got {}", parts.len()));
            }
            let mut coord = [0i32; 3];
            for (i, p) in parts.iter().enumerate() {
                coord[i] = p.trim().parse().map_err(|e| format!("bad coordinate {p:?}: {e}"))?;
            }
            Ok(Instruction::Detector { coord: (coord[0], coord[1], coord[2]), recs: recs(rest)? })
        }
        "OBSERVABLE_INCLUDE" => {
            let param = param.ok_or("OBSERVABLE_INCLUDE requires an index")?;
            let index = param.parse::<u32>().map_err(|e| format!("bad index {param:?}: {e}"))?;
            Ok(Instruction::ObservableInclude { index, recs: recs(rest)? })
        }
        other => Err(format!("unknown opcode {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = "RZ 0 1 2\nH 0\nCX 0 1 1 2\nTICK\nMZ(0.001) 1 2\nMX 0\nDETECTOR(0,1,2) rec[-3] rec[-2]\nOBSERVABLE_INCLUDE(0) rec[-1]\n";

    #[test]
    fn print_parse_round_trip_is_bit_exact() {
        let c = Circuit::parse(CANONICAL).unwrap();
        assert_eq!(c.to_text(), CANONICAL);
        let c2 = Circuit::parse(&c.to_text()).unwrap();
        assert_eq!(c.instructions, c2.instructions);
        assert_eq!(c.num_qubits, 3);
    }

    #[test]
    fn probabilities_round_trip_exactly() {
        for p in [1e-3, 4e-4, 0.5, 1.0 / 3.0, 2e-4, 1e-7] {
            let c = Circuit {
                instructions: vec![Instruction::Dep1 { p, targets: vec![0] }],
                num_qubits: 1,
                meta: Default::default(),
            };
            let parsed = Circuit::parse(&c.to_text()).unwrap();
            match &parsed.instructions[0] {
                Instruction::Dep1 { p: q, .. } => assert_eq!(*q, p),
                _ => panic!("wrong instruction"),
            }
        }
    }

    #[test]
    fn rejects_unknown_opcode_with_line_number() {
        let err = Circuit::parse("RZ 0\nBOGUS 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_odd_cx_targets() {
        assert!(Circuit::parse("CX 0 1 2\n").is_err());
    }

    #[test]
    fn comments_and_blanks_accepted() {
        let c = Circuit::parse("# header\n\nRZ 0\n").unwrap();
        assert_eq!(c.instructions.len(), 1);
    }
}
