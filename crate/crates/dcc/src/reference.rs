//! Reference stabilizer-tableau simulator used for cross-validation.
//!
//! This is a full sign-tracking tableau in the Aaronson-Gottesman CHP style:
//! n destabilizer rows, n stabilizer rows, one scratch row, bit-packed. It is
//! deliberately independent of the Pauli-frame sampler: different state
//! representation, different measurement semantics derivation, shared code
//! limited to the instruction enum. Slow but exact; intended for tests and
//! small-system oracles, not production sampling.

use crate::circuit::{Circuit, Instruction};
use crate::pauli::words_for;
use rand::Rng;

#[derive(Clone)]
pub struct Tableau {
    n: usize,
    w: usize,
    /// Row-major bit matrix, rows 0..n destabilizers, n..2n stabilizers, 2n scratch.
    xs: Vec<u64>,
    zs: Vec<u64>,
    /// Sign bit per row (phase is always ±1 for this gate set).
    r: Vec<bool>,
}

impl Tableau {
    /// All-|0⟩ state.
    pub fn new(n: usize) -> Self {
        let w = words_for(n.max(1));
        let rows = 2 * n + 1;
        let mut t = Tableau { n, w, xs: vec![0; rows * w], zs: vec![0; rows * w], r: vec![false; rows] };
        for i in 0..n {
            t.set_bit_x(i, i);
            t.set_bit_z(n + i, i);
        }
        t
    }

    fn set_bit_x(&mut self, row: usize, q: usize) {
        self.xs[row * self.w + q / 64] ^= 1 << (q % 64);
    }

    fn set_bit_z(&mut self, row: usize, q: usize) {
        self.zs[row * self.w + q / 64] ^= 1 << (q % 64);
    }

    fn x_bit(&self, row: usize, q: usize) -> bool {
        (self.xs[row * self.w + q / 64] >> (q % 64)) & 1 == 1
    }

    fn z_bit(&self, row: usize, q: usize) -> bool {
        (self.zs[row * self.w + q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn h(&mut self, q: usize) {
        for row in 0..2 * self.n + 1 {
            let x = self.x_bit(row, q);
            let z = self.z_bit(row, q);
            if x && z {
                self.r[row] ^= true;
            }
            if x != z {
                self.xs[row * self.w + q / 64] ^= 1 << (q % 64);
                self.zs[row * self.w + q / 64] ^= 1 << (q % 64);
            }
        }
    }

    pub fn cx(&mut self, c: usize, t: usize) {
        for row in 0..2 * self.n + 1 {
            let xc = self.x_bit(row, c);
            let zc = self.z_bit(row, c);
            let xt = self.x_bit(row, t);
            let zt = self.z_bit(row, t);
            if xc && zt && (xt == zc) {
                self.r[row] ^= true;
            }
            if xc {
                self.xs[row * self.w + t / 64] ^= 1 << (t % 64);
            }
            if zt {
                self.zs[row * self.w + c / 64] ^= 1 << (c % 64);
            }
        }
    }

    /// Apply a physical Pauli error: every row anticommuting with it flips sign.
    pub fn pauli(&mut self, q: usize, x: bool, z: bool) {
        for row in 0..2 * self.n + 1 {
            let rx = self.x_bit(row, q);
            let rz = self.z_bit(row, q);
            let anti = (rx && z) != (rz && x);
            if anti {
                self.r[row] ^= true;
            }
        }
    }

    /// rowsum(h, i): row_h *= row_i with exact phase bookkeeping.
    fn rowsum(&mut self, h: usize, i: usize) {
        let mut phase: i64 = 2 * (self.r[h] as i64) + 2 * (self.r[i] as i64);
        let (hb, ib) = (h * self.w, i * self.w);
        for wd in 0..self.w {
            let x1 = self.xs[ib + wd];
            let z1 = self.zs[ib + wd];
            let x2 = self.xs[hb + wd];
            let z2 = self.zs[hb + wd];
            // Per-qubit exponent g(x1,z1,x2,z2) in {-1,0,1}, accumulated as
            // popcounts of the +1 and -1 cases.
            let plus = (x1 & !z1 & x2 & z2) | (!x1 & z1 & x2 & !z2) | (x1 & z1 & !x2 & z2);
            let minus = (x1 & !z1 & !x2 & z2) | (!x1 & z1 & x2 & z2) | (x1 & z1 & x2 & !z2);
            phase += plus.count_ones() as i64;
            phase -= minus.count_ones() as i64;
        }
        debug_assert_eq!(phase.rem_euclid(2), 0);
        self.r[h] = phase.rem_euclid(4) == 2;
        for wd in 0..self.w {
            self.xs[hb + wd] ^= self.xs[ib + wd];
            self.zs[hb + wd] ^= self.zs[ib + wd];
        }
    }

    pub fn measure_z(&mut self, q: usize, rng: &mut impl Rng) -> bool {
        let n = self.n;
        // A stabilizer row with an x bit at q means the outcome is random.
        let p = (n..2 * n).find(|&row| self.x_bit(row, q));
        if let Some(p) = p {
            for row in 0..2 * n {
                if row != p && self.x_bit(row, q) {
                    self.rowsum(row, p);
                }
            }
            // Old stabilizer becomes the destabilizer; new stabilizer is ±Z_q.
            let (pb, db) = (p * self.w, (p - n) * self.w);
            for wd in 0..self.w {
                self.xs[db + wd] = self.xs[pb + wd];
                self.zs[db + wd] = self.zs[pb + wd];
                self.xs[pb + wd] = 0;
                self.zs[pb + wd] = 0;
            }
            self.r[p - n] = self.r[p];
            let outcome: bool = rng.gen();
            self.r[p] = outcome;
            self.set_bit_z(p, q);
            outcome
        } else {
            // Deterministic: accumulate into the scratch row.
            let sb = 2 * n * self.w;
            for wd in 0..self.w {
                self.xs[sb + wd] = 0;
                self.zs[sb + wd] = 0;
            }
            self.r[2 * n] = false;
            for i in 0..n {
                if self.x_bit(i, q) {
                    self.rowsum(2 * n, i + n);
                }
            }
            self.r[2 * n]
        }
    }

    pub fn measure_x(&mut self, q: usize, rng: &mut impl Rng) -> bool {
        self.h(q);
        let m = self.measure_z(q, rng);
        self.h(q);
        m
    }

    pub fn reset_z(&mut self, q: usize, rng: &mut impl Rng) {
        if self.measure_z(q, rng) {
            self.pauli(q, true, false);
        }
    }

    pub fn reset_x(&mut self, q: usize, rng: &mut impl Rng) {
        if self.measure_x(q, rng) {
            self.pauli(q, false, true);
        }
    }
}

pub struct ShotOutcome {
    pub records: Vec<bool>,
    pub detectors: Vec<bool>,
    pub observables: Vec<bool>,
}

/// Simulate one shot of a circuit, sampling every noise instruction.
pub fn simulate_shot(circuit: &Circuit, rng: &mut impl Rng) -> ShotOutcome {
    let mut t = Tableau::new(circuit.num_qubits as usize);
    let mut records: Vec<bool> = Vec::with_capacity(circuit.num_measurements() as usize);
    let mut detectors = Vec::new();
    let mut observables = vec![false; circuit.num_observables() as usize];

    let parity = |records: &[bool], recs: &[i64]| -> bool {
        recs.iter().fold(false, |acc, &k| {
            let idx = (records.len() as i64 + k) as usize;
            acc ^ records[idx]
        })
    };

    for inst in &circuit.instructions {
        match inst {
            Instruction::Rz(ts) => ts.iter().for_each(|&q| t.reset_z(q as usize, rng)),
            Instruction::Rx(ts) => ts.iter().for_each(|&q| t.reset_x(q as usize, rng)),
            Instruction::H(ts) => ts.iter().for_each(|&q| t.h(q as usize)),
            Instruction::Cx(ps) => ps.iter().for_each(|&(c, q)| t.cx(c as usize, q as usize)),
            Instruction::Mz { flip, targets } => {
                for &q in targets {
                    let m = t.measure_z(q as usize, rng) ^ (*flip > 0.0 && rng.gen::<f64>() < *flip);
                    records.push(m);
                }
            }
            Instruction::Mx { flip, targets } => {
                for &q in targets {
                    let m = t.measure_x(q as usize, rng) ^ (*flip > 0.0 && rng.gen::<f64>() < *flip);
                    records.push(m);
                }
            }
            Instruction::Tick => {}
            Instruction::XError { p, targets } => {
                for &q in targets {
                    if rng.gen::<f64>() < *p {
                        t.pauli(q as usize, true, false);
                    }
                }
            }
            Instruction::ZError { p, targets } => {
                for &q in targets {
                    if rng.gen::<f64>() < *p {
                        t.pauli(q as usize, false, true);
                    }
                }
            }
            Instruction::Dep1 { p, targets } => {
                for &q in targets {
                    if rng.gen::<f64>() < *p {
                        let (x, z) = PAULI_1Q[rng.gen_range(0..3)];
                        t.pauli(q as usize, x, z);
                    }
                }
            }
            Instruction::Dep2 { p, pairs } => {
                for &(a, b) in pairs {
                    if rng.gen::<f64>() < *p {
                        let k = rng.gen_range(1..16u8);
                        apply_two_qubit_pauli(&mut t, a as usize, b as usize, k);
                    }
                }
            }
            Instruction::Detector { recs, .. } => detectors.push(parity(&records, recs)),
            Instruction::ObservableInclude { index, recs } => {
                observables[*index as usize] ^= parity(&records, recs);
            }
        }
    }
    ShotOutcome { records, detectors, observables }
}

const PAULI_1Q: [(bool, bool); 3] = [(true, false), (true, true), (false, true)];

/// k in 1..=15 indexes the non-identity two-qubit Paulis as (k>>2, k&3) with
/// 0=I, 1=X, 2=Y, 3=Z per factor.
fn apply_two_qubit_pauli(t: &mut Tableau, a: usize, b: usize, k: u8) {
    let apply = |t: &mut Tableau, q: usize, code: u8| match code {
        0 => {}
        1 => t.pauli(q, true, false),
        2 => t.pauli(q, true, true),
        3 => t.pauli(q, false, true),
        _ => unreachable!(),
    };
    apply(t, a, k >> 2);
    apply(t, b, k & 3);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn bell_pair_correlates() {
        let mut rng = rng();
        for _ in 0..200 {
            let mut t = Tableau::new(2);
            t.h(0);
            t.cx(0, 1);
            let a = t.measure_z(0, &mut rng);
            let b = t.measure_z(1, &mut rng);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bell_outcomes_are_not_constant() {
        let mut rng = rng();
        let mut seen = [false; 2];
        for _ in 0..64 {
            let mut t = Tableau::new(2);
            t.h(0);
            t.cx(0, 1);
            seen[t.measure_z(0, &mut rng) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn repeated_measurement_is_stable() {
        let mut rng = rng();
        let mut t = Tableau::new(3);
        t.h(0);
        t.cx(0, 1);
        t.cx(1, 2);
        let m1 = t.measure_z(0, &mut rng) ^ t.measure_z(1, &mut rng);
        let m2 = t.measure_z(0, &mut rng) ^ t.measure_z(1, &mut rng);
        assert_eq!(m1, m2);
        assert!(!m1, "GHZ ZZ parity must be even");
    }

    #[test]
    fn x_basis_measurement_of_plus_state_is_deterministic() {
        let mut rng = rng();
        for _ in 0..50 {
            let mut t = Tableau::new(1);
            t.reset_x(0, &mut rng);
            assert!(!t.measure_x(0, &mut rng));
        }
    }

    #[test]
    fn pauli_errors_flip_measurements() {
        let mut rng = rng();
        let mut t = Tableau::new(1);
        t.pauli(0, true, false);
        assert!(t.measure_z(0, &mut rng));
        let mut t = Tableau::new(1);
        t.reset_x(0, &mut rng);
        t.pauli(0, false, true);
        assert!(t.measure_x(0, &mut rng));
    }

    #[test]
    fn y_error_flips_both_bases() {
        let mut rng = rng();
        let mut t = Tableau::new(1);
        t.pauli(0, true, true);
        assert!(t.measure_z(0, &mut rng));
    }

    #[test]
    fn reset_discards_prior_state() {
        let mut rng = rng();
        for _ in 0..20 {
            let mut t = Tableau::new(2);
            t.h(0);
            t.cx(0, 1);
            t.reset_z(0, &mut rng);
            assert!(!t.measure_z(0, &mut rng));
        }
    }

    #[test]
    fn shot_runner_evaluates_detectors() {
        let text = "RZ 0\nMZ 0\nMZ 0\nDETECTOR(0,0,0) rec[-2] rec[-1]\nOBSERVABLE_INCLUDE(0) rec[-1]\n";
        let c = Circuit::parse(text).unwrap();
        let mut rng = rng();
        for _ in 0..10 {
            let out = simulate_shot(&c, &mut rng);
            assert_eq!(out.detectors, vec![false]);
            assert_eq!(out.observables, vec![false]);
        }
    }

    #[test]
    fn x_error_one_flips_detector() {
        let text = "RZ 0\nMZ 0\nX_ERROR(1) 0\nMZ 0\nDETECTOR(0,0,0) rec[-2] rec[-1]\n";
        let c = Circuit::parse(text).unwrap();
        let out = simulate_shot(&c, &mut rng());
        assert_eq!(out.detectors, vec![true]);
    }
}
