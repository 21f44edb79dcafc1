//! Bit-packed Pauli operators over a fixed qubit register, with the symplectic
//! product used throughout the stabilizer machinery.
//!
//! Signs are deliberately absent: the ISG tracker and detector derivation are
//! parity objects. Sign bookkeeping lives in measurement records (circuit
//! module) and in the reference tableau simulator.

/// A Pauli operator stored as x/z bit rows over `n` qubits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Pauli {
    pub n: usize,
    pub x: Vec<u64>,
    pub z: Vec<u64>,
}

pub fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

impl Pauli {
    pub fn identity(n: usize) -> Self {
        let w = words_for(n);
        Pauli { n, x: vec![0; w], z: vec![0; w] }
    }

    pub fn from_supports(n: usize, xs: &[usize], zs: &[usize]) -> Self {
        let mut p = Pauli::identity(n);
        for &q in xs {
            p.set_x(q, true);
        }
        for &q in zs {
            p.set_z(q, true);
        }
        p
    }

    pub fn set_x(&mut self, q: usize, v: bool) {
        debug_assert!(q < self.n);
        let (w, b) = (q / 64, q % 64);
        if v {
            self.x[w] |= 1 << b;
        } else {
            self.x[w] &= !(1 << b);
        }
    }

    pub fn set_z(&mut self, q: usize, v: bool) {
        debug_assert!(q < self.n);
        let (w, b) = (q / 64, q % 64);
        if v {
            self.z[w] |= 1 << b;
        } else {
            self.z[w] &= !(1 << b);
        }
    }

    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().all(|&w| w == 0) && self.z.iter().all(|&w| w == 0)
    }

    /// Multiply `other` into `self` (group product, signs ignored).
    pub fn mul_assign(&mut self, other: &Pauli) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a ^= b;
        }
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            *a ^= b;
        }
    }

    /// True iff the two operators commute (symplectic product is zero).
    pub fn commutes(&self, other: &Pauli) -> bool {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0u64;
        for i in 0..self.x.len() {
            acc ^= self.x[i] & other.z[i];
            acc ^= self.z[i] & other.x[i];
        }
        acc.count_ones() % 2 == 0
    }

    pub fn weight(&self) -> usize {
        let mut w = 0;
        for i in 0..self.x.len() {
            w += (self.x[i] | self.z[i]).count_ones() as usize;
        }
        w
    }

    /// Sorted qubit indices where the operator acts non-trivially.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.x_bit(q) || self.z_bit(q)).collect()
    }
}

impl std::fmt::Debug for Pauli {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for q in 0..self.n {
            let c = match (self.x_bit(q), self.z_bit(q)) {
                (false, false) => '_',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutation_matches_single_qubit_rules() {
        let x = Pauli::from_supports(1, &[0], &[]);
        let z = Pauli::from_supports(1, &[], &[0]);
        let y = Pauli::from_supports(1, &[0], &[0]);
        assert!(!x.commutes(&z));
        assert!(!x.commutes(&y));
        assert!(!y.commutes(&z));
        assert!(x.commutes(&x));
    }

    #[test]
    fn overlap_parity_determines_commutation() {
        // XX on {0,1} vs ZZ on {1,2}: single-qubit overlap, anticommute.
        let xx = Pauli::from_supports(3, &[0, 1], &[]);
        let zz = Pauli::from_supports(3, &[], &[1, 2]);
        assert!(!xx.commutes(&zz));
        // XX on {0,1} vs ZZ on {0,1}: overlap two, commute.
        let zz2 = Pauli::from_supports(3, &[], &[0, 1]);
        assert!(xx.commutes(&zz2));
    }

    #[test]
    fn product_is_xor() {
        let mut a = Pauli::from_supports(4, &[0, 1], &[2]);
        let b = Pauli::from_supports(4, &[1, 3], &[2, 3]);
        a.mul_assign(&b);
        assert_eq!(a.support(), vec![0, 3]);
        assert!(a.x_bit(0) && a.x_bit(3) && a.z_bit(3));
        assert!(!a.z_bit(2));
    }
}
