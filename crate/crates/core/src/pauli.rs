//! Multi-qubit Pauli operators with exact phases.
//!
//! An operator is stored as `i^k · Π_q X_q^{x_q} Z_q^{z_q}` with the X factor to
//! the left of the Z factor on every qubit. Products and commutators reduce to
//! popcounts on the bit masks, so nothing here is ever approximate.
//!
//! Qubit 0 is the most significant bit of a computational-basis index in
//! [`PauliOperator::to_dense`] and [`PauliOperator::apply_to_basis`].

use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register for which [`PauliOperator::to_dense`] will allocate.
pub const DENSE_QUBIT_CAP: usize = 14;

/// Power of `i`, stored mod 4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn new(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        phase_value(self.0)
    }

    fn prefix(self) -> &'static str {
        match self.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) & 3)
    }
}

pub(crate) fn phase_value(k: u8) -> Complex64 {
    match k & 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliOperator {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: u8,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn dot(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(p, q)| (p & q).count_ones()).sum()
}

impl PauliOperator {
    pub fn identity(n: usize) -> Self {
        PauliOperator {
            n,
            x: vec![0; words(n)],
            z: vec![0; words(n)],
            phase: 0,
        }
    }

    /// A single Pauli letter on qubit `q`.
    pub fn single(n: usize, q: usize, p: Pauli) -> Self {
        let mut op = Self::identity(n);
        op.set(q, p);
        op
    }

    /// Hermitian product of letters, e.g. `[(0, X), (3, Z)]`. Sites must be distinct.
    pub fn from_letters(n: usize, letters: &[(usize, Pauli)]) -> Result<Self> {
        let mut op = Self::identity(n);
        for &(q, p) in letters {
            if q >= n {
                return Err(Error::QubitMismatch {
                    expected: n,
                    found: q + 1,
                });
            }
            if op.letter(q) != Pauli::I {
                return Err(Error::invalid(format!("qubit {q} listed twice")));
            }
            op.set(q, p);
        }
        Ok(op)
    }

    /// Product of `X` on `xs` and `Z` on `zs`, written with Hermitian letters
    /// (a site in both lists becomes `Y`).
    pub fn xz(n: usize, xs: &[usize], zs: &[usize]) -> Self {
        let mut op = Self::identity(n);
        for &q in xs {
            op.x[q / 64] ^= 1 << (q % 64);
        }
        for &q in zs {
            op.z[q / 64] ^= 1 << (q % 64);
        }
        op.phase = (dot(&op.x, &op.z) & 3) as u8;
        op
    }

    fn set(&mut self, q: usize, p: Pauli) {
        let (xb, zb) = p.bits();
        let (w, b) = (q / 64, 1u64 << (q % 64));
        let had_y = self.x[w] & self.z[w] & b != 0;
        self.x[w] = (self.x[w] & !b) | if xb { b } else { 0 };
        self.z[w] = (self.z[w] & !b) | if zb { b } else { 0 };
        // Y = i X Z
        let k = self.phase as i32 + i32::from(p == Pauli::Y) - i32::from(had_y);
        self.phase = k.rem_euclid(4) as u8;
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Phase `k` in `i^k · X^x Z^z`.
    pub fn raw_phase(&self) -> Phase {
        Phase(self.phase)
    }

    /// Phase in front of the Hermitian letter form (`X`, `Y`, `Z`).
    pub fn phase(&self) -> Phase {
        Phase::new(self.phase as i64 - dot(&self.x, &self.z) as i64)
    }

    pub fn x_bit(&self, q: usize) -> bool {
        self.x[q / 64] >> (q % 64) & 1 == 1
    }

    pub fn z_bit(&self, q: usize) -> bool {
        self.z[q / 64] >> (q % 64) & 1 == 1
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn letter(&self, q: usize) -> Pauli {
        match (self.x_bit(q), self.z_bit(q)) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Qubits on which the operator acts nontrivially, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, (a, b)) in self.x.iter().zip(&self.z).enumerate() {
            let mut m = a | b;
            while m != 0 {
                let t = m.trailing_zeros() as usize;
                out.push(w * 64 + t);
                m &= m - 1;
            }
        }
        out
    }

    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.x.iter().all(|&w| w == 0) && self.z.iter().all(|&w| w == 0)
    }

    /// True iff the operator is exactly `+I`.
    pub fn is_identity(&self) -> bool {
        self.is_identity_up_to_phase() && self.phase == 0
    }

    /// Multiply by `i^k`.
    pub fn with_phase(mut self, k: Phase) -> Self {
        self.phase = (self.phase + k.0) & 3;
        self
    }

    pub fn negate(self) -> Self {
        self.with_phase(Phase::MINUS_ONE)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::QubitMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        // X^a Z^b X^c Z^d = (-1)^{b·c} X^{a+c} Z^{b+d}
        let sign = 2 * (dot(&self.z, &other.x) & 1) as u8;
        Ok(PauliOperator {
            n: self.n,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
            phase: (self.phase + other.phase + sign) & 3,
        })
    }

    pub fn commutes_with(&self, other: &Self) -> Result<bool> {
        self.check(other)?;
        Ok((dot(&self.x, &other.z) + dot(&self.z, &other.x)) % 2 == 0)
    }

    pub fn adjoint(&self) -> Self {
        // (i^k X^x Z^z)† = i^{-k} Z^z X^x = i^{-k} (-1)^{x·z} X^x Z^z
        let k = -(self.phase as i64) + 2 * dot(&self.x, &self.z) as i64;
        PauliOperator {
            n: self.n,
            x: self.x.clone(),
            z: self.z.clone(),
            phase: k.rem_euclid(4) as u8,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        (self.phase as u32 + dot(&self.x, &self.z)) % 2 == 0
    }

    /// `P² = I` holds exactly when `P` is Hermitian.
    pub fn squares_to_identity(&self) -> bool {
        self.is_hermitian()
    }

    /// Image of the basis state `b` as `(b', k)` with `P|b⟩ = i^k |b'⟩`.
    /// Only valid for registers of at most 64 qubits.
    pub fn apply_to_basis(&self, b: u64) -> (u64, u8) {
        debug_assert!(self.n <= 64);
        let (xm, zm) = (self.index_mask(&self.x), self.index_mask(&self.z));
        let sign = 2 * ((zm & b).count_ones() & 1) as u8;
        (b ^ xm, (self.phase + sign) & 3)
    }

    fn index_mask(&self, bits: &[u64]) -> u64 {
        // qubit q sits at bit n-1-q of the basis index
        let mut m = 0u64;
        let raw = bits.first().copied().unwrap_or(0);
        for q in 0..self.n {
            if raw >> q & 1 == 1 {
                m |= 1 << (self.n - 1 - q);
            }
        }
        m
    }

    /// Dense `2^n × 2^n` matrix, refused above [`DENSE_QUBIT_CAP`] qubits.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        if self.n > DENSE_QUBIT_CAP {
            return Err(Error::ResourceCap {
                what: "dense Pauli matrix (qubits)",
                requested: self.n,
                cap: DENSE_QUBIT_CAP,
            });
        }
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim as u64 {
            let (t, k) = self.apply_to_basis(b);
            m[(t as usize, b as usize)] = phase_value(k);
        }
        Ok(m)
    }

    /// Parse the textual form, e.g. `"+X0 Z3 Z4"`, `"-iY2"` or `"+I"`.
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let s = s.trim();
        let (mut k, rest) = match s.as_bytes().first() {
            Some(b'+') => (0, &s[1..]),
            Some(b'-') => (2, &s[1..]),
            _ => (0, s),
        };
        let rest = match rest.strip_prefix('i') {
            Some(r) => {
                k += 1;
                r
            }
            None => rest,
        };
        let mut op = Self::identity(n).with_phase(Phase(k));
        let mut seen_any = false;
        for tok in rest.split_whitespace() {
            seen_any = true;
            let mut chars = tok.chars();
            let letter = match chars.next() {
                Some('I') => Pauli::I,
                Some('X') => Pauli::X,
                Some('Y') => Pauli::Y,
                Some('Z') => Pauli::Z,
                _ => return Err(Error::Parse(format!("bad Pauli token '{tok}'"))),
            };
            let digits = chars.as_str();
            if letter == Pauli::I && digits.is_empty() {
                continue;
            }
            let q: usize = digits
                .parse()
                .map_err(|_| Error::Parse(format!("bad site in '{tok}'")))?;
            if q >= n {
                return Err(Error::Parse(format!(
                    "site {q} out of range for {n} qubits"
                )));
            }
            op = op.compose(&Self::single(n, q, letter))?;
        }
        if !seen_any {
            return Err(Error::Parse(format!("empty Pauli string '{s}'")));
        }
        Ok(op)
    }
}

impl fmt::Display for PauliOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phase().prefix())?;
        let support = self.support();
        if support.is_empty() {
            return f.write_str("I");
        }
        for (i, q) in support.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", self.letter(*q).letter(), q)?;
        }
        Ok(())
    }
}

impl Mul for &PauliOperator {
    type Output = PauliOperator;

    /// Panics on a qubit-count mismatch; use [`PauliOperator::compose`] to get an error instead.
    fn mul(self, rhs: &PauliOperator) -> PauliOperator {
        self.compose(rhs).expect("qubit count mismatch")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_letter(p: Pauli) -> DMatrix<Complex64> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match p {
            Pauli::I => DMatrix::identity(2, 2),
            Pauli::X => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        }
    }

    // Independent construction by Kronecker products of 2×2 matrices.
    fn kron_dense(op: &PauliOperator) -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::identity(1, 1);
        for q in 0..op.n_qubits() {
            m = m.kronecker(&dense_letter(op.letter(q)));
        }
        m * op.phase().to_complex()
    }

    fn arb_pauli(n: usize) -> impl Strategy<Value = PauliOperator> {
        (prop::collection::vec(0u8..4, n), 0u8..4).prop_map(move |(letters, k)| {
            let mut op = PauliOperator::identity(n).with_phase(Phase(k));
            for (q, l) in letters.into_iter().enumerate() {
                let p = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][l as usize];
                op = &op * &PauliOperator::single(n, q, p);
            }
            op
        })
    }

    #[test]
    fn letter_algebra() {
        let x = PauliOperator::single(1, 0, Pauli::X);
        let y = PauliOperator::single(1, 0, Pauli::Y);
        let z = PauliOperator::single(1, 0, Pauli::Z);
        assert_eq!(&x * &y, z.clone().with_phase(Phase::I));
        assert_eq!(&y * &x, z.clone().with_phase(Phase::MINUS_I));
        assert!(!x.commutes_with(&z).unwrap());
        assert!((&x * &x).is_identity());
    }

    #[test]
    fn text_examples() {
        let a = PauliOperator::parse("+X0 Z3 Z4", 5).unwrap();
        assert_eq!(a.to_string(), "+X0 Z3 Z4");
        assert_eq!(PauliOperator::parse("-iY2", 3).unwrap().to_string(), "-iY2");
        assert_eq!(PauliOperator::parse("+I", 3).unwrap().to_string(), "+I");
        assert_eq!(PauliOperator::parse("X0 Z0", 1).unwrap().to_string(), "-iY0");
        assert!(PauliOperator::parse("+Q1", 3).is_err());
        assert!(PauliOperator::parse("+X9", 3).is_err());
    }

    #[test]
    fn dense_cap() {
        assert!(PauliOperator::identity(15).to_dense().is_err());
    }

    #[test]
    fn wide_registers() {
        let a = PauliOperator::xz(200, &[3, 150], &[70]);
        let b = PauliOperator::xz(200, &[70], &[150]);
        assert!(a.commutes_with(&b).unwrap());
        assert_eq!(a.support(), vec![3, 70, 150]);
        let c = PauliOperator::parse(&a.to_string(), 200).unwrap();
        assert_eq!(a, c);
    }

    proptest! {
        #[test]
        fn product_matches_dense(a in arb_pauli(4), b in arb_pauli(4)) {
            let lhs = (&a * &b).to_dense().unwrap();
            let rhs = kron_dense(&a) * kron_dense(&b);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn dense_matches_kron(a in arb_pauli(5)) {
            prop_assert!((a.to_dense().unwrap() - kron_dense(&a)).norm() < 1e-12);
        }

        #[test]
        fn commutation_matches_dense(a in arb_pauli(4), b in arb_pauli(4)) {
            let (da, db) = (kron_dense(&a), kron_dense(&b));
            let comm = &da * &db - &db * &da;
            prop_assert_eq!(a.commutes_with(&b).unwrap(), comm.norm() < 1e-12);
        }

        #[test]
        fn text_round_trip(a in arb_pauli(7)) {
            prop_assert_eq!(PauliOperator::parse(&a.to_string(), 7).unwrap(), a);
        }

        #[test]
        fn associativity(a in arb_pauli(6), b in arb_pauli(6), c in arb_pauli(6)) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        }

        #[test]
        fn hermitian_iff_square_identity(a in arb_pauli(5)) {
            prop_assert_eq!(a.is_hermitian(), (&a * &a).is_identity());
            let d = a.to_dense().unwrap();
            prop_assert!((a.adjoint().to_dense().unwrap() - d.adjoint()).norm() < 1e-12);
        }
    }
}
