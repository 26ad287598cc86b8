//! Dense fermionic Fock space for small mode counts. Used as the reference
//! for the Gaussian routines.
//!
//! Mode 0 is the most significant bit of a basis index, `c_j` carries
//! Jordan–Wigner strings on the modes before it, and `|1⟩` is occupied.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{canonical_form, GibbsKernel, MajoranaCovariance};
use crate::linalg::{c, herm_fn, CMatrix, RMatrix, I};

pub const MAX_MODES: usize = 12;

#[derive(Clone, Debug)]
pub struct FockSpace {
    n: usize,
    annihilators: Vec<CMatrix>,
}

impl FockSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_MODES {
            return Err(Error::ResourceCap {
                what: "fermionic modes",
                requested: n,
                cap: MAX_MODES,
            });
        }
        let dim = 1usize << n;
        let annihilators = (0..n)
            .map(|j| {
                let bit = 1usize << (n - 1 - j);
                let mut m = CMatrix::zeros(dim, dim);
                for s in 0..dim {
                    if s & bit != 0 {
                        let before = (s >> (n - j)).count_ones();
                        let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                        m[(s ^ bit, s)] = c(sign);
                    }
                }
                m
            })
            .collect();
        Ok(FockSpace { n, annihilators })
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn annihilator(&self, j: usize) -> &CMatrix {
        &self.annihilators[j]
    }

    pub fn creator(&self, j: usize) -> CMatrix {
        self.annihilators[j].adjoint()
    }

    /// `γ_{2j} = c_j + c_j†`, `γ_{2j+1} = -i(c_j - c_j†)`.
    pub fn majorana(&self, a: usize) -> CMatrix {
        let cj = &self.annihilators[a / 2];
        if a % 2 == 0 {
            cj + cj.adjoint()
        } else {
            (cj - cj.adjoint()) * -I
        }
    }

    pub fn majoranas(&self) -> Vec<CMatrix> {
        (0..2 * self.n).map(|a| self.majorana(a)).collect()
    }

    /// `(-1)^{N̂}`.
    pub fn parity(&self) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                c(if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            } else {
                c(0.0)
            }
        })
    }

    pub fn basis_index(&self, occupation: &[bool]) -> usize {
        occupation.iter().fold(0, |acc, &o| (acc << 1) | o as usize)
    }

    pub fn basis_state(&self, occupation: &[bool]) -> Result<nalgebra::DVector<Complex64>> {
        if occupation.len() != self.n {
            return Err(Error::SizeMismatch(format!("{} occupations for {} modes", occupation.len(), self.n)));
        }
        let mut v = nalgebra::DVector::zeros(self.dim());
        v[self.basis_index(occupation)] = c(1.0);
        Ok(v)
    }

    /// `M_ab = -i tr(ρ(γ_a γ_b - δ_ab))`.
    pub fn covariance(&self, rho: &CMatrix) -> RMatrix {
        let g = self.majoranas();
        let n2 = 2 * self.n;
        let mut m = RMatrix::zeros(n2, n2);
        for a in 0..n2 {
            for b in a + 1..n2 {
                let v = (rho * &g[a] * &g[b]).trace() * -I;
                m[(a, b)] = v.re;
                m[(b, a)] = -v.re;
            }
        }
        m
    }

    /// `ρ = 2^{-N} Π_j (1 - λ_j i ξ_{2j} ξ_{2j+1})` with `ξ = Oᵀγ`.
    pub fn gaussian_density(&self, m: &MajoranaCovariance) -> Result<CMatrix> {
        self.check(m.n_modes())?;
        let cf = canonical_form(m.matrix());
        let g = self.majoranas();
        let xi: Vec<CMatrix> = (0..2 * self.n)
            .map(|a| {
                let mut x = CMatrix::zeros(self.dim(), self.dim());
                for (b, gb) in g.iter().enumerate() {
                    x += gb * c(cf.o[(b, a)]);
                }
                x
            })
            .collect();
        let d = self.dim();
        let mut rho = CMatrix::identity(d, d) * c(1.0 / d as f64);
        for (j, &l) in cf.lambda.iter().enumerate() {
            let f = CMatrix::identity(d, d) - &xi[2 * j] * &xi[2 * j + 1] * (I * l);
            rho = rho * f;
        }
        Ok(rho)
    }

    /// `H = (i/4) Σ_ab A_ab γ_a γ_b`.
    pub fn quadratic(&self, a: &RMatrix) -> Result<CMatrix> {
        self.check(a.nrows() / 2)?;
        let g = self.majoranas();
        let d = self.dim();
        let mut h = CMatrix::zeros(d, d);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    h += &g[i] * &g[j] * (I * (a[(i, j)] / 4.0));
                }
            }
        }
        Ok(h)
    }

    /// `ρ → (1-p)ρ + p γ_a ρ γ_a` applied for every Majorana in turn.
    pub fn majorana_channel(&self, rho: &CMatrix, p: f64) -> CMatrix {
        let mut out = rho.clone();
        for g in self.majoranas() {
            out = &out * c(1.0 - p) + &g * &out * &g * c(p);
        }
        out
    }

    /// `γ_S = γ_{s_1} γ_{s_2} ⋯` for ascending `s`.
    pub fn majorana_string(&self, set: &[usize]) -> CMatrix {
        let d = self.dim();
        set.iter().fold(CMatrix::identity(d, d), |acc, &a| acc * self.majorana(a))
    }

    /// `ρ_X ⊗ I / 2^{N-|X|}`: the part of `ρ` supported on the Majoranas of
    /// the modes in `x`.
    pub fn reduce(&self, rho: &CMatrix, modes: &[usize]) -> CMatrix {
        let majs: Vec<usize> = modes.iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect();
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for mask in 0u64..(1 << majs.len()) {
            let mut set: Vec<usize> = (0..majs.len()).filter(|&i| mask >> i & 1 == 1).map(|i| majs[i]).collect();
            set.sort_unstable();
            let gs = self.majorana_string(&set);
            let coef = (rho * gs.adjoint()).trace() / d as f64;
            if coef.norm() > 0.0 {
                out += gs * coef;
            }
        }
        out
    }

    /// `i tr(ρ [ln ρ_AC, ln ρ_BC])` with eigenvalues floored at `floor`.
    pub fn modular_commutator(&self, rho: &CMatrix, a: &[usize], b: &[usize], cc: &[usize], floor: f64) -> f64 {
        let ac: Vec<usize> = a.iter().chain(cc).copied().collect();
        let bc: Vec<usize> = b.iter().chain(cc).copied().collect();
        let abc: Vec<usize> = a.iter().chain(b).chain(cc).copied().collect();
        let ln = |m: &CMatrix| herm_fn(m, |x| x.max(floor).ln());
        let l1 = ln(&self.reduce(rho, &ac));
        let l2 = ln(&self.reduce(rho, &bc));
        let r = self.reduce(rho, &abc);
        ((r * (&l1 * &l2 - &l2 * &l1)).trace() * I).re
    }

    /// Normalised `e^{-H/2}|m⟩` for `H = (i/2)γᵀKγ`.
    pub fn evolved_state(&self, kernel: &GibbsKernel, occupation: &[bool]) -> Result<nalgebra::DVector<Complex64>> {
        self.check(kernel.n_modes())?;
        let h = self.quadratic(&(kernel.matrix()? * 2.0))?;
        let v = (h * c(-0.5)).exp() * self.basis_state(occupation)?;
        let nrm = v.norm();
        Ok(v / c(nrm))
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::SizeMismatch(format!("{n} modes on a {}-mode Fock space", self.n)));
        }
        Ok(())
    }
}

pub fn projector(v: &nalgebra::DVector<Complex64>) -> CMatrix {
    v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{random_mixed_covariance, random_pure_covariance};
    use crate::linalg::{max_abs, max_abs_real};
    use crate::rng::task_rng;

    #[test]
    fn canonical_anticommutation() {
        let f = FockSpace::new(3).unwrap();
        let g = f.majoranas();
        let id = CMatrix::identity(8, 8);
        for a in 0..6 {
            for b in 0..6 {
                let ac = &g[a] * &g[b] + &g[b] * &g[a];
                let want = if a == b { &id * c(2.0) } else { &id * c(0.0) };
                assert!(max_abs(&(ac - want)) < 1e-14);
            }
        }
        let vac = f.basis_state(&[false; 3]).unwrap();
        let m = f.covariance(&projector(&vac));
        assert!(max_abs_real(&(m - MajoranaCovariance::vacuum(3).into_matrix())) < 1e-14);
    }

    #[test]
    fn gaussian_density_round_trip() {
        let f = FockSpace::new(3).unwrap();
        let mut rng = task_rng(11, 0);
        for m in [random_pure_covariance(3, &mut rng), random_mixed_covariance(3, 0.8, &mut rng)] {
            let rho = f.gaussian_density(&m).unwrap();
            assert!((rho.trace() - c(1.0)).norm() < 1e-12);
            assert!(max_abs_real(&(f.covariance(&rho) - m.matrix())) < 1e-12);
        }
    }

    #[test]
    fn reduce_matches_restricted_covariance() {
        let f = FockSpace::new(4).unwrap();
        let mut rng = task_rng(12, 0);
        let m = random_pure_covariance(4, &mut rng);
        let rho = f.gaussian_density(&m).unwrap();
        let red = f.covariance(&f.reduce(&rho, &[1, 3]));
        let idx = crate::gaussian::majorana_indices(&[1, 3]);
        for a in 0..8 {
            for b in 0..8 {
                let want = if idx.contains(&a) && idx.contains(&b) { m.matrix()[(a, b)] } else { 0.0 };
                assert!((red[(a, b)] - want).abs() < 1e-12);
            }
        }
    }
}
