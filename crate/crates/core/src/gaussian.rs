//! Fermionic Gaussian states in the Majorana representation.
//!
//! Modes sit on lattice sites `s = x + Lx·y`; mode `s` carries the Majoranas
//! `γ_{2s} = c_s + c_s†` and `γ_{2s+1} = -i(c_s - c_s†)`. A state is described
//! by `M_jk = -i tr(ρ(γ_j γ_k - δ_jk))`, a quadratic Hamiltonian by `A` in
//! `H = (i/4) γᵀ A γ`, and a Gaussian density `ρ ∝ e^{-(i/2) γᵀ K γ}` by `K`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::check_rate;
use crate::linalg::{self, c, eigh, eigvalsh, herm_fn, max_abs_real, submatrix, to_complex, CMatrix, RMatrix, I};
use crate::stats;

pub const ANTISYMMETRY_TOL: f64 = 1e-10;
pub const SPECTRUM_TOL: f64 = 1e-8;
pub const PURITY_TOL: f64 = 1e-8;
/// `|ν|` above `1 - CLIP_EPS` is clipped before taking `atanh`.
pub const CLIP_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MajoranaCovariance {
    m: RMatrix,
}

impl MajoranaCovariance {
    pub fn new(m: RMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 {
            return Err(Error::SizeMismatch(format!("covariance must be 2N×2N, got {}×{}", m.nrows(), m.ncols())));
        }
        let defect = linalg::antisymmetry_defect(&m);
        if defect > ANTISYMMETRY_TOL {
            return Err(Error::Validation(format!("covariance not antisymmetric (defect {defect:.2e})")));
        }
        let cov = MajoranaCovariance { m };
        let r = cov.spectral_radius();
        if r > 1.0 + SPECTRUM_TOL {
            return Err(Error::Validation(format!("spectrum of iM exceeds 1 (radius {r})")));
        }
        Ok(cov)
    }

    /// Skips validation; for matrices produced by routines that guarantee it.
    pub(crate) fn trusted(m: RMatrix) -> Self {
        MajoranaCovariance { m }
    }

    /// Vacuum of every mode.
    pub fn vacuum(n_modes: usize) -> Self {
        let mut m = RMatrix::zeros(2 * n_modes, 2 * n_modes);
        for j in 0..n_modes {
            m[(2 * j, 2 * j + 1)] = 1.0;
            m[(2 * j + 1, 2 * j)] = -1.0;
        }
        MajoranaCovariance { m }
    }

    pub fn n_modes(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> RMatrix {
        self.m
    }

    /// Eigenvalues of `iM`, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        eigvalsh(&to_complex(&self.m).map(|z| z * I))
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectrum().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |M² + I|`.
    pub fn purity_defect(&self) -> f64 {
        let n = self.m.nrows();
        max_abs_real(&(&self.m * &self.m + RMatrix::identity(n, n)))
    }

    pub fn is_pure(&self) -> bool {
        self.purity_defect() < PURITY_TOL
    }

    /// Covariance of the reduced state on the given modes.
    pub fn restrict(&self, modes: &[usize]) -> Self {
        MajoranaCovariance {
            m: submatrix(&self.m, &majorana_indices(modes)),
        }
    }

    /// Single-Majorana channel `ρ → (1-p)ρ + p γ_j ρ γ_j` on every Majorana.
    pub fn apply_channel(&self, p: f64) -> Result<Self> {
        apply_majorana_channel(self, p)
    }
}

pub fn majorana_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect()
}

/// `M → (1-2p)² M`.
pub fn apply_majorana_channel(m: &MajoranaCovariance, p: f64) -> Result<MajoranaCovariance> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::invalid(format!("rate {p} outside [0, 0.5]")));
    }
    Ok(MajoranaCovariance {
        m: &m.m * (1.0 - 2.0 * p).powi(2),
    })
}

/// Block form `M = O (⊕_j λ_j iY) Oᵀ` with `O` orthogonal and `λ_j ≥ 0`.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    pub o: RMatrix,
    pub lambda: Vec<f64>,
}

/// Canonical form of a real antisymmetric matrix. For an eigenvector
/// `v = (a + ib)/√2` of `iM` with eigenvalue `λ > 0`, the pair `(b, a)` spans
/// one block. The kernel is given an orthonormal real basis and paired up.
pub fn canonical_form(m: &RMatrix) -> CanonicalForm {
    let n2 = m.nrows();
    let (vals, vecs) = eigh(&to_complex(m).map(|z| z * I));
    let tol = 1e-10 * max_abs_real(m).max(1.0);
    let mut o = RMatrix::zeros(n2, n2);
    let mut lambda = Vec::new();
    let mut col = 0;
    let mut null = Vec::new();
    for j in 0..n2 {
        let l = vals[j];
        let v = vecs.column(j);
        if l > tol {
            for r in 0..n2 {
                o[(r, col)] = 2f64.sqrt() * v[r].im;
                o[(r, col + 1)] = 2f64.sqrt() * v[r].re;
            }
            lambda.push(l);
            col += 2;
        } else if l.abs() <= tol {
            null.push(nalgebra::DVector::from_iterator(n2, v.iter().map(|z| z.re)));
            null.push(nalgebra::DVector::from_iterator(n2, v.iter().map(|z| z.im)));
        }
    }
    let want = n2 - col;
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for mut v in null {
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        let nrm = v.norm();
        if nrm > 1e-6 && basis.len() < want {
            basis.push(v / nrm);
        }
    }
    for b in basis {
        o.set_column(col, &b);
        col += 1;
    }
    lambda.resize(n2 / 2, 0.0);
    CanonicalForm { o, lambda }
}

fn block_diag(lambda: &[f64], f: impl Fn(f64) -> f64) -> RMatrix {
    let mut d = RMatrix::zeros(2 * lambda.len(), 2 * lambda.len());
    for (j, &l) in lambda.iter().enumerate() {
        d[(2 * j, 2 * j + 1)] = f(l);
        d[(2 * j + 1, 2 * j)] = -f(l);
    }
    d
}

#[derive(Clone, Debug)]
enum KernelRepr {
    /// `K = O (⊕ β_j iY) Oᵀ`, `β_j = ∞` for pure modes.
    Canonical { o: RMatrix, betas: Vec<f64> },
    /// `K = β M₀` with `M₀` pure.
    Uniform { m0: RMatrix, beta: f64 },
}

/// Single-particle generator of a Gaussian density, `ρ ∝ e^{-(i/2)γᵀKγ}`.
#[derive(Clone, Debug)]
pub struct GibbsKernel {
    repr: KernelRepr,
}

impl GibbsKernel {
    /// `K = -i atanh(iM)`. Modes with `λ ≥ 1 - CLIP_EPS` get `β = ∞`; if
    /// `expect_mixed` is set they are an error instead.
    pub fn from_covariance(m: &MajoranaCovariance, expect_mixed: bool) -> Result<Self> {
        let cf = canonical_form(&m.m);
        let mut betas = Vec::with_capacity(cf.lambda.len());
        for &l in &cf.lambda {
            if l >= 1.0 - CLIP_EPS {
                if expect_mixed {
                    return Err(Error::SingularMode(format!("eigenvalue {l} of iM at ±1")));
                }
                betas.push(f64::INFINITY);
            } else {
                betas.push(l.atanh());
            }
        }
        Ok(GibbsKernel {
            repr: KernelRepr::Canonical { o: cf.o, betas },
        })
    }

    /// `K = β M₀` for a pure `M₀`; the decohered state has this form.
    pub fn uniform(m0: &MajoranaCovariance, beta: f64) -> Result<Self> {
        if !m0.is_pure() {
            return Err(Error::Validation("uniform kernel needs a pure covariance".into()));
        }
        if !(beta >= 0.0) {
            return Err(Error::invalid(format!("β = {beta}")));
        }
        Ok(GibbsKernel {
            repr: KernelRepr::Uniform { m0: m0.m.clone(), beta },
        })
    }

    /// Kernel of the ground state `M₀` after the channel at rate `p`:
    /// `K = β M₀` with `tanh β = (1-2p)²`.
    pub fn decohered(m0: &MajoranaCovariance, p: f64) -> Result<Self> {
        check_rate(p)?;
        Self::uniform(m0, ((1.0 - 2.0 * p).powi(2)).atanh())
    }

    pub fn n_modes(&self) -> usize {
        match &self.repr {
            KernelRepr::Canonical { o, .. } => o.nrows() / 2,
            KernelRepr::Uniform { m0, .. } => m0.nrows() / 2,
        }
    }

    pub fn betas(&self) -> Vec<f64> {
        match &self.repr {
            KernelRepr::Canonical { betas, .. } => betas.clone(),
            KernelRepr::Uniform { m0, beta } => vec![*beta; m0.nrows() / 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.betas().iter().all(|b| b.is_finite())
    }

    pub fn matrix(&self) -> Result<RMatrix> {
        if !self.is_finite() {
            return Err(Error::SingularMode("kernel has β = ∞ modes".into()));
        }
        Ok(match &self.repr {
            KernelRepr::Canonical { o, betas } => o * block_diag(betas, |b| b) * o.transpose(),
            KernelRepr::Uniform { m0, beta } => m0 * *beta,
        })
    }

    pub fn from_matrix(k: &RMatrix) -> Result<Self> {
        if linalg::antisymmetry_defect(k) > ANTISYMMETRY_TOL {
            return Err(Error::Validation("kernel not antisymmetric".into()));
        }
        let cf = canonical_form(k);
        Ok(GibbsKernel {
            repr: KernelRepr::Canonical { o: cf.o, betas: cf.lambda },
        })
    }

    pub fn to_covariance(&self) -> MajoranaCovariance {
        let m = match &self.repr {
            KernelRepr::Canonical { o, betas } => o * block_diag(betas, f64::tanh) * o.transpose(),
            KernelRepr::Uniform { m0, beta } => m0 * beta.tanh(),
        };
        MajoranaCovariance::trusted(m)
    }

    /// `e^{iK}`, the single-particle matrix of `e^{-(i/4)γᵀKγ}`.
    fn exp_ik(&self) -> Result<CMatrix> {
        if !self.is_finite() {
            return Err(Error::invalid("e^{-H/2} needs finite β (p > 0); use the ground state directly"));
        }
        Ok(match &self.repr {
            KernelRepr::Canonical { o, betas } => {
                let n2 = o.nrows();
                let mut d = CMatrix::zeros(n2, n2);
                for (j, &b) in betas.iter().enumerate() {
                    d[(2 * j, 2 * j)] = c(b.cosh());
                    d[(2 * j + 1, 2 * j + 1)] = c(b.cosh());
                    d[(2 * j, 2 * j + 1)] = I * b.sinh();
                    d[(2 * j + 1, 2 * j)] = -I * b.sinh();
                }
                let oc = to_complex(o);
                &oc * d * oc.transpose()
            }
            KernelRepr::Uniform { m0, beta } => {
                let n2 = m0.nrows();
                let mut e = m0.map(|x| I * (x * beta.sinh()));
                for j in 0..n2 {
                    e[(j, j)] += c(beta.cosh());
                }
                e
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    Antiperiodic,
    Open,
}

impl Boundary {
    fn wrap_sign(self) -> Option<f64> {
        match self {
            Boundary::Periodic => Some(1.0),
            Boundary::Antiperiodic => Some(-1.0),
            Boundary::Open => None,
        }
    }

    /// Allowed momenta on a ring of `l` sites.
    pub fn momenta(self, l: usize) -> Result<Vec<f64>> {
        let shift = match self {
            Boundary::Periodic => 0.0,
            Boundary::Antiperiodic => 0.5,
            Boundary::Open => return Err(Error::invalid("open direction has no momentum")),
        };
        Ok((0..l).map(|n| 2.0 * std::f64::consts::PI * (n as f64 + shift) / l as f64).collect())
    }
}

/// `H = Σ -t(c†_{r+x̂}c_r + c†_{r+ŷ}c_r + h.c.) + Δ(c†_{r+x̂}c†_r + i c†_{r+ŷ}c†_r + h.c.)
///      - (μ - 4t) c†_r c_r` on an `Lx × Ly` lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdgModel {
    pub lx: usize,
    pub ly: usize,
    pub t: f64,
    pub delta: f64,
    pub mu: f64,
    pub bc: [Boundary; 2],
}

impl BdgModel {
    /// `t = Δ = 1/2`, `μ = 1`, antiperiodic in both directions.
    pub fn p_ip(lx: usize, ly: usize) -> Self {
        BdgModel {
            lx,
            ly,
            t: 0.5,
            delta: 0.5,
            mu: 1.0,
            bc: [Boundary::Antiperiodic; 2],
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_bc(mut self, bx: Boundary, by: Boundary) -> Self {
        self.bc = [bx, by];
        self
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        x + self.lx * y
    }

    fn check(&self) -> Result<()> {
        if self.lx == 0 || self.ly == 0 {
            return Err(Error::invalid("empty lattice"));
        }
        Ok(())
    }

    /// Hopping `h` and pairing `D` with `H = c†hc + ½(c†Dc†ᵀ + h.c.)`.
    pub fn nambu_blocks(&self) -> Result<(CMatrix, CMatrix)> {
        self.check()?;
        let n = self.n_sites();
        let mut h = CMatrix::zeros(n, n);
        let mut d = CMatrix::zeros(n, n);
        for y in 0..self.ly {
            for x in 0..self.lx {
                let r = self.site(x, y);
                h[(r, r)] += c(-(self.mu - 4.0 * self.t));
                for (dir, amp) in [(0usize, c(1.0)), (1, I)] {
                    let (nx, ny, wrapped) = if dir == 0 {
                        ((x + 1) % self.lx, y, x + 1 == self.lx)
                    } else {
                        (x, (y + 1) % self.ly, y + 1 == self.ly)
                    };
                    let s = if wrapped {
                        match self.bc[dir].wrap_sign() {
                            Some(s) => s,
                            None => continue,
                        }
                    } else {
                        1.0
                    };
                    let q = self.site(nx, ny);
                    h[(q, r)] += c(-self.t * s);
                    h[(r, q)] += c(-self.t * s);
                    d[(q, r)] += amp * (self.delta * s);
                    d[(r, q)] -= amp * (self.delta * s);
                }
            }
        }
        Ok((h, d))
    }

    /// `A` with `H = (i/4) γᵀ A γ + const`.
    pub fn majorana_matrix(&self) -> Result<RMatrix> {
        let (h, d) = self.nambu_blocks()?;
        Ok(majorana_from_nambu(&h, &d))
    }

    /// Dense ground state by diagonalising `iA`.
    pub fn ground_state_covariance(&self) -> Result<MajoranaCovariance> {
        let a = self.majorana_matrix()?;
        ground_state_of(&a)
    }

    pub fn xi(&self, k: (f64, f64)) -> f64 {
        -2.0 * self.t * (k.0.cos() + k.1.cos()) - (self.mu - 4.0 * self.t)
    }

    /// Pair potential `D_k` with `H = Σ_k ξ_k c†_k c_k + ½ Σ_k (D_k c†_k c†_{-k} + h.c.)`.
    pub fn pair_potential(&self, k: (f64, f64)) -> Complex64 {
        Complex64::new(2.0 * self.delta * k.1.sin(), -2.0 * self.delta * k.0.sin())
    }

    pub fn quasiparticle_energy(&self, k: (f64, f64)) -> f64 {
        self.xi(k).hypot(self.pair_potential(k).norm())
    }

    /// Bogoliubov amplitudes with `α_k† = u c_k† + v* c_{-k}` raising the energy by `E_k`.
    pub fn bogoliubov(&self, k: (f64, f64)) -> (f64, Complex64) {
        let xi = self.xi(k);
        let d = self.pair_potential(k);
        let e = self.quasiparticle_energy(k);
        if d.norm() < 1e-300 {
            return if xi > 0.0 { (1.0, c(0.0)) } else { (0.0, c(1.0)) };
        }
        let u = ((e + xi) / (2.0 * e)).sqrt();
        let v_conj = c(u * (e - xi)) / d;
        (u, v_conj.conj())
    }

    /// Momentum grid (both directions must be periodic or antiperiodic).
    pub fn momentum_grid(&self) -> Result<Vec<(f64, f64)>> {
        let kx = self.bc[0].momenta(self.lx)?;
        let ky = self.bc[1].momenta(self.ly)?;
        Ok(ky.iter().flat_map(|&b| kx.iter().map(move |&a| (a, b))).collect())
    }

    /// Minimum quasiparticle energy over the momentum grid.
    pub fn gap(&self) -> Result<f64> {
        Ok(self
            .momentum_grid()?
            .into_iter()
            .map(|k| self.quasiparticle_energy(k))
            .fold(f64::INFINITY, f64::min))
    }

    /// Bloch matrix `Ã(k)` of a strip periodic (or antiperiodic) in `x`,
    /// indexed by `(y, a) → 2y + a`.
    pub fn strip_bloch(&self, kx: f64) -> Result<CMatrix> {
        if self.bc[0] == Boundary::Open {
            return Err(Error::invalid("strip needs a closed x direction"));
        }
        // couplings read off a 3-site periodic ring, which has no aliasing
        let probe = BdgModel {
            lx: 3,
            bc: [Boundary::Periodic, self.bc[1]],
            ..self.clone()
        };
        let a = probe.majorana_matrix()?;
        let w = 2 * self.ly;
        let mut out = CMatrix::zeros(w, w);
        for (dx, xs) in [(0i32, 0usize), (1, 1), (-1, 2)] {
            let phase = Complex64::from_polar(1.0, -kx * dx as f64);
            for y in 0..self.ly {
                for yp in 0..self.ly {
                    for aa in 0..2 {
                        for bb in 0..2 {
                            let v = a[(2 * probe.site(xs, y) + aa, 2 * probe.site(0, yp) + bb)];
                            out[(2 * y + aa, 2 * yp + bb)] += phase * v;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Ground state block by block in `k_x`.
    pub fn strip_ground_state(&self) -> Result<StripCovariance> {
        let ks = self.bc[0].momenta(self.lx)?;
        let mut blocks = Vec::with_capacity(ks.len());
        for &k in &ks {
            let a = self.strip_bloch(k)?;
            let ia = a.map(|z| z * I);
            let (vals, _) = eigh(&ia);
            let gap = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if gap < 1e-8 {
                return Err(Error::Gapless(format!("single-particle gap {gap:.2e} at k_x = {k:.4}")));
            }
            blocks.push(herm_fn(&ia, f64::signum).map(|z| z * -I));
        }
        Ok(StripCovariance {
            lx: self.lx,
            ly: self.ly,
            ks,
            blocks,
        })
    }

    /// `⟨H⟩ = ¼ tr(A M)`.
    pub fn energy(&self, m: &MajoranaCovariance) -> Result<f64> {
        let a = self.majorana_matrix()?;
        Ok((&a * m.matrix()).trace() / 4.0)
    }
}

/// `A = 2 Im(W† H_BdG W)` for `Ψ = (c, c†) = W γ`.
pub fn majorana_from_nambu(h: &CMatrix, d: &CMatrix) -> RMatrix {
    let n = h.nrows();
    let mut hb = CMatrix::zeros(2 * n, 2 * n);
    hb.view_mut((0, 0), (n, n)).copy_from(h);
    hb.view_mut((0, n), (n, n)).copy_from(d);
    hb.view_mut((n, 0), (n, n)).copy_from(&d.adjoint());
    hb.view_mut((n, n), (n, n)).copy_from(&(-h.transpose()));
    let w = nambu_w(n);
    let g = w.adjoint() * hb * w;
    g.map(|z| 2.0 * z.im)
}

/// `W` with `c_j = (γ_{2j} + iγ_{2j+1})/2`, rows ordered `(c, c†)`.
fn nambu_w(n: usize) -> CMatrix {
    let mut w = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        w[(j, 2 * j)] = c(0.5);
        w[(j, 2 * j + 1)] = I * 0.5;
        w[(n + j, 2 * j)] = c(0.5);
        w[(n + j, 2 * j + 1)] = -I * 0.5;
    }
    w
}

/// `M = -i sign(iA)`; fails if `iA` has an eigenvalue within `1e-8` of zero.
pub fn ground_state_of(a: &RMatrix) -> Result<MajoranaCovariance> {
    let ia = to_complex(a).map(|z| z * I);
    let (vals, _) = eigh(&ia);
    let gap = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if gap < 1e-8 {
        return Err(Error::Gapless(format!("single-particle gap {gap:.2e}")));
    }
    let m = herm_fn(&ia, f64::signum).map(|z| (z * -I).re);
    Ok(MajoranaCovariance::trusted(m))
}

/// Covariance invariant under (possibly twisted) translations along `x`,
/// stored as one `2Ly × 2Ly` Bloch block per momentum.
#[derive(Clone, Debug)]
pub struct StripCovariance {
    pub lx: usize,
    pub ly: usize,
    pub ks: Vec<f64>,
    pub blocks: Vec<CMatrix>,
}

impl StripCovariance {
    pub fn n_modes(&self) -> usize {
        self.lx * self.ly
    }

    pub fn scaled(&self, f: f64) -> Self {
        StripCovariance {
            blocks: self.blocks.iter().map(|b| b * c(f)).collect(),
            ..self.clone()
        }
    }

    /// Applies a function to each Bloch block.
    pub fn map_blocks(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        StripCovariance {
            blocks: self.blocks.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Real-space block between columns `x` and `x - dx`.
    pub fn real_space_block(&self, dx: usize) -> RMatrix {
        let w = 2 * self.ly;
        let mut out = CMatrix::zeros(w, w);
        for (k, b) in self.ks.iter().zip(&self.blocks) {
            out += b * Complex64::from_polar(1.0, k * dx as f64);
        }
        out.map(|z| z.re / self.lx as f64)
    }

    /// Restriction to arbitrary sites `x + Lx·y`.
    pub fn restrict(&self, sites: &[usize]) -> RMatrix {
        let blocks: Vec<RMatrix> = (0..self.lx).map(|d| self.real_space_block(d)).collect();
        // e^{-ik Lx}: -1 for antiperiodic momenta
        let twist = (self.ks[0] * self.lx as f64).cos().round();
        let n = sites.len();
        RMatrix::from_fn(2 * n, 2 * n, |i, j| {
            let (si, sj) = (sites[i / 2], sites[j / 2]);
            let (xi, yi) = (si % self.lx, si / self.lx);
            let (xj, yj) = (sj % self.lx, sj / self.lx);
            let dx = (xi + self.lx - xj) % self.lx;
            let s = if xi < xj { twist } else { 1.0 };
            s * blocks[dx][(2 * yi + i % 2, 2 * yj + j % 2)]
        })
    }

    pub fn dense(&self) -> MajoranaCovariance {
        let all: Vec<usize> = (0..self.n_modes()).collect();
        MajoranaCovariance::trusted(self.restrict(&all))
    }

    /// Momentum-resolved spectrum of `iM` on the rows `y ∈ rows`, all `x`.
    pub fn rows_spectrum(&self, rows: &[usize]) -> Vec<(f64, Vec<f64>)> {
        let idx: Vec<usize> = rows.iter().flat_map(|&y| [2 * y, 2 * y + 1]).collect();
        self.ks
            .iter()
            .zip(&self.blocks)
            .map(|(&k, b)| (k, eigvalsh(&submatrix(b, &idx).map(|z| z * I))))
            .collect()
    }
}

/// Ground state of `(I ⊕ relabel)` evolved by `e^{-(i/4)γᵀKγ}` from the
/// product state `|m⟩`, as a Thouless state.
#[derive(Clone, Debug)]
pub struct ThoulessState {
    pub occupation: Vec<bool>,
    /// `|ψ⟩ ∝ exp(½ Σ Z_ab f_a† f_b†)|m⟩` with `f_a = c_a` (empty) or `c_a†` (occupied).
    pub z: CMatrix,
    /// `ln ⟨ψ|ψ⟩` for the unnormalised exponential form.
    pub log_norm: f64,
    /// A diagonal shift was needed to invert the propagator block.
    pub regularized: bool,
    frame: CMatrix,
}

impl ThoulessState {
    /// Covariance from the projector `C = X†(XX†)⁻¹X`, `X = [I, -Z]`, onto
    /// the annihilator row space. `frame` spans the same space with
    /// orthonormal columns, so no inverse of `I + ZZ†` is formed.
    pub fn covariance(&self) -> MajoranaCovariance {
        let n = self.z.nrows();
        let cm = &self.frame * self.frame.adjoint();
        let mut m = RMatrix::zeros(2 * n, 2 * n);
        // γ_{2j} = Ψ_j + Ψ_{N+j}, γ_{2j+1} = -iΨ_j + iΨ_{N+j}
        let w: [[Complex64; 2]; 2] = [[c(1.0), c(1.0)], [-I, I]];
        for a in 0..2 {
            for b in 0..2 {
                for j in 0..n {
                    for l in 0..n {
                        let mut s = Complex64::new(0.0, 0.0);
                        for p in 0..2 {
                            for q in 0..2 {
                                s += w[a][p] * cm[(p * n + j, q * n + l)] * w[b][q].conj();
                            }
                        }
                        let delta = if a == b && j == l { 1.0 } else { 0.0 };
                        m[(2 * j + a, 2 * l + b)] = ((s - delta) * -I).re;
                    }
                }
            }
        }
        let f = relabel_signs(&self.occupation);
        for i in 0..2 * n {
            for j in 0..2 * n {
                m[(i, j)] *= f[i] * f[j];
            }
        }
        MajoranaCovariance::trusted(m)
    }
}

fn relabel_signs(occupation: &[bool]) -> Vec<f64> {
    occupation
        .iter()
        .flat_map(|&o| [1.0, if o { -1.0 } else { 1.0 }])
        .collect()
}

/// Nambu blocks of `S = U E U†`, `U = √2 W`: returns `(S11, S12)`.
fn propagator_top_blocks(e: &CMatrix) -> (CMatrix, CMatrix) {
    let n = e.nrows() / 2;
    let mut s11 = CMatrix::zeros(n, n);
    let mut s12 = CMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let (e00, e01, e10, e11) = (
                e[(2 * j, 2 * l)],
                e[(2 * j, 2 * l + 1)],
                e[(2 * j + 1, 2 * l)],
                e[(2 * j + 1, 2 * l + 1)],
            );
            s11[(j, l)] = (e00 - I * e01 + I * e10 + e11) * 0.5;
            s12[(j, l)] = (e00 + I * e01 + I * e10 - e11) * 0.5;
        }
    }
    (s11, s12)
}

/// `e^{-H_ρ/2}|m⟩` for `H_ρ = (i/2)γᵀKγ` through the linear-fractional
/// update of the Thouless matrix. Occupied sites are treated as the vacuum
/// of `c†`, which flips the sign of `γ_{2j+1}`.
pub fn cda_thouless_state(kernel: &GibbsKernel, occupation: &[bool]) -> Result<ThoulessState> {
    let n = kernel.n_modes();
    if occupation.len() != n {
        return Err(Error::SizeMismatch(format!("occupation has {} entries for {n} modes", occupation.len())));
    }
    let mut e = kernel.exp_ik()?;
    let f = relabel_signs(occupation);
    for i in 0..2 * n {
        for j in 0..2 * n {
            e[(i, j)] *= f[i] * f[j];
        }
    }
    let (s11, s12) = propagator_top_blocks(&e);
    let mut regularized = false;
    let z = match s11.clone().lu().solve(&s12) {
        Some(x) if x.iter().all(|v| v.is_finite()) => -x,
        _ => {
            regularized = true;
            let shifted = &s11 + CMatrix::identity(n, n) * c(1e-12);
            -(shifted.lu().solve(&s12).ok_or_else(|| Error::Numerical("propagator block singular".into()))?)
        }
    };
    let z = (&z - z.transpose()) * c(0.5);
    let gram = CMatrix::identity(n, n) + &z * z.adjoint();
    let log_norm = 0.5 * eigvalsh(&gram).iter().map(|v| v.ln()).sum::<f64>();
    let mut top = CMatrix::zeros(2 * n, n);
    top.view_mut((0, 0), (n, n)).copy_from(&s11.adjoint());
    top.view_mut((n, 0), (n, n)).copy_from(&s12.adjoint());
    let frame = top.qr().q();
    Ok(ThoulessState {
        occupation: occupation.to_vec(),
        z,
        log_norm,
        regularized,
        frame,
    })
}

/// Covariance of the normalised `e^{-H_ρ/2}|m⟩`.
pub fn cda_state_covariance(kernel: &GibbsKernel, occupation: &[bool]) -> Result<(MajoranaCovariance, bool)> {
    let st = cda_thouless_state(kernel, occupation)?;
    let cov = st.covariance();
    let defect = cov.purity_defect();
    if defect > 1e-6 {
        return Err(Error::Numerical(format!("evolved state not pure (defect {defect:.2e})")));
    }
    Ok((cov, st.regularized))
}

/// Thouless amplitude of the vacuum evolved by `e^{-H_ρ/2}` at momentum `k`:
/// `h(k) = u v (q - 1) / (|u|² + |v|² q)` with `q = e^{-2β}`, `tanh β = (1-2p)²`.
/// `q` is the relative weight of the doubly excited pair `(k, -k)`.
pub fn pairing_function(model: &BdgModel, p: f64, k: (f64, f64)) -> Result<Complex64> {
    check_rate(p)?;
    let beta = ((1.0 - 2.0 * p).powi(2)).atanh();
    let q = (-2.0 * beta).exp();
    let (u, v) = model.bogoliubov(k);
    let den = u * u + v.norm_sqr() * q;
    if den < 1e-14 {
        return Err(Error::SingularMode(format!("pairing pole at k = ({:.4}, {:.4})", k.0, k.1)));
    }
    Ok(v * (u * (q - 1.0)) / den)
}

/// Per-momentum Majorana covariance from `n_k = ⟨c_k†c_k⟩`, `n_{-k}` and
/// `f_k = ⟨c_{-k} c_k⟩`.
fn bloch_covariance(n_k: f64, n_mk: f64, f_k: Complex64) -> [[Complex64; 2]; 2] {
    let a = c(1.0 - n_k);
    let b = c(n_mk);
    let cc = -f_k;
    let dd = -f_k.conj();
    let g00 = cc + a + b + dd;
    let g01 = -I * cc + I * a - I * b + I * dd;
    let g10 = -I * cc - I * a + I * b + I * dd;
    let g11 = -cc + a + b - dd;
    [[(g00 - 1.0) * -I, g01 * -I], [g10 * -I, (g11 - 1.0) * -I]]
}

/// Covariance of `e^{-H_ρ/2}|0⟩` built from the pairing function on the
/// momentum grid, returned as strip blocks in `k_x`.
pub fn vacuum_cda_from_pairing(model: &BdgModel, p: f64) -> Result<StripCovariance> {
    let kxs = model.bc[0].momenta(model.lx)?;
    let kys = model.bc[1].momenta(model.ly)?;
    let ly = model.ly;
    let mut blocks = Vec::with_capacity(kxs.len());
    for &kx in &kxs {
        let mut b = CMatrix::zeros(2 * ly, 2 * ly);
        for &ky in &kys {
            let g = pairing_function(model, p, (kx, ky))?;
            let n = g.norm_sqr() / (1.0 + g.norm_sqr());
            let f = g / (1.0 + g.norm_sqr());
            // n_{-k} = n_k and f_{-k} = -f_k for odd pairing
            let m = bloch_covariance(n, n, f);
            for y in 0..ly {
                for yp in 0..ly {
                    let ph = Complex64::from_polar(1.0 / ly as f64, ky * (y as f64 - yp as f64));
                    for a in 0..2 {
                        for bb in 0..2 {
                            b[(2 * y + a, 2 * yp + bb)] += m[a][bb] * ph;
                        }
                    }
                }
            }
        }
        blocks.push(b);
    }
    Ok(StripCovariance {
        lx: model.lx,
        ly,
        ks: kxs,
        blocks,
    })
}

/// Ground-state covariance from the Bogoliubov amplitudes (`n = |v|²`,
/// `f = -u v`), as strip blocks.
pub fn ground_state_from_bogoliubov(model: &BdgModel) -> Result<StripCovariance> {
    let kxs = model.bc[0].momenta(model.lx)?;
    let kys = model.bc[1].momenta(model.ly)?;
    let ly = model.ly;
    let mut blocks = Vec::new();
    for &kx in &kxs {
        let mut b = CMatrix::zeros(2 * ly, 2 * ly);
        for &ky in &kys {
            let (u, v) = model.bogoliubov((kx, ky));
            let m = bloch_covariance(v.norm_sqr(), v.norm_sqr(), -v * u);
            for y in 0..ly {
                for yp in 0..ly {
                    let ph = Complex64::from_polar(1.0 / ly as f64, ky * (y as f64 - yp as f64));
                    for a in 0..2 {
                        for bb in 0..2 {
                            b[(2 * y + a, 2 * yp + bb)] += m[a][bb] * ph;
                        }
                    }
                }
            }
        }
        blocks.push(b);
    }
    Ok(StripCovariance {
        lx: model.lx,
        ly,
        ks: kxs,
        blocks,
    })
}

/// Real-space pair amplitude `g(r) = (1/N) Σ_k e^{ik·r} h(k)` along `x̂`,
/// for `r = 1..=Lx/2`.
pub fn pair_amplitude_profile(model: &BdgModel, p: f64) -> Result<Vec<(f64, f64)>> {
    let grid = model.momentum_grid()?;
    let mut hs = Vec::with_capacity(grid.len());
    for &k in &grid {
        hs.push((k, pairing_function(model, p, k)?));
    }
    let n = grid.len() as f64;
    Ok((1..=model.lx / 2)
        .map(|r| {
            let g: Complex64 = hs.iter().map(|(k, h)| h * Complex64::from_polar(1.0, k.0 * r as f64)).sum();
            (r as f64, g.norm() / n)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayLaw {
    Exponential,
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `ln|g| = a - r/ξ`: `(a, 1/ξ, aic)`.
    pub exponential: (f64, f64, f64),
    /// `ln|g| = a - α ln r`: `(a, α, aic)`.
    pub power: (f64, f64, f64),
    pub preferred: DecayLaw,
    /// AIC of the rejected model minus AIC of the preferred one.
    pub margin: f64,
    pub points: usize,
}

/// Compares exponential and power-law decay by least squares on `ln|g|`,
/// with `AIC = n ln(RSS/n) + 2k`. Points below `floor` are dropped.
pub fn fit_decay(profile: &[(f64, f64)], floor: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = profile.iter().copied().filter(|&(r, g)| g > floor && r > 0.0).collect();
    if pts.len() < 4 {
        return Err(Error::invalid("fewer than four points above the floor"));
    }
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let r: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let lr: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let n = pts.len() as f64;
    let aic = |rss: f64| n * (rss.max(1e-300) / n).ln() + 4.0;
    let (ae, be, rsse) = stats::line_fit(&r, &y);
    let (ap, bp, rssp) = stats::line_fit(&lr, &y);
    let (aic_e, aic_p) = (aic(rsse), aic(rssp));
    let (preferred, margin) = if aic_e < aic_p {
        (DecayLaw::Exponential, aic_p - aic_e)
    } else {
        (DecayLaw::PowerLaw, aic_e - aic_p)
    };
    Ok(DecayFit {
        exponential: (ae, -be, aic_e),
        power: (ap, -bp, aic_p),
        preferred,
        margin,
        points: pts.len(),
    })
}

/// Entanglement spectrum `ν` of `iM` on a region, optionally resolved by the
/// momentum along `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementSpectrum {
    pub resolved: Option<Vec<(f64, Vec<f64>)>>,
    pub values: Vec<f64>,
    pub warning: Option<String>,
}

impl EntanglementSpectrum {
    /// Smallest `|ν|` over the spectrum.
    pub fn min_abs(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Spectrum of `iM_R` for a dense covariance on an `Lx × Ly` lattice. With
/// `resolve`, the region and the state must be invariant under translations
/// along `x` (twisted by `bx`); otherwise the plain spectrum is returned
/// with a warning.
pub fn entanglement_spectrum(
    m: &MajoranaCovariance,
    lx: usize,
    ly: usize,
    bx: Boundary,
    region: &[usize],
    resolve: bool,
) -> Result<EntanglementSpectrum> {
    if region.is_empty() {
        return Err(Error::invalid("empty region"));
    }
    if lx * ly != m.n_modes() {
        return Err(Error::SizeMismatch(format!("{lx}×{ly} lattice for {} modes", m.n_modes())));
    }
    let values = m.restrict(region).spectrum();
    if !resolve {
        return Ok(EntanglementSpectrum {
            resolved: None,
            values,
            warning: None,
        });
    }
    let mut rows: Vec<usize> = region.iter().map(|s| s / lx).collect();
    rows.sort_unstable();
    rows.dedup();
    let region_ok = region.len() == rows.len() * lx;
    let sign = match bx {
        Boundary::Periodic => 1.0,
        Boundary::Antiperiodic => -1.0,
        Boundary::Open => 0.0,
    };
    let mm = m.matrix();
    let mut state_ok = sign != 0.0;
    'outer: for y in 0..ly {
        for yp in 0..ly {
            for x in 0..lx {
                for xp in 0..lx {
                    let (x1, xp1) = ((x + 1) % lx, (xp + 1) % lx);
                    let s = (if x + 1 == lx { sign } else { 1.0 }) * (if xp + 1 == lx { sign } else { 1.0 });
                    for a in 0..2 {
                        for b in 0..2 {
                            let v0 = mm[(2 * (x + lx * y) + a, 2 * (xp + lx * yp) + b)];
                            let v1 = mm[(2 * (x1 + lx * y) + a, 2 * (xp1 + lx * yp) + b)];
                            if (v1 - s * v0).abs() > 1e-8 {
                                state_ok = false;
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
    }
    if !(region_ok && state_ok) {
        return Ok(EntanglementSpectrum {
            resolved: None,
            values,
            warning: Some("region or state not translation invariant along x; spectrum not resolved".into()),
        });
    }
    let ks = bx.momenta(lx)?;
    let blocks = ks
        .iter()
        .map(|&k| {
            let w = 2 * ly;
            let mut b = CMatrix::zeros(w, w);
            for dx in 0..lx {
                let ph = Complex64::from_polar(1.0, -k * dx as f64);
                for i in 0..w {
                    for j in 0..w {
                        b[(i, j)] += ph * mm[(2 * (dx + lx * (i / 2)) + i % 2, 2 * (lx * (j / 2)) + j % 2)];
                    }
                }
            }
            b
        })
        .collect();
    let strip = StripCovariance { lx, ly, ks, blocks };
    Ok(EntanglementSpectrum {
        resolved: Some(strip.rows_spectrum(&rows)),
        values,
        warning: None,
    })
}

/// `J` together with the number of clipped modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularCommutator {
    pub value: f64,
    pub clipped: usize,
}

/// `K_X = -i atanh(iM_X)` with `|ν| ≤ 1 - CLIP_EPS`; returns the clip count.
pub fn modular_kernel(m: &RMatrix) -> (RMatrix, usize) {
    let mut clipped = 0;
    let lim = 1.0 - CLIP_EPS;
    let ia = to_complex(m).map(|z| z * I);
    let (vals, vecs) = eigh(&ia);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let vc = if v.abs() > lim {
            clipped += 1;
            v.signum() * lim
        } else {
            v
        };
        scaled.column_mut(j).scale_mut(vc.atanh());
    }
    let k = (scaled * vecs.adjoint()).map(|z| (z * -I).re);
    (k, clipped)
}

#[doc(hidden)]
pub fn modular_commutator_scaled(m: &MajoranaCovariance, a: &[usize], b: &[usize], cc: &[usize], prefactor: f64) -> Result<ModularCommutator> {
    let mut seen = std::collections::HashSet::new();
    for &s in a.iter().chain(b).chain(cc) {
        if s >= m.n_modes() || !seen.insert(s) {
            return Err(Error::invalid("regions must be disjoint and inside the system"));
        }
    }
    let abc: Vec<usize> = a.iter().chain(b).chain(cc).copied().collect();
    let m_abc = m.restrict(&abc).into_matrix();
    let na = 2 * a.len();
    let nb = 2 * b.len();
    let n = m_abc.nrows();
    let ac: Vec<usize> = (0..na).chain(na + nb..n).collect();
    let bc: Vec<usize> = (na..n).collect();
    let embed = |idx: &[usize]| -> (RMatrix, usize) {
        let (k, clipped) = modular_kernel(&submatrix(&m_abc, idx));
        let mut full = RMatrix::zeros(n, n);
        for (i, &p) in idx.iter().enumerate() {
            for (j, &q) in idx.iter().enumerate() {
                full[(p, q)] = k[(i, j)];
            }
        }
        (full, clipped)
    };
    let (k1, c1) = embed(&ac);
    let (k2, c2) = embed(&bc);
    let comm = &k1 * &k2 - &k2 * &k1;
    Ok(ModularCommutator {
        value: -prefactor * (comm * &m_abc).trace(),
        clipped: c1 + c2,
    })
}

/// `J_ABC = i tr(ρ_ABC [ln ρ_AC, ln ρ_BC]) = -tr([K_AC, K_BC] M_ABC)`.
pub fn modular_commutator(m: &MajoranaCovariance, a: &[usize], b: &[usize], cc: &[usize]) -> Result<ModularCommutator> {
    modular_commutator_scaled(m, a, b, cc, 1.0)
}

/// `J` of a pure chiral state with `c = 1/2`.
pub const J0: f64 = std::f64::consts::PI / 6.0;

/// Tripartition of an `L × L` torus: `C` is an `L/2 × L/4` block and `A`,
/// `B` are `L/4 × L/4` squares on top of it, `B` on the left.
pub fn tripartition(l: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if l < 4 || l % 4 != 0 {
        return Err(Error::invalid(format!("L = {l} must be a positive multiple of 4")));
    }
    let q = l / 4;
    let (x0, y0) = (q, q);
    let sq = |xa: usize, ya: usize, w: usize, h: usize| -> Vec<usize> {
        (ya..ya + h).flat_map(|y| (xa..xa + w).map(move |x| x + l * y)).collect()
    };
    let c_reg = sq(x0, y0, 2 * q, q);
    let b_reg = sq(x0, y0 + q, q, q);
    let a_reg = sq(x0 + q, y0 + q, q, q);
    Ok((a_reg, b_reg, c_reg))
}

/// Named occupation patterns.
pub fn occupation_pattern(kind: &str, n: usize, seed: u64) -> Result<Vec<bool>> {
    use rand::Rng;
    Ok(match kind {
        "uniform" => vec![false; n],
        "staggered" => (0..n).map(|j| j % 2 == 1).collect(),
        "random" => {
            let mut rng = crate::rng::task_rng(seed, 0);
            (0..n).map(|_| rng.gen::<bool>()).collect()
        }
        _ => return Err(Error::invalid(format!("unknown occupation pattern '{kind}'"))),
    })
}

/// Random orthogonal matrix from the QR decomposition of a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut impl rand::Rng) -> RMatrix {
    use rand_distr::StandardNormal;
    let g = RMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `O (⊕ λ_j iY) Oᵀ` with Haar `O`.
pub fn covariance_from_spectrum(lambda: &[f64], rng: &mut impl rand::Rng) -> MajoranaCovariance {
    let o = random_orthogonal(2 * lambda.len(), rng);
    MajoranaCovariance::trusted(&o * block_diag(lambda, |l| l) * o.transpose())
}

pub fn random_pure_covariance(n_modes: usize, rng: &mut impl rand::Rng) -> MajoranaCovariance {
    covariance_from_spectrum(&vec![1.0; n_modes], rng)
}

/// Random mixed covariance with `λ_j` uniform in `[0, radius]`.
pub fn random_mixed_covariance(n_modes: usize, radius: f64, rng: &mut impl rand::Rng) -> MajoranaCovariance {
    let lambda: Vec<f64> = (0..n_modes).map(|_| radius * rng.gen::<f64>()).collect();
    covariance_from_spectrum(&lambda, rng)
}
