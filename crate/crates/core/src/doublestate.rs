//! Choi–Jamiolkowski doubling for fermions.
//!
//! The doubled space has ket modes `c_0..c_{N-1}` followed by bra modes
//! `d_0..d_{N-1}`, with Majoranas `γ` (ket) and `η` (bra). The reference
//! state is `|Φ⟩ = Π_j (1 + c_j† d_j†)|0⟩` and `|X⟩ = (X ⊗ I)|Φ⟩`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::gaussian::{BdgModel, MajoranaCovariance, StripCovariance, CLIP_EPS};
use crate::gibbs::check_rate;
use crate::linalg::{c, eigvalsh, herm_fn, max_abs, submatrix, to_complex, CMatrix, RMatrix, I};

/// Mode cap for the dense checks in this module.
pub const MAX_DENSE_MODES: usize = 4;

/// Which vector represents `ρ` on the doubled space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// `|ρ⟩ = (ρ ⊗ I)|Φ⟩`.
    #[default]
    Linear,
    /// `|ρ^{1/2}⟩ = (ρ^{1/2} ⊗ I)|Φ⟩`.
    Sqrt,
}

/// `⟨γ_a η_b⟩` block of a single `|Φ⟩` pair: `M_Φ = [[0, X], [-X, 0]]`.
const PAIR: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];

fn pair_matrix(n: usize) -> RMatrix {
    let mut q = RMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for a in 0..2 {
            for b in 0..2 {
                q[(2 * j + a, 2 * j + b)] = PAIR[a][b];
            }
        }
    }
    q
}

/// Normalised pure doubled state.
#[derive(Clone, Debug)]
pub struct DoubledGaussianState {
    gamma: RMatrix,
    pub weighting: Weighting,
}

impl DoubledGaussianState {
    pub fn n_modes(&self) -> usize {
        self.gamma.nrows() / 4
    }

    /// Full `4N × 4N` covariance; ket Majoranas first.
    pub fn matrix(&self) -> &RMatrix {
        &self.gamma
    }

    pub fn ket_block(&self) -> RMatrix {
        let n2 = 2 * self.n_modes();
        self.gamma.view((0, 0), (n2, n2)).into_owned()
    }

    pub fn bra_block(&self) -> RMatrix {
        let n2 = 2 * self.n_modes();
        self.gamma.view((n2, n2), (n2, n2)).into_owned()
    }

    pub fn covariance(&self) -> MajoranaCovariance {
        MajoranaCovariance::trusted(self.gamma.clone())
    }
}

/// Ket block `M'` and coupling `S = (I + M'²)^{1/2}` of the normalised
/// doubled state. For `|ρ^{1/2}⟩`, `M' = M`; for `|ρ⟩` the ket side holds
/// `ρ²/tr ρ²`, so `ν → 2ν/(1+ν²)` and `S` has eigenvalues `(1-ν²)/(1+ν²)`.
fn weighted_blocks(m: &CMatrix, weighting: Weighting) -> (CMatrix, CMatrix) {
    let im = m.map(|z| z * I);
    match weighting {
        // pure modes are snapped: the square root turns rounding noise in ν into √ε
        Weighting::Sqrt => (m.clone(), herm_fn(&im, |v| {
            let d = 1.0 - v * v;
            if d < CLIP_EPS {
                0.0
            } else {
                d.sqrt()
            }
        })),
        Weighting::Linear => (
            herm_fn(&im, |v| 2.0 * v / (1.0 + v * v)).map(|z| z * -I),
            herm_fn(&im, |v| (1.0 - v * v) / (1.0 + v * v)),
        ),
    }
}

/// `Γ = [[M', S Q], [-Qᵀ S, -Qᵀ M' Q]]` with `Q` the pair block of `|Φ⟩`.
fn doubled_block(m: &CMatrix, weighting: Weighting, q: &CMatrix) -> CMatrix {
    let (mw, s) = weighted_blocks(m, weighting);
    let n2 = mw.nrows();
    let mut g = CMatrix::zeros(2 * n2, 2 * n2);
    g.view_mut((0, n2), (n2, n2)).copy_from(&(&s * q));
    g.view_mut((n2, 0), (n2, n2)).copy_from(&(-(q.transpose() * &s)));
    g.view_mut((n2, n2), (n2, n2)).copy_from(&(-(q.transpose() * &mw * q)));
    g.view_mut((0, 0), (n2, n2)).copy_from(&mw);
    g
}

/// Covariance of the normalised `|ρ⟩` (or `|ρ^{1/2}⟩`) of a Gaussian `ρ`.
pub fn purify_covariance(m: &MajoranaCovariance, weighting: Weighting) -> DoubledGaussianState {
    let n = m.n_modes();
    let g = doubled_block(&to_complex(m.matrix()), weighting, &to_complex(&pair_matrix(n)));
    DoubledGaussianState {
        gamma: g.map(|z| z.re),
        weighting,
    }
}

/// Doubled state of a translation-invariant strip, one `4Ly × 4Ly` block
/// per momentum, indexed ket `(y, a) → 2y + a` then bra `2Ly + 2y + a`.
#[derive(Clone, Debug)]
pub struct DoubledStrip {
    pub lx: usize,
    pub ly: usize,
    pub ks: Vec<f64>,
    pub blocks: Vec<CMatrix>,
}

pub fn purify_strip(m: &StripCovariance, weighting: Weighting) -> DoubledStrip {
    let q = to_complex(&pair_matrix(m.ly));
    DoubledStrip {
        lx: m.lx,
        ly: m.ly,
        ks: m.ks.clone(),
        blocks: m.blocks.iter().map(|b| doubled_block(b, weighting, &q)).collect(),
    }
}

impl DoubledStrip {
    /// Spectrum of `iΓ` on the rows `y ∈ rows` of both layers, per momentum.
    pub fn rows_spectrum(&self, rows: &[usize]) -> Vec<(f64, Vec<f64>)> {
        let w = 2 * self.ly;
        let idx: Vec<usize> = rows
            .iter()
            .flat_map(|&y| [2 * y, 2 * y + 1])
            .chain(rows.iter().flat_map(|&y| [w + 2 * y, w + 2 * y + 1]))
            .collect();
        self.ks
            .iter()
            .zip(&self.blocks)
            .map(|(&k, b)| (k, eigvalsh(&submatrix(b, &idx).map(|z| z * I))))
            .collect()
    }
}

/// Smallest `|ν|` of a momentum-resolved spectrum.
pub fn spectral_gap(spectrum: &[(f64, Vec<f64>)]) -> f64 {
    spectrum
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Entanglement spectrum of the doubled decohered ground state on the
/// lower half `y < Ly/2` of a strip (closed in `x`).
pub fn double_state_entanglement_spectrum(model: &BdgModel, p: f64, weighting: Weighting) -> Result<Vec<(f64, Vec<f64>)>> {
    check_rate(p)?;
    if model.ly < 2 {
        return Err(Error::invalid("strip needs at least two rows"));
    }
    let m0 = model.strip_ground_state()?;
    let m = m0.scaled((1.0 - 2.0 * p).powi(2));
    let rows: Vec<usize> = (0..model.ly / 2).collect();
    Ok(purify_strip(&m, weighting).rows_spectrum(&rows))
}

/// Dense helpers on the `2N`-mode doubled Fock space.
#[derive(Clone, Debug)]
pub struct DoubledFock {
    n: usize,
    pub space: FockSpace,
    phi: DVector<Complex64>,
}

impl DoubledFock {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_DENSE_MODES {
            return Err(Error::ResourceCap {
                what: "doubled dense modes",
                requested: n,
                cap: MAX_DENSE_MODES,
            });
        }
        let space = FockSpace::new(2 * n)?;
        let mut phi = space.basis_state(&vec![false; 2 * n])?;
        for j in 0..n {
            let pair = space.creator(j) * space.creator(n + j);
            phi = &phi + pair * &phi;
        }
        Ok(DoubledFock { n, space, phi })
    }

    /// Unnormalised `|Φ⟩`.
    pub fn phi(&self) -> &DVector<Complex64> {
        &self.phi
    }

    /// `X ⊗ I` for an operator on the ket modes.
    pub fn ket_op(&self, x: &CMatrix) -> CMatrix {
        x.kronecker(&CMatrix::identity(1 << self.n, 1 << self.n))
    }

    /// Unnormalised `|X⟩`.
    pub fn vectorize(&self, x: &CMatrix) -> DVector<Complex64> {
        self.ket_op(x) * &self.phi
    }

    pub fn d(&self, j: usize) -> &CMatrix {
        self.space.annihilator(self.n + j)
    }

    /// Operator `R_a` on the doubled space with `|X γ_a⟩ = R_a |X⟩` for even `X`.
    pub fn right_majorana(&self, a: usize) -> CMatrix {
        let d = self.d(a / 2);
        if a % 2 == 0 {
            d.adjoint() - d
        } else {
            (d + d.adjoint()) * -I
        }
    }

    /// `(1-p) + p γ_a R_a`, the doubled form of `ρ → (1-p)ρ + p γ_a ρ γ_a`.
    pub fn channel_operator(&self, a: usize, p: f64) -> CMatrix {
        let d = self.space.dim();
        CMatrix::identity(d, d) * c(1.0 - p) + self.space.majorana(a) * self.right_majorana(a) * c(p)
    }

    /// `(1-p) + p γ_a η_a`, which treats `γ_a` on the right as a plain tensor factor.
    pub fn naive_operator(&self, a: usize, p: f64) -> CMatrix {
        let d = self.space.dim();
        CMatrix::identity(d, d) * c(1.0 - p) + self.space.majorana(a) * self.space.majorana(2 * self.n + a) * c(p)
    }

    /// Covariance of the normalised `|ρ⟩` or `|ρ^{1/2}⟩`.
    pub fn doubled_covariance(&self, rho: &CMatrix, weighting: Weighting) -> RMatrix {
        let x = match weighting {
            Weighting::Linear => rho.clone(),
            Weighting::Sqrt => herm_fn(rho, |v| if v < CLIP_EPS { 0.0 } else { v.sqrt() }),
        };
        let v = self.vectorize(&x);
        let v = &v / c(v.norm());
        self.space.covariance(&(&v * v.adjoint()))
    }
}

pub fn check_parity_even(space: &FockSpace, rho: &CMatrix) -> Result<()> {
    let p = space.parity();
    let odd = max_abs(&(&p * rho * &p - rho));
    if odd > 1e-12 {
        return Err(Error::ParityOdd);
    }
    Ok(())
}

/// Residuals of the transport rules for one density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    /// `max_j ‖ |ρc_j⟩ - d_j†|ρ⟩ ‖`.
    pub annihilator: f64,
    /// `max_j ‖ |ρc_j†⟩ + d_j|ρ⟩ ‖`.
    pub creator: f64,
    /// `max_a ‖ |γ_a ρ⟩ - γ_a|ρ⟩ ‖` (left factors carry over unchanged).
    pub left: f64,
}

impl TransportReport {
    pub fn max(&self) -> f64 {
        self.annihilator.max(self.creator).max(self.left)
    }
}

/// Checks `|ρc⟩ = d†|ρ⟩` and `|ρc†⟩ = -d|ρ⟩` densely.
pub fn cj_transport_rules_dense(rho: &CMatrix) -> Result<TransportReport> {
    let n = (rho.nrows() as f64).log2().round() as usize;
    if 1 << n != rho.nrows() {
        return Err(Error::SizeMismatch("density matrix dimension is not a power of two".into()));
    }
    let df = DoubledFock::new(n)?;
    let single = FockSpace::new(n)?;
    check_parity_even(&single, rho)?;
    let v = df.vectorize(rho);
    let mut rep = TransportReport {
        annihilator: 0.0,
        creator: 0.0,
        left: 0.0,
    };
    for j in 0..n {
        let cj = single.annihilator(j);
        let d = df.d(j);
        rep.annihilator = rep.annihilator.max((df.vectorize(&(rho * cj)) - d.adjoint() * &v).norm());
        rep.creator = rep.creator.max((df.vectorize(&(rho * cj.adjoint())) + d * &v).norm());
    }
    for a in 0..2 * n {
        let g = single.majorana(a);
        rep.left = rep.left.max((df.vectorize(&(&g * rho)) - df.space.majorana(a) * &v).norm());
    }
    Ok(rep)
}

/// Outcome of the single-mode idempotence comparison at `p = 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveMapReport {
    /// `‖N² - N‖_max` for `N = (1-p) + p γ η`.
    pub naive_defect: f64,
    /// `‖N² - N‖_max` for the transported operator.
    pub corrected_defect: f64,
    /// `max_X ‖E(E(X)) - E(X)‖_max` over matrix units.
    pub channel_defect: f64,
    /// `max ‖ |E(ρ)⟩ - N|ρ⟩ ‖` over the test states.
    pub corrected_vs_channel: f64,
}

fn single_majorana_channel(g: &CMatrix, x: &CMatrix, p: f64) -> CMatrix {
    x * c(1.0 - p) + g * x * g * c(p)
}

/// Compares the naive doubled operator of `ρ → (1-p)ρ + pγργ` with the
/// transported one at one mode and `p = 1/2`, plus the transported operator
/// against the channel on the given even states.
pub fn naive_map_counterexample(states: &[CMatrix]) -> Result<NaiveMapReport> {
    let p = 0.5;
    let df = DoubledFock::new(1)?;
    let single = FockSpace::new(1)?;
    let nv = df.naive_operator(0, p);
    let nc = df.channel_operator(0, p);
    let g = single.majorana(0);
    let mut channel_defect: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut x = CMatrix::zeros(2, 2);
            x[(i, j)] = c(1.0);
            let once = single_majorana_channel(&g, &x, p);
            let twice = single_majorana_channel(&g, &once, p);
            channel_defect = channel_defect.max(max_abs(&(twice - once)));
        }
    }
    let mut dev: f64 = 0.0;
    for rho in states {
        let n = (rho.nrows() as f64).log2().round() as usize;
        let dfn = DoubledFock::new(n)?;
        let sp = FockSpace::new(n)?;
        check_parity_even(&sp, rho)?;
        for a in 0..2 * n {
            for pp in [0.1, 0.5] {
                let out = dfn.vectorize(&single_majorana_channel(&sp.majorana(a), rho, pp));
                let via = dfn.channel_operator(a, pp) * dfn.vectorize(rho);
                dev = dev.max((out - via).norm());
            }
        }
    }
    Ok(NaiveMapReport {
        naive_defect: max_abs(&(&nv * &nv - &nv)),
        corrected_defect: max_abs(&(&nc * &nc - &nc)),
        channel_defect,
        corrected_vs_channel: dev,
    })
}

/// `⟨m'|ρᵀ|m⟩ = (⟨m'|⊗⟨Φ|)(I ⊗ ρ ⊗ I)(|Φ⟩ ⊗ |m⟩)` on three copies of the modes.
pub fn fermionic_transpose_dense(rho: &CMatrix) -> Result<CMatrix> {
    let dim = rho.nrows();
    let n = (dim as f64).log2().round() as usize;
    if 1 << n != dim || rho.ncols() != dim {
        return Err(Error::SizeMismatch("operator dimension is not a power of two".into()));
    }
    if 3 * n > crate::fock::MAX_MODES {
        return Err(Error::ResourceCap {
            what: "transpose modes",
            requested: n,
            cap: crate::fock::MAX_MODES / 3,
        });
    }
    let phi = if n == 0 {
        DVector::from_element(1, c(1.0))
    } else {
        DoubledFock::new(n)?.phi.clone()
    };
    let id = CMatrix::identity(dim, dim);
    let mid = id.kronecker(rho).kronecker(&id);
    let mut out = CMatrix::zeros(dim, dim);
    for m in 0..dim {
        let mut em = DVector::zeros(dim);
        em[m] = c(1.0);
        let right = &mid * phi.kronecker(&em);
        for mp in 0..dim {
            let mut emp = DVector::zeros(dim);
            emp[mp] = c(1.0);
            let left = emp.kronecker(&phi);
            out[(mp, m)] = left.dotc(&right);
        }
    }
    Ok(out)
}

/// Plain matrix transpose in the occupation basis, for comparison.
pub fn bosonic_transpose(rho: &CMatrix) -> CMatrix {
    rho.transpose()
}

/// Covariance of `ρᵀ` predicted by `c → -c̄`, `c̄ → c`. On operators this
/// reverses products and sends `c → ic†`, `c† → -ic`, hence
/// `γ_{2j} ↔ γ_{2j+1}` and `M(ρᵀ)_{ab} = -M_{σa,σb}`.
pub fn transpose_covariance(m: &RMatrix) -> RMatrix {
    RMatrix::from_fn(m.nrows(), m.ncols(), |i, j| -m[(i ^ 1, j ^ 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_real;

    #[test]
    fn pair_block_matches_dense_phi() {
        let df = DoubledFock::new(2).unwrap();
        let phi = df.phi() / c(2.0);
        let g = df.space.covariance(&(&phi * phi.adjoint()));
        let want = purify_covariance(&MajoranaCovariance::trusted(RMatrix::zeros(4, 4)), Weighting::Linear);
        assert!(max_abs_real(&(g - want.matrix())) < 1e-14);
    }

    #[test]
    fn transpose_covariance_is_an_involution() {
        let m = crate::gaussian::random_pure_covariance(3, &mut crate::rng::task_rng(9, 0));
        let back = transpose_covariance(&transpose_covariance(m.matrix()));
        assert_eq!(back, *m.matrix());
    }
}
