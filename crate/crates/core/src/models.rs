//! Lattice stabilizer models, their symmetry sectors and exact sector-resolved
//! observables of the decohered states.
//!
//! Every model splits its terms into two sublattices (`0` and `1`) so that the
//! usual two-rate channel `(p₀, p₁)` can be expressed with [`LatticeModel::rates`].
//!
//! | model | sublattice 0 | sublattice 1 | generators |
//! |---|---|---|---|
//! | 1d cluster | `h_{a,j}` | `h_{b,j}` | `Π X_a`, `Π X_b` |
//! | 2d cluster | vertices | edges | `Π_v X_v`, `Π_{e∈∂p} X_e` per plaquette |
//! | 3d cluster | edges | faces | `Π_{e∋v} X_e` per vertex, `Π_{f∈∂c} X_f` per cube |
//! | Kitaev chain | bonds | (none) | fermion parity |
//! | Levin–Gu | sites | (none) | `Π X` |

use std::collections::HashMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{self, CommutingProjectorModel, DenseMonomial, Term};
use crate::linalg::{self, c, CMatrix};
use crate::pauli::{Phase, PauliOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Cluster1d,
    Cluster2d,
    Cluster3d,
    KitaevChain,
    LevinGu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    ZeroForm,
    OneForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub label: String,
    pub op: PauliOperator,
}

/// Charges `Q_g ∈ {0, 1}`, one per generator, with `U_g = (-1)^{Q_g}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorLabel(pub Vec<u8>);

impl SectorLabel {
    pub fn trivial(n: usize) -> Self {
        SectorLabel(vec![0; n])
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        SectorLabel((0..n).map(|g| (index >> g & 1) as u8).collect())
    }

    fn sign(&self, g: usize) -> f64 {
        if self.0[g] == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl std::fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for q in &self.0 {
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LatticeModel {
    kind: ModelKind,
    sizes: Vec<usize>,
    model: CommutingProjectorModel,
    sublattice: Vec<u8>,
    generators: Vec<Generator>,
}

fn check_size(kind: &str, l: usize, min: usize) -> Result<()> {
    if l < min {
        return Err(Error::invalid(format!("{kind} needs linear size ≥ {min}, got {l}")));
    }
    Ok(())
}

/// Periodic square lattice: vertex `x + L y`, edge `2v + μ` from `v` along `μ`.
#[derive(Clone, Copy, Debug)]
pub struct SquareLattice {
    pub l: usize,
}

impl SquareLattice {
    pub fn vertex(&self, x: usize, y: usize) -> usize {
        x % self.l + self.l * (y % self.l)
    }

    pub fn n_vertices(&self) -> usize {
        self.l * self.l
    }

    pub fn n_edges(&self) -> usize {
        2 * self.l * self.l
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v % self.l, v / self.l)
    }

    pub fn shift(&self, v: usize, mu: usize, forward: bool) -> usize {
        let (x, y) = self.coords(v);
        let l = self.l;
        match (mu, forward) {
            (0, true) => self.vertex(x + 1, y),
            (0, false) => self.vertex(x + l - 1, y),
            (_, true) => self.vertex(x, y + 1),
            (_, false) => self.vertex(x, y + l - 1),
        }
    }

    pub fn edge(&self, v: usize, mu: usize) -> usize {
        2 * v + mu
    }

    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        let (v, mu) = (e / 2, e % 2);
        (v, self.shift(v, mu, true))
    }

    pub fn edges_at(&self, v: usize) -> [usize; 4] {
        [
            self.edge(v, 0),
            self.edge(v, 1),
            self.edge(self.shift(v, 0, false), 0),
            self.edge(self.shift(v, 1, false), 1),
        ]
    }

    /// Boundary of the plaquette with lower-left corner `v`.
    pub fn plaquette(&self, v: usize) -> [usize; 4] {
        [
            self.edge(v, 0),
            self.edge(self.shift(v, 0, true), 1),
            self.edge(self.shift(v, 1, true), 0),
            self.edge(v, 1),
        ]
    }
}

/// Periodic cubic lattice: vertex `x + L(y + L z)`, edge `3v + μ`, face
/// `3v + π` with planes `π = 0: xy, 1: yz, 2: zx`.
#[derive(Clone, Copy, Debug)]
pub struct CubicLattice {
    pub l: usize,
}

impl CubicLattice {
    pub fn n_vertices(&self) -> usize {
        self.l.pow(3)
    }

    pub fn vertex(&self, x: usize, y: usize, z: usize) -> usize {
        let l = self.l;
        x % l + l * (y % l + l * (z % l))
    }

    pub fn coords(&self, v: usize) -> [usize; 3] {
        let l = self.l;
        [v % l, v / l % l, v / (l * l)]
    }

    pub fn shift(&self, v: usize, mu: usize, steps: isize) -> usize {
        let mut c = self.coords(v);
        let l = self.l as isize;
        c[mu] = (c[mu] as isize + steps).rem_euclid(l) as usize;
        self.vertex(c[0], c[1], c[2])
    }

    pub fn edge(&self, v: usize, mu: usize) -> usize {
        3 * v + mu
    }

    /// Directions spanned by plane `π`.
    pub fn plane_dirs(pi: usize) -> (usize, usize) {
        match pi {
            0 => (0, 1),
            1 => (1, 2),
            _ => (2, 0),
        }
    }

    pub fn plane_of(mu: usize, nu: usize) -> usize {
        match (mu.min(nu), mu.max(nu)) {
            (0, 1) => 0,
            (1, 2) => 1,
            _ => 2,
        }
    }

    pub fn face(&self, v: usize, pi: usize) -> usize {
        3 * v + pi
    }

    pub fn face_boundary(&self, f: usize) -> [usize; 4] {
        let (v, pi) = (f / 3, f % 3);
        let (mu, nu) = Self::plane_dirs(pi);
        [
            self.edge(v, mu),
            self.edge(self.shift(v, mu, 1), nu),
            self.edge(self.shift(v, nu, 1), mu),
            self.edge(v, nu),
        ]
    }

    pub fn faces_at_edge(&self, e: usize) -> [usize; 4] {
        let (v, mu) = (e / 3, e % 3);
        let (a, b) = ((mu + 1) % 3, (mu + 2) % 3);
        [
            self.face(v, Self::plane_of(mu, a)),
            self.face(self.shift(v, a, -1), Self::plane_of(mu, a)),
            self.face(v, Self::plane_of(mu, b)),
            self.face(self.shift(v, b, -1), Self::plane_of(mu, b)),
        ]
    }

    pub fn cube_faces(&self, v: usize) -> [usize; 6] {
        [
            self.face(v, 0),
            self.face(self.shift(v, 2, 1), 0),
            self.face(v, 1),
            self.face(self.shift(v, 0, 1), 1),
            self.face(v, 2),
            self.face(self.shift(v, 1, 1), 2),
        ]
    }

    pub fn edges_at_vertex(&self, v: usize) -> [usize; 6] {
        [
            self.edge(v, 0),
            self.edge(v, 1),
            self.edge(v, 2),
            self.edge(self.shift(v, 0, -1), 0),
            self.edge(self.shift(v, 1, -1), 1),
            self.edge(self.shift(v, 2, -1), 2),
        ]
    }
}

/// `-X_x Π Z_zs`, the standard cluster term.
fn cluster_term(n: usize, x: usize, zs: &[usize]) -> PauliOperator {
    PauliOperator::xz(n, &[x], zs).negate()
}

fn z_flip(n: usize, q: usize) -> PauliOperator {
    PauliOperator::xz(n, &[], &[q])
}

fn x_string(n: usize, qs: &[usize]) -> PauliOperator {
    PauliOperator::xz(n, qs, &[])
}

impl LatticeModel {
    pub fn build(kind: ModelKind, sizes: &[usize]) -> Result<Self> {
        let first = *sizes
            .first()
            .ok_or_else(|| Error::invalid("missing lattice size"))?;
        match kind {
            ModelKind::Cluster1d => Self::cluster_1d(first),
            ModelKind::Cluster2d => Self::cluster_2d(first),
            ModelKind::Cluster3d => Self::cluster_3d(first),
            ModelKind::KitaevChain => Self::kitaev_chain(first),
            ModelKind::LevinGu => Self::levin_gu(first),
        }
    }

    /// Ring of `n` unit cells, qubits `a_j = 2j`, `b_j = 2j + 1`; term `j` is
    /// `h_{a,j} = -Z_{b,j-1} X_{a,j} Z_{b,j}` and term `n + j` is
    /// `h_{b,j} = -Z_{a,j} X_{b,j} Z_{a,j+1}`.
    pub fn cluster_1d(n: usize) -> Result<Self> {
        check_size("1d cluster", n, 2)?;
        let q = 2 * n;
        let (a, b) = (|j: usize| 2 * (j % n), |j: usize| 2 * (j % n) + 1);
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for j in 0..n {
            terms.push(cluster_term(q, a(j), &[b(j + n - 1), b(j)]));
            flips.push(z_flip(q, a(j)));
        }
        for j in 0..n {
            terms.push(cluster_term(q, b(j), &[a(j), a(j + 1)]));
            flips.push(z_flip(q, b(j)));
        }
        let all_a: Vec<usize> = (0..n).map(a).collect();
        let all_b: Vec<usize> = (0..n).map(b).collect();
        let generators = vec![
            Generator {
                kind: GeneratorKind::ZeroForm,
                label: "U_a".into(),
                op: x_string(q, &all_a),
            },
            Generator {
                kind: GeneratorKind::ZeroForm,
                label: "U_b".into(),
                op: x_string(q, &all_b),
            },
        ];
        Ok(LatticeModel {
            kind: ModelKind::Cluster1d,
            sizes: vec![n],
            model: CommutingProjectorModel::from_paulis(q, terms, flips)?,
            sublattice: [vec![0; n], vec![1; n]].concat(),
            generators,
        })
    }

    /// Vertex qubits `0..L²`, edge qubits `L² + e`.
    pub fn cluster_2d(l: usize) -> Result<Self> {
        check_size("2d cluster", l, 2)?;
        let lat = SquareLattice { l };
        let (nv, ne) = (lat.n_vertices(), lat.n_edges());
        let q = nv + ne;
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for v in 0..nv {
            let zs: Vec<usize> = lat.edges_at(v).iter().map(|e| nv + e).collect();
            terms.push(cluster_term(q, v, &zs));
            flips.push(z_flip(q, v));
        }
        for e in 0..ne {
            let (u, w) = lat.endpoints(e);
            terms.push(cluster_term(q, nv + e, &[u, w]));
            flips.push(z_flip(q, nv + e));
        }
        let mut generators = vec![Generator {
            kind: GeneratorKind::ZeroForm,
            label: "U0".into(),
            op: x_string(q, &(0..nv).collect::<Vec<_>>()),
        }];
        for v in 0..nv {
            let es: Vec<usize> = lat.plaquette(v).iter().map(|e| nv + e).collect();
            generators.push(Generator {
                kind: GeneratorKind::OneForm,
                label: format!("U1_p{v}"),
                op: x_string(q, &es),
            });
        }
        Ok(LatticeModel {
            kind: ModelKind::Cluster2d,
            sizes: vec![l],
            model: CommutingProjectorModel::from_paulis(q, terms, flips)?,
            sublattice: [vec![0; nv], vec![1; ne]].concat(),
            generators,
        })
    }

    /// Edge qubits `0..3L³`, face qubits `3L³ + f`.
    pub fn cluster_3d(l: usize) -> Result<Self> {
        check_size("3d cluster", l, 2)?;
        let lat = CubicLattice { l };
        let n3 = 3 * lat.n_vertices();
        let q = 2 * n3;
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for e in 0..n3 {
            let zs: Vec<usize> = lat.faces_at_edge(e).iter().map(|f| n3 + f).collect();
            terms.push(cluster_term(q, e, &zs));
            flips.push(z_flip(q, e));
        }
        for f in 0..n3 {
            terms.push(cluster_term(q, n3 + f, &lat.face_boundary(f)));
            flips.push(z_flip(q, n3 + f));
        }
        let mut generators = Vec::new();
        for v in 0..lat.n_vertices() {
            generators.push(Generator {
                kind: GeneratorKind::OneForm,
                label: format!("U1_v{v}"),
                op: x_string(q, &lat.edges_at_vertex(v)),
            });
        }
        for v in 0..lat.n_vertices() {
            let fs: Vec<usize> = lat.cube_faces(v).iter().map(|f| n3 + f).collect();
            generators.push(Generator {
                kind: GeneratorKind::OneForm,
                label: format!("U1p_c{v}"),
                op: x_string(q, &fs),
            });
        }
        Ok(LatticeModel {
            kind: ModelKind::Cluster3d,
            sizes: vec![l],
            model: CommutingProjectorModel::from_paulis(q, terms, flips)?,
            sublattice: [vec![0; n3], vec![1; n3]].concat(),
            generators,
        })
    }

    /// Closed Kitaev chain at its fixed point, written in Jordan–Wigner form
    /// with `γ_{2j} = (Π_{k<j} Z_k) X_j` and `γ_{2j+1} = (Π_{k<j} Z_k) Y_j`.
    ///
    /// Term `j` is `-i γ_{2j+1} γ_{2j+2}`, pairing Majoranas of neighbouring
    /// sites (the last term wraps to `γ_0`), and its flip is `γ_{2j+1}`.
    pub fn kitaev_chain(n: usize) -> Result<Self> {
        check_size("Kitaev chain", n, 2)?;
        let maj = |m: usize| -> PauliOperator {
            let site = m / 2;
            let zs: Vec<usize> = (0..site).collect();
            let mut op = PauliOperator::xz(n, &[], &zs);
            let letter = if m % 2 == 0 {
                PauliOperator::xz(n, &[site], &[])
            } else {
                PauliOperator::xz(n, &[site], &[site])
            };
            op = &op * &letter;
            op
        };
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for j in 0..n {
            let (l, r) = (2 * j + 1, (2 * j + 2) % (2 * n));
            let t = (&maj(l) * &maj(r)).with_phase(Phase::MINUS_I);
            terms.push(t);
            flips.push(maj(l));
        }
        let parity = PauliOperator::xz(n, &[], &(0..n).collect::<Vec<_>>());
        Ok(LatticeModel {
            kind: ModelKind::KitaevChain,
            sizes: vec![n],
            model: CommutingProjectorModel::from_paulis(n, terms, flips)?,
            sublattice: vec![0; n],
            generators: vec![Generator {
                kind: GeneratorKind::ZeroForm,
                label: "P".into(),
                op: parity,
            }],
        })
    }

    /// Levin–Gu model on an `L × L` periodic triangular lattice (site
    /// `x + L y`, neighbours along `(1,0)`, `(0,1)`, `(-1,1)` and their
    /// opposites). Term `p` is `X_p Π_{triangles pqq'} i^{[z_q ≠ z_q']}`.
    pub fn levin_gu(l: usize) -> Result<Self> {
        check_size("Levin–Gu", l, 3)?;
        let n = l * l;
        let site = |x: isize, y: isize| {
            let li = l as isize;
            (x.rem_euclid(li) + li * y.rem_euclid(li)) as usize
        };
        // neighbour directions in angular order
        const DIRS: [(isize, isize); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for y in 0..l as isize {
            for x in 0..l as isize {
                let p = site(x, y);
                let ring: Vec<usize> = DIRS.iter().map(|&(dx, dy)| site(x + dx, y + dy)).collect();
                let pairs = (0..6).map(|k| (ring[k], ring[(k + 1) % 6])).collect();
                terms.push(Term::with_pair_phases(PauliOperator::xz(n, &[p], &[]), pairs)?);
                flips.push(z_flip(n, p));
            }
        }
        Ok(LatticeModel {
            kind: ModelKind::LevinGu,
            sizes: vec![l],
            model: CommutingProjectorModel::new(n, terms, flips)?,
            sublattice: vec![0; n],
            generators: vec![Generator {
                kind: GeneratorKind::ZeroForm,
                label: "U".into(),
                op: x_string(n, &(0..n).collect::<Vec<_>>()),
            }],
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn model(&self) -> &CommutingProjectorModel {
        &self.model
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn sublattice(&self) -> &[u8] {
        &self.sublattice
    }

    /// Per-term rates with `p0` on sublattice 0 and `p1` on sublattice 1.
    pub fn rates(&self, p0: f64, p1: f64) -> Vec<f64> {
        self.sublattice
            .iter()
            .map(|&s| if s == 0 { p0 } else { p1 })
            .collect()
    }

    /// `Π_{j ∈ idx} (-h_j)`, whose expectation in the Gibbs state is a
    /// correlator of the corresponding stat-mech variables.
    pub fn product_of_terms(&self, idx: &[usize]) -> Result<PauliOperator> {
        let n = self.model.n_qubits();
        let mut op = PauliOperator::identity(n);
        for &j in idx {
            let t = self
                .model
                .terms()
                .get(j)
                .ok_or_else(|| Error::invalid(format!("term {j} out of range")))?;
            let p = t
                .as_pauli()
                .ok_or_else(|| Error::invalid("term carries pair phases"))?;
            op = &op * &p.clone().negate();
        }
        Ok(op)
    }

    fn cells(&self) -> Result<usize> {
        if self.kind != ModelKind::Cluster1d {
            return Err(Error::invalid("operator is defined for the 1d cluster ring"));
        }
        Ok(self.sizes[0])
    }

    /// `S_a = Z_{b,j-1} X_{a,j} ⋯ X_{a,j+ℓ-1} Z_{b,j+ℓ-1}`.
    pub fn string_a(&self, start: usize, len: usize) -> Result<PauliOperator> {
        let n = self.cells()?;
        self.product_of_terms(&(0..len).map(|k| (start + k) % n).collect::<Vec<_>>())
    }

    /// `S_b = Z_{a,j} X_{b,j} ⋯ X_{b,j+ℓ-1} Z_{a,j+ℓ}`.
    pub fn string_b(&self, start: usize, len: usize) -> Result<PauliOperator> {
        let n = self.cells()?;
        self.product_of_terms(&(0..len).map(|k| n + (start + k) % n).collect::<Vec<_>>())
    }

    /// Truncated symmetry `Π_{l=j}^{j+ℓ-1} X_{a,l}`.
    pub fn disorder_a(&self, start: usize, len: usize) -> Result<PauliOperator> {
        let n = self.cells()?;
        let qs: Vec<usize> = (0..len).map(|k| 2 * ((start + k) % n)).collect();
        Ok(x_string(2 * n, &qs))
    }

    /// `Z_{a,j} Z_{a,k}`.
    pub fn ghz_pair_a(&self, j: usize, k: usize) -> Result<PauliOperator> {
        let n = self.cells()?;
        Ok(PauliOperator::xz(2 * n, &[], &[2 * (j % n), 2 * (k % n)]))
    }
}

/// Thermodynamic-limit string order `⟨S(ℓ)⟩ = tanh^ℓ β = (1 - 2p)^ℓ`.
pub fn string_order_1d_exact(p: f64, len: usize) -> Result<f64> {
    gibbs::check_rate(p)?;
    Ok((1.0 - 2.0 * p).powi(len as i32))
}

/// Thermodynamic-limit CDA disorder operator `sech² β = 1 - (1 - 2p)²`, with
/// `p` the rate of the sublattice whose terms the truncated symmetry cuts.
pub fn disorder_op_1d_exact(p: f64) -> Result<f64> {
    gibbs::check_rate(p)?;
    let t = 1.0 - 2.0 * p;
    Ok(1.0 - t * t)
}

/// Thermodynamic-limit GHZ order `|⟨Z_{a,j} Z_{a,k}⟩|` in the CDA states with
/// the other sublattice undecohered.
pub fn ghz_order_1d_exact(p: f64) -> Result<f64> {
    disorder_op_1d_exact(p)
}

/// Ring version of [`string_order_1d_exact`] in the sector `U = (-1)^charge`
/// of `n` cells: `(t^ℓ + x t^{n-ℓ}) / (1 + x t^n)`. `None` for an empty sector.
pub fn string_order_1d_ring(p: f64, len: usize, n: usize, charge: u8) -> Result<Option<f64>> {
    gibbs::check_rate(p)?;
    if len > n {
        return Err(Error::invalid("string longer than the ring"));
    }
    let t = 1.0 - 2.0 * p;
    let x = if charge == 0 { 1.0 } else { -1.0 };
    let den = 1.0 + x * t.powi(n as i32);
    if den.abs() < 1e-14 {
        return Ok(None);
    }
    Ok(Some((t.powi(len as i32) + x * t.powi((n - len) as i32)) / den))
}

/// Ring version of [`disorder_op_1d_exact`] (and of the GHZ order):
/// `(1 - t²) / (1 + x tⁿ)` for any proper segment, `x = (-1)^charge` of the
/// sector of the sublattice with rate `p`.
pub fn disorder_op_1d_ring(p: f64, n: usize, charge: u8) -> Result<Option<f64>> {
    gibbs::check_rate(p)?;
    let t = 1.0 - 2.0 * p;
    let x = if charge == 0 { 1.0 } else { -1.0 };
    let den = 1.0 + x * t.powi(n as i32);
    if den.abs() < 1e-14 {
        return Ok(None);
    }
    Ok(Some((1.0 - t * t) / den))
}

/// Largest model handled by the sector routines.
pub const SECTOR_QUBIT_CAP: usize = 12;
const EXPANSION_TERM_CAP: usize = 20;

/// Un-normalised traces `T_O(G) = 2^{-n} tr(U_G · Π(1 - f h) · O)` for every
/// generator subset `G`, indexed by bit mask.
fn expansion_table(lm: &LatticeModel, factors: &[f64], obs: &PauliOperator) -> Result<Vec<Complex64>> {
    let model = lm.model();
    let ng = lm.generators.len();
    let terms: Vec<&PauliOperator> = model
        .terms()
        .iter()
        .map(|t| t.as_pauli().ok_or(Error::invalid("pair-phase term")))
        .collect::<Result<_>>()?;
    if terms.len() > EXPANSION_TERM_CAP || ng > 16 {
        return Err(Error::ResourceCap {
            what: "terms in the exact Pauli expansion",
            requested: terms.len(),
            cap: EXPANSION_TERM_CAP,
        });
    }
    // Pauli bits of U_G → [(G, phase of U_G)]
    let mut gen_products: HashMap<(Vec<u64>, Vec<u64>), Vec<(usize, Phase)>> = HashMap::new();
    for mask in 0..1usize << ng {
        let mut u = PauliOperator::identity(model.n_qubits());
        for g in 0..ng {
            if mask >> g & 1 == 1 {
                u = &u * &lm.generators[g].op;
            }
        }
        gen_products
            .entry((u.x_words().to_vec(), u.z_words().to_vec()))
            .or_default()
            .push((mask, u.raw_phase()));
    }
    let mut table = vec![Complex64::new(0.0, 0.0); 1 << ng];
    // depth-first over subsets of terms with the running product
    let mut stack: Vec<(usize, PauliOperator, f64)> =
        vec![(0, PauliOperator::identity(model.n_qubits()), 1.0)];
    while let Some((j, prod, w)) = stack.pop() {
        if j == terms.len() {
            if w == 0.0 {
                continue;
            }
            let full = &prod * obs;
            if let Some(list) = gen_products.get(&(full.x_words().to_vec(), full.z_words().to_vec())) {
                for &(mask, ph) in list {
                    // tr(U_G · i^k P) = i^{k+k'} tr(P P) with U_G = i^{k'} P
                    let d = Phase::new(full.raw_phase().exponent() as i64 + ph.exponent() as i64);
                    table[mask] += d.to_complex() * raw_square_sign(&full) * w;
                }
            }
            continue;
        }
        stack.push((j + 1, prod.clone(), w));
        let f = factors[j];
        if f != 0.0 {
            stack.push((j + 1, &prod * terms[j], -w * f));
        }
    }
    Ok(table)
}

/// `(X^x Z^z)² = (-1)^{x·z}`.
fn raw_square_sign(a: &PauliOperator) -> Complex64 {
    let xz: u32 = a
        .x_words()
        .iter()
        .zip(a.z_words())
        .map(|(x, z)| (x & z).count_ones())
        .sum();
    if xz % 2 == 0 {
        c(1.0)
    } else {
        c(-1.0)
    }
}

fn check_sector_model(lm: &LatticeModel, rates: &[f64], q: &SectorLabel) -> Result<Vec<f64>> {
    let n = lm.model().n_qubits();
    if n > SECTOR_QUBIT_CAP {
        return Err(Error::ResourceCap {
            what: "sector computation (qubits)",
            requested: n,
            cap: SECTOR_QUBIT_CAP,
        });
    }
    if q.0.len() != lm.generators.len() {
        return Err(Error::SizeMismatch(format!(
            "sector label has {} charges for {} generators",
            q.0.len(),
            lm.generators.len()
        )));
    }
    if rates.len() != lm.model().n_terms() {
        return Err(Error::SizeMismatch(format!(
            "{} rates for {} terms",
            rates.len(),
            lm.model().n_terms()
        )));
    }
    rates
        .iter()
        .map(|&p| gibbs::check_rate(p).map(|_| 1.0 - 2.0 * p))
        .collect()
}

fn project(table: &[Complex64], q: &SectorLabel) -> Complex64 {
    let ng = q.0.len();
    table
        .iter()
        .enumerate()
        .map(|(mask, &t)| {
            let s: f64 = (0..ng).filter(|g| mask >> g & 1 == 1).map(|g| q.sign(g)).product();
            t * s
        })
        .sum::<Complex64>()
        / (1u64 << ng) as f64
}

/// `tr(Π_Q ρ)` for the decohered state `ρ ∝ Π_j (1 - (1-2p_j) h_j)` and the
/// projector `Π_Q = Π_g (1 + (-1)^{Q_g} U_g)/2`, computed exactly.
pub fn sector_probability_dense(lm: &LatticeModel, rates: &[f64], q: &SectorLabel) -> Result<f64> {
    let factors = check_sector_model(lm, rates, q)?;
    if lm.model().terms().iter().any(|t| t.as_pauli().is_none()) {
        let (rho, proj) = dense_sector_pieces(lm, &factors, q)?;
        return Ok(linalg::trace(&(&proj * &rho)).re);
    }
    let id = PauliOperator::identity(lm.model().n_qubits());
    let table = expansion_table(lm, &factors, &id)?;
    Ok((project(&table, q) / table[0]).re)
}

/// Probabilities of every sector label, in label-index order.
pub fn all_sector_probabilities(lm: &LatticeModel, rates: &[f64]) -> Result<Vec<(SectorLabel, f64)>> {
    let ng = lm.generators.len();
    let q0 = SectorLabel::trivial(ng);
    let factors = check_sector_model(lm, rates, &q0)?;
    let id = PauliOperator::identity(lm.model().n_qubits());
    let table = expansion_table(lm, &factors, &id)?;
    Ok((0..1usize << ng)
        .map(|i| {
            let q = SectorLabel::from_index(i, ng);
            let p = (project(&table, &q) / table[0]).re;
            (q, p)
        })
        .collect())
}

/// `tr(ρ_Q O)` with `ρ_Q = Π_Q ρ Π_Q / tr(Π_Q ρ)`. The observable must commute
/// with every generator.
pub fn sector_observable_dense(
    lm: &LatticeModel,
    rates: &[f64],
    q: &SectorLabel,
    obs: &PauliOperator,
) -> Result<f64> {
    let factors = check_sector_model(lm, rates, q)?;
    for (g, gen) in lm.generators.iter().enumerate() {
        if !gen.op.commutes_with(obs)? {
            return Err(Error::NotSymmetric(g));
        }
    }
    if lm.model().terms().iter().any(|t| t.as_pauli().is_none()) {
        let (rho, proj) = dense_sector_pieces(lm, &factors, q)?;
        let pr = &proj * &rho;
        let norm = linalg::trace(&pr).re;
        if norm < 1e-14 {
            return Err(Error::EmptySector);
        }
        let o = DenseMonomial::from_pauli(obs)?;
        return Ok((linalg::trace(&o.right_mul(&pr)) / norm).re);
    }
    let id = PauliOperator::identity(lm.model().n_qubits());
    let norm = project(&expansion_table(lm, &factors, &id)?, q);
    if norm.re.abs() < 1e-14 {
        return Err(Error::EmptySector);
    }
    let num = project(&expansion_table(lm, &factors, obs)?, q);
    Ok((num / norm).re)
}

fn dense_sector_pieces(lm: &LatticeModel, factors: &[f64], q: &SectorLabel) -> Result<(CMatrix, CMatrix)> {
    let rho = lm.model().dense_product_state(factors)?;
    let dim = rho.nrows();
    let mut proj = CMatrix::identity(dim, dim);
    for (g, gen) in lm.generators.iter().enumerate() {
        let u = DenseMonomial::from_pauli(&gen.op)?;
        proj = (&proj + u.left_mul(&proj) * c(q.sign(g))) * c(0.5);
    }
    Ok((rho, proj))
}

/// Dense CDA state `exp(-Σ β_j h_j / 2) |m⟩` for an X-basis product state
/// `|m⟩` (`m[q] = true` for `|−⟩`), normalised. Infinite `β_j` projects onto
/// `h_j = -1`.
pub fn cda_state_dense(model: &CommutingProjectorModel, betas: &[f64], m: &[bool]) -> Result<DVector<Complex64>> {
    let n = model.n_qubits();
    if n > SECTOR_QUBIT_CAP + 4 {
        return Err(Error::ResourceCap {
            what: "dense CDA state (qubits)",
            requested: n,
            cap: SECTOR_QUBIT_CAP + 4,
        });
    }
    if m.len() != n || betas.len() != model.n_terms() {
        return Err(Error::SizeMismatch("CDA inputs do not match the model".into()));
    }
    let mask: u64 = (0..n).filter(|&q| m[q]).map(|q| 1u64 << (n - 1 - q)).sum();
    let dim = 1usize << n;
    let mut psi = DVector::from_fn(dim, |b, _| {
        let s = if (b as u64 & mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        c(s)
    });
    for (t, &beta) in model.terms().iter().zip(betas) {
        let hpsi = t.dense_action()?.apply(&psi);
        psi = if beta.is_infinite() {
            (&psi - hpsi) * c(0.5)
        } else {
            &psi * c((beta / 2.0).cosh()) - hpsi * c((beta / 2.0).sinh())
        };
    }
    let norm = psi.norm();
    if norm < 1e-300 {
        return Err(Error::EmptySector);
    }
    Ok(psi / c(norm))
}

/// `⟨ψ|P|ψ⟩` for a dense state vector.
pub fn expectation(psi: &DVector<Complex64>, op: &PauliOperator) -> Result<f64> {
    let m = DenseMonomial::from_pauli(op)?;
    Ok(psi.dotc(&m.apply(psi)).re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_models_validate() {
        for (kind, l) in [
            (ModelKind::Cluster1d, 4),
            (ModelKind::Cluster2d, 3),
            (ModelKind::Cluster3d, 2),
            (ModelKind::KitaevChain, 5),
            (ModelKind::LevinGu, 3),
        ] {
            let lm = LatticeModel::build(kind, &[l]).unwrap();
            let rep = lm.model().validate().unwrap();
            assert!(rep.is_valid(), "{kind:?}: {rep:?}");
            for g in lm.generators() {
                for t in lm.model().terms() {
                    assert!(gibbs::terms_commute(&Term::from(g.op.clone()), t).unwrap());
                }
            }
        }
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(LatticeModel::cluster_1d(1).is_err());
        assert!(LatticeModel::cluster_2d(1).is_err());
        assert!(LatticeModel::levin_gu(2).is_err());
    }

    #[test]
    fn closed_form_limits() {
        assert_eq!(string_order_1d_exact(0.0, 7).unwrap(), 1.0);
        assert!((string_order_1d_exact(0.1, 3).unwrap() - 0.512).abs() < 1e-15);
        assert_eq!(disorder_op_1d_exact(0.0).unwrap(), 0.0);
        assert_eq!(disorder_op_1d_exact(0.5).unwrap(), 1.0);
        assert!(string_order_1d_exact(0.7, 1).is_err());
        assert_eq!(string_order_1d_ring(0.0, 2, 4, 1).unwrap(), None);
    }

    #[test]
    fn sector_probabilities_sum_to_one() {
        let lm = LatticeModel::cluster_1d(3).unwrap();
        let all = all_sector_probabilities(&lm, &lm.rates(0.1, 0.3)).unwrap();
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn string_at_zero_rate_in_trivial_sector() {
        let lm = LatticeModel::cluster_1d(4).unwrap();
        let s = lm.string_b(0, 2).unwrap();
        let v = sector_observable_dense(&lm, &lm.rates(0.2, 0.0), &SectorLabel(vec![0, 0]), &s).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_symmetric_observable_is_rejected() {
        let lm = LatticeModel::cluster_1d(3).unwrap();
        let z = PauliOperator::xz(6, &[], &[0]);
        assert!(matches!(
            sector_observable_dense(&lm, &lm.rates(0.1, 0.1), &SectorLabel(vec![0, 0]), &z),
            Err(Error::NotSymmetric(0))
        ));
    }
}
