//! Commuting-projector models and the dephasing channels that turn their
//! ground states into Gibbs states.
//!
//! A model is a list of mutually commuting, involutory terms `h_j` together
//! with one Pauli "flip" `O_j` per term that anticommutes with `h_j` and
//! commutes with every other term. The ground state `ρ₀ ∝ Π_j (1 - h_j)/2`
//! passed through `E_j(ρ) = (1-p_j) ρ + p_j O_j ρ O_j` becomes
//!
//! ```text
//! ρ ∝ Π_j (1 - (1-2p_j) h_j) ∝ exp(-Σ_j β_j h_j),   tanh β_j = 1 - 2 p_j.
//! ```
//!
//! Terms are allowed to carry a diagonal factor `Π i^{[z_q ≠ z_q']}` over a
//! list of qubit pairs, which is what the Levin–Gu plaquettes need; all
//! algebraic checks on such terms are done by exact enumeration over their
//! joint support.

use std::collections::HashMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::pauli::{phase_value, PauliOperator};

/// Dense computations on full registers are refused above this size.
pub const DENSE_STATE_CAP: usize = 12;

/// Joint supports larger than this are not enumerated.
const ENUMERATION_CAP: usize = 22;

/// A term `P · Π_{(q,q')} i^{[z_q ≠ z_q']}` with `P` a Pauli operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pauli: PauliOperator,
    pairs: Vec<(usize, usize)>,
}

impl From<PauliOperator> for Term {
    fn from(p: PauliOperator) -> Self {
        Term {
            pauli: p,
            pairs: Vec::new(),
        }
    }
}

impl Term {
    pub fn with_pair_phases(pauli: PauliOperator, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n = pauli.n_qubits();
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
            return Err(Error::invalid(format!("bad phase pair ({a}, {b})")));
        }
        Ok(Term { pauli, pairs })
    }

    pub fn pauli(&self) -> &PauliOperator {
        &self.pauli
    }

    pub fn pair_phases(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn as_pauli(&self) -> Option<&PauliOperator> {
        self.pairs.is_empty().then_some(&self.pauli)
    }

    pub fn n_qubits(&self) -> usize {
        self.pauli.n_qubits()
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s = self.pauli.support();
        for &(a, b) in &self.pairs {
            s.push(a);
            s.push(b);
        }
        s.sort_unstable();
        s.dedup();
        s
    }

    fn monomial(&self, bit_of: &dyn Fn(usize) -> u32) -> Monomial {
        let mut x = 0u64;
        let mut z = 0u64;
        for q in self.pauli.support() {
            let b = 1u64 << bit_of(q);
            if self.pauli.x_bit(q) {
                x |= b;
            }
            if self.pauli.z_bit(q) {
                z |= b;
            }
        }
        Monomial {
            x,
            z,
            k: self.pauli.raw_phase().exponent(),
            pairs: self
                .pairs
                .iter()
                .map(|&(a, b)| (bit_of(a), bit_of(b)))
                .collect(),
        }
    }

    /// Action on basis states of the full register (qubit 0 = most significant bit).
    pub fn dense_action(&self) -> Result<DenseMonomial> {
        let n = self.n_qubits();
        if n > DENSE_STATE_CAP + 8 {
            return Err(Error::ResourceCap {
                what: "dense monomial (qubits)",
                requested: n,
                cap: DENSE_STATE_CAP + 8,
            });
        }
        let m = self.monomial(&|q| (n - 1 - q) as u32);
        let dim = 1u64 << n;
        let (target, phase) = (0..dim).map(|b| m.act(b)).map(|(t, k)| (t as u32, k)).unzip();
        Ok(DenseMonomial { target, phase })
    }
}

/// Local bit-mask form of a term: `i^k X^x Z^z D` with `D` the pair phases.
struct Monomial {
    x: u64,
    z: u64,
    k: u8,
    pairs: Vec<(u32, u32)>,
}

impl Monomial {
    fn act(&self, b: u64) -> (u64, u8) {
        let mut k = self.k as u32;
        for &(p, q) in &self.pairs {
            k += ((b >> p) ^ (b >> q)) as u32 & 1;
        }
        k += 2 * ((self.z & b).count_ones() & 1);
        (b ^ self.x, (k & 3) as u8)
    }
}

/// Exchange relation `A B = λ B A` found by enumeration, if one exists.
fn exchange_sign(a: &Term, b: &Term) -> Result<Option<i8>> {
    let mut sites = a.support();
    sites.extend(b.support());
    sites.sort_unstable();
    sites.dedup();
    if sites.len() > ENUMERATION_CAP {
        return Err(Error::ResourceCap {
            what: "joint support for exact enumeration",
            requested: sites.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let index: HashMap<usize, u32> = sites.iter().enumerate().map(|(i, &q)| (q, i as u32)).collect();
    let bit_of = |q: usize| index[&q];
    let (ma, mb) = (a.monomial(&bit_of), b.monomial(&bit_of));
    let mut rel = None;
    for conf in 0..1u64 << sites.len() {
        let (t1, k1) = mb.act(conf);
        let (t1, k1b) = ma.act(t1);
        let (t2, k2) = ma.act(conf);
        let (t2, k2b) = mb.act(t2);
        if t1 != t2 {
            return Ok(None);
        }
        let d = (k1 + k1b + 4 - (k2 + k2b) % 4) % 4;
        match rel {
            None => rel = Some(d),
            Some(r) if r != d => return Ok(None),
            _ => {}
        }
    }
    Ok(match rel {
        Some(0) => Some(1),
        Some(2) => Some(-1),
        _ => None,
    })
}

/// `true` iff the two terms commute exactly.
pub fn terms_commute(a: &Term, b: &Term) -> Result<bool> {
    if let (Some(p), Some(q)) = (a.as_pauli(), b.as_pauli()) {
        return p.commutes_with(q);
    }
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::QubitMismatch {
            expected: a.n_qubits(),
            found: b.n_qubits(),
        });
    }
    Ok(exchange_sign(a, b)? == Some(1))
}

/// `true` iff `O h O† = -h`.
pub fn anticommutes(o: &PauliOperator, h: &Term) -> Result<bool> {
    if let Some(p) = h.as_pauli() {
        return Ok(!o.commutes_with(p)?);
    }
    Ok(exchange_sign(&Term::from(o.clone()), h)? == Some(-1))
}

pub fn squares_to_identity(t: &Term) -> Result<bool> {
    if let Some(p) = t.as_pauli() {
        return Ok(p.squares_to_identity());
    }
    let sites = t.support();
    if sites.len() > ENUMERATION_CAP {
        return Err(Error::ResourceCap {
            what: "term support for exact enumeration",
            requested: sites.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let index: HashMap<usize, u32> = sites.iter().enumerate().map(|(i, &q)| (q, i as u32)).collect();
    let m = t.monomial(&|q| index[&q]);
    Ok((0..1u64 << sites.len()).all(|b| {
        let (t1, k1) = m.act(b);
        let (t2, k2) = m.act(t1);
        t2 == b && (k1 + k2) % 4 == 0
    }))
}

/// Signed-permutation action of a term on the computational basis:
/// `O|b⟩ = i^{phase[b]} |target[b]⟩`.
#[derive(Clone, Debug)]
pub struct DenseMonomial {
    target: Vec<u32>,
    phase: Vec<u8>,
}

impl DenseMonomial {
    pub fn from_pauli(p: &PauliOperator) -> Result<Self> {
        Term::from(p.clone()).dense_action()
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// `O · m`.
    pub fn left_mul(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for (b, (&t, &k)) in self.target.iter().zip(&self.phase).enumerate() {
            let ph = phase_value(k);
            for j in 0..m.ncols() {
                out[(t as usize, j)] = ph * m[(b, j)];
            }
        }
        out
    }

    /// `m · O†`.
    pub fn right_mul_adjoint(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for (b, (&t, &k)) in self.target.iter().zip(&self.phase).enumerate() {
            let ph = phase_value(k).conj();
            for i in 0..m.nrows() {
                out[(i, t as usize)] = m[(i, b)] * ph;
            }
        }
        out
    }

    /// `m · O`.
    pub fn right_mul(&self, m: &CMatrix) -> CMatrix {
        // (m O)[i, b] = m[i, t(b)] i^{k(b)}
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for (b, (&t, &k)) in self.target.iter().zip(&self.phase).enumerate() {
            let ph = phase_value(k);
            for i in 0..m.nrows() {
                out[(i, b)] = m[(i, t as usize)] * ph;
            }
        }
        out
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::zeros(v.len());
        for (b, (&t, &k)) in self.target.iter().zip(&self.phase).enumerate() {
            out[t as usize] = phase_value(k) * v[b];
        }
        out
    }

    pub fn to_matrix(&self) -> CMatrix {
        self.left_mul(&CMatrix::identity(self.dim(), self.dim()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutingProjectorModel {
    n_qubits: usize,
    terms: Vec<Term>,
    flips: Vec<PauliOperator>,
}

/// Everything that is wrong with a candidate model; empty when valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub non_commuting_terms: Vec<(usize, usize)>,
    pub non_involutory_terms: Vec<usize>,
    pub non_hermitian_flips: Vec<usize>,
    pub flips_not_anticommuting: Vec<usize>,
    /// `(flip, term)` pairs with `flip ≠ term` that fail to commute.
    pub flips_not_commuting: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        *self == ValidationReport::default()
    }
}

impl CommutingProjectorModel {
    /// Builds the model without checking the algebra; see [`Self::validate`].
    pub fn new(n_qubits: usize, terms: Vec<Term>, flips: Vec<PauliOperator>) -> Result<Self> {
        if terms.len() != flips.len() {
            return Err(Error::SizeMismatch(format!(
                "{} terms but {} flips",
                terms.len(),
                flips.len()
            )));
        }
        for n in terms
            .iter()
            .map(Term::n_qubits)
            .chain(flips.iter().map(PauliOperator::n_qubits))
        {
            if n != n_qubits {
                return Err(Error::QubitMismatch {
                    expected: n_qubits,
                    found: n,
                });
            }
        }
        Ok(CommutingProjectorModel {
            n_qubits,
            terms,
            flips,
        })
    }

    pub fn from_paulis(
        n_qubits: usize,
        terms: Vec<PauliOperator>,
        flips: Vec<PauliOperator>,
    ) -> Result<Self> {
        Self::new(n_qubits, terms.into_iter().map(Term::from).collect(), flips)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn flips(&self) -> &[PauliOperator] {
        &self.flips
    }

    /// Model file text: a `qubits <n>` line, then one line per term,
    /// `term <pauli> | flip <pauli>` with an optional `| pairs q-q' ...`.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {}\n", self.n_qubits);
        for (t, f) in self.terms.iter().zip(&self.flips) {
            out.push_str(&format!("term {} | flip {}", t.pauli, f));
            if !t.pairs.is_empty() {
                let pairs: Vec<String> = t.pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                out.push_str(&format!(" | pairs {}", pairs.join(" ")));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_text`] output. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut terms = Vec::new();
        let mut flips = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Parse(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("qubits") {
                n = Some(rest.trim().parse::<usize>().map_err(|_| at(format!("bad qubit count '{}'", rest.trim())))?);
                continue;
            }
            let rest = line
                .strip_prefix("term")
                .ok_or_else(|| at(format!("expected 'qubits' or 'term', found '{line}'")))?;
            let n = n.ok_or_else(|| at("'term' before 'qubits'".into()))?;
            let mut fields = rest.split('|').map(str::trim);
            let pauli = PauliOperator::parse(fields.next().unwrap_or(""), n)?;
            let flip = fields
                .next()
                .and_then(|f| f.strip_prefix("flip"))
                .ok_or_else(|| at("missing '| flip <pauli>'".into()))?;
            let flip = PauliOperator::parse(flip, n)?;
            let mut pairs = Vec::new();
            if let Some(f) = fields.next() {
                let list = f.strip_prefix("pairs").ok_or_else(|| at(format!("unexpected field '{f}'")))?;
                for tok in list.split_whitespace() {
                    let (a, b) = tok.split_once('-').ok_or_else(|| at(format!("bad pair '{tok}'")))?;
                    let q = |s: &str| s.parse::<usize>().map_err(|_| at(format!("bad pair '{tok}'")));
                    pairs.push((q(a)?, q(b)?));
                }
            }
            terms.push(Term::with_pair_phases(pauli, pairs)?);
            flips.push(flip);
        }
        let n = n.ok_or_else(|| Error::Parse("missing 'qubits' line".into()))?;
        Self::new(n, terms, flips)
    }

    /// Pairs of indices into `self.terms` whose supports overlap.
    fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut by_site: HashMap<usize, Vec<usize>> = HashMap::new();
        for (j, t) in self.terms.iter().enumerate() {
            for q in t.support() {
                by_site.entry(q).or_default().push(j);
            }
        }
        let mut pairs: Vec<(usize, usize)> = by_site
            .values()
            .flat_map(|js| {
                js.iter()
                    .enumerate()
                    .flat_map(move |(a, &i)| js[a + 1..].iter().map(move |&j| (i.min(j), i.max(j))))
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let mut rep = ValidationReport::default();
        for (i, j) in self.overlapping_pairs() {
            if !terms_commute(&self.terms[i], &self.terms[j])? {
                rep.non_commuting_terms.push((i, j));
            }
        }
        for (j, t) in self.terms.iter().enumerate() {
            if !squares_to_identity(t)? {
                rep.non_involutory_terms.push(j);
            }
        }
        let mut by_site: HashMap<usize, Vec<usize>> = HashMap::new();
        for (j, t) in self.terms.iter().enumerate() {
            for q in t.support() {
                by_site.entry(q).or_default().push(j);
            }
        }
        for (f, o) in self.flips.iter().enumerate() {
            if !o.is_hermitian() {
                rep.non_hermitian_flips.push(f);
            }
            if !anticommutes(o, &self.terms[f])? {
                rep.flips_not_anticommuting.push(f);
            }
            let mut near: Vec<usize> = o
                .support()
                .iter()
                .filter_map(|q| by_site.get(q))
                .flatten()
                .copied()
                .filter(|&j| j != f)
                .collect();
            near.sort_unstable();
            near.dedup();
            for j in near {
                if !terms_commute(&Term::from(o.clone()), &self.terms[j])? {
                    rep.flips_not_commuting.push((f, j));
                }
            }
        }
        Ok(rep)
    }

    fn check_dense(&self) -> Result<usize> {
        if self.n_qubits > DENSE_STATE_CAP {
            return Err(Error::ResourceCap {
                what: "dense density matrix (qubits)",
                requested: self.n_qubits,
                cap: DENSE_STATE_CAP,
            });
        }
        Ok(1 << self.n_qubits)
    }

    /// Dense Hamiltonian `Σ_j w_j h_j`.
    pub fn dense_hamiltonian(&self, weights: &[f64]) -> Result<CMatrix> {
        let dim = self.check_dense()?;
        let mut h = CMatrix::zeros(dim, dim);
        for (t, &w) in self.terms.iter().zip(weights) {
            h += t.dense_action()?.to_matrix() * c(w);
        }
        Ok(h)
    }

    /// Normalised ground-state projector `Π_j (1 - h_j)/2 / tr`.
    pub fn dense_ground_state(&self) -> Result<CMatrix> {
        self.dense_product_state(&vec![1.0; self.terms.len()])
    }

    /// `Π_j (1 - f_j h_j)` normalised to unit trace.
    pub fn dense_product_state(&self, factors: &[f64]) -> Result<CMatrix> {
        let dim = self.check_dense()?;
        let mut rho = CMatrix::identity(dim, dim);
        for (t, &f) in self.terms.iter().zip(factors) {
            let hr = t.dense_action()?.left_mul(&rho);
            rho -= hr * c(f);
        }
        normalise(rho)
    }
}

fn normalise(rho: CMatrix) -> Result<CMatrix> {
    let tr = linalg::trace(&rho);
    if tr.norm() < 1e-300 {
        return Err(Error::Numerical("state has vanishing trace".into()));
    }
    Ok(rho / tr)
}

/// `β = atanh(1 - 2p)`; infinite at `p = 0`.
pub fn beta_of_rate(p: f64) -> Result<f64> {
    check_rate(p)?;
    Ok((1.0 - 2.0 * p).atanh())
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::invalid(format!("error rate {p} outside [0, 1/2]")));
    }
    Ok(())
}

/// Gibbs form `ρ ∝ exp(-Σ_j β_j h_j) ∝ Π_j (1 - tanh(β_j) h_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsDescriptor {
    /// `β_j`, possibly `+∞`.
    pub betas: Vec<f64>,
    /// `tanh β_j = 1 - 2 p_j`, the factor in the product form.
    pub factors: Vec<f64>,
}

impl GibbsDescriptor {
    pub fn is_uniform(&self) -> bool {
        self.betas.windows(2).all(|w| w[0] == w[1])
    }

    /// Dense state from the product form.
    pub fn to_dense(&self, model: &CommutingProjectorModel) -> Result<CMatrix> {
        model.dense_product_state(&self.factors)
    }
}

/// Maps per-term dephasing rates to the Gibbs descriptor of the channel output.
pub fn decohere_ground_state(
    model: &CommutingProjectorModel,
    rates: &[f64],
) -> Result<GibbsDescriptor> {
    if rates.len() != model.n_terms() {
        return Err(Error::SizeMismatch(format!(
            "{} rates for {} terms",
            rates.len(),
            model.n_terms()
        )));
    }
    let rep = model.validate()?;
    if !rep.is_valid() {
        return Err(Error::Validation(format!("{rep:?}")));
    }
    let mut betas = Vec::with_capacity(rates.len());
    for &p in rates {
        betas.push(beta_of_rate(p)?);
    }
    Ok(GibbsDescriptor {
        factors: rates.iter().map(|p| 1.0 - 2.0 * p).collect(),
        betas,
    })
}

pub fn decohere_uniform(model: &CommutingProjectorModel, p: f64) -> Result<GibbsDescriptor> {
    decohere_ground_state(model, &vec![p; model.n_terms()])
}

/// Ground state pushed through the explicit channels, one term at a time.
pub fn dense_channel_oracle(model: &CommutingProjectorModel, rates: &[f64]) -> Result<CMatrix> {
    if rates.len() != model.n_terms() {
        return Err(Error::SizeMismatch(format!(
            "{} rates for {} terms",
            rates.len(),
            model.n_terms()
        )));
    }
    let mut rho = model.dense_ground_state()?;
    for (o, &p) in model.flips().iter().zip(rates) {
        check_rate(p)?;
        let m = DenseMonomial::from_pauli(o)?;
        let flipped = m.right_mul_adjoint(&m.left_mul(&rho));
        rho = rho * c(1.0 - p) + flipped * c(p);
    }
    Ok(rho)
}

/// `exp(-Σ β_j h_j) / Z` by Hermitian diagonalisation; all `β_j` must be finite.
pub fn dense_thermal_state(model: &CommutingProjectorModel, betas: &[f64]) -> Result<CMatrix> {
    if let Some(b) = betas.iter().find(|b| !b.is_finite()) {
        return Err(Error::invalid(format!("β = {b} has no finite thermal state")));
    }
    let h = model.dense_hamiltonian(betas)?;
    let (vals, _) = linalg::eigh(&h);
    let shift = vals[0];
    normalise(linalg::herm_fn(&h, |e| (-(e - shift)).exp()))
}

/// Outcome of passing the `Z_N` cluster-ring ground state through the clock
/// dephasing channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZnReport {
    pub clock: usize,
    pub sites: usize,
    pub p: f64,
    /// `max |[ρ, H]|` with `H = -Σ_i P_i`.
    pub commutator_with_h: f64,
    /// Largest weight difference between joint eigenstates with the same
    /// projector pattern `{P_i}`.
    pub projector_function_defect: f64,
    /// Least-squares `w` in `ρ ∝ exp(w Σ_i P_i)`, if every weight is positive.
    pub fitted_weight: Option<f64>,
    /// Largest residual of `ln ρ` against the fitted Gibbs form.
    pub gibbs_residual: f64,
    pub is_gibbs: bool,
    /// Populations by number of satisfied projectors (summed over states).
    pub weight_by_satisfied: Vec<f64>,
}

const ZN_DIM_CAP: usize = 2000;

struct Clock {
    n: usize,
    sites: usize,
}

impl Clock {
    fn dim(&self) -> usize {
        self.n.pow(self.sites as u32)
    }

    fn digit(&self, b: usize, s: usize) -> usize {
        b / self.n.pow((self.sites - 1 - s) as u32) % self.n
    }

    fn omega(&self, k: i64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / self.n as f64)
    }

    /// `Π_s Z_s^{zs[s]} X_s^{xs[s]}` (clock to the left of shift on each site).
    fn op(&self, xs: &[usize], zs: &[usize]) -> CMatrix {
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut t = 0;
            let mut k = 0i64;
            for s in 0..self.sites {
                let d = (self.digit(b, s) + xs[s]) % self.n;
                k += (d * zs[s]) as i64;
                t = t * self.n + d;
            }
            m[(t, b)] = self.omega(k);
        }
        m
    }
}

struct ZnState {
    rho: CMatrix,
    hs: Vec<CMatrix>,
    projectors: Vec<CMatrix>,
}

fn zn_state(clock: usize, sites: usize, p: f64) -> Result<ZnState> {
    check_rate(p)?;
    if clock < 2 || sites < 3 {
        return Err(Error::invalid("need N ≥ 2 and at least 3 sites"));
    }
    let cl = Clock { n: clock, sites };
    let dim = clock
        .checked_pow(sites as u32)
        .filter(|&d| d <= ZN_DIM_CAP)
        .ok_or(Error::ResourceCap {
            what: "Z_N Hilbert-space dimension",
            requested: clock.saturating_pow(sites as u32),
            cap: ZN_DIM_CAP,
        })?;
    let hs: Vec<CMatrix> = (0..sites)
        .map(|i| {
            let mut xs = vec![0; sites];
            let mut zs = vec![0; sites];
            xs[i] = 1;
            zs[(i + sites - 1) % sites] = 1;
            zs[(i + 1) % sites] = 1;
            cl.op(&xs, &zs)
        })
        .collect();
    let projectors: Vec<CMatrix> = hs
        .iter()
        .map(|h| {
            let mut acc = CMatrix::identity(dim, dim);
            let mut pow = CMatrix::identity(dim, dim);
            for _ in 1..clock {
                pow = &pow * h;
                acc += &pow;
            }
            acc / c(clock as f64)
        })
        .collect();
    let mut rho = CMatrix::identity(dim, dim);
    for pr in &projectors {
        rho = pr * rho;
    }
    rho = normalise(rho)?;
    for i in 0..sites {
        let mut zs = vec![0; sites];
        zs[i] = 1;
        let z = cl.op(&vec![0; sites], &zs);
        let zd = z.adjoint();
        let kick = &z * &rho * &zd + &zd * &rho * &z;
        rho = rho * c(1.0 - p) + kick * c(p / 2.0);
    }
    Ok(ZnState { rho, hs, projectors })
}

/// Dense output of the clock channel on the `Z_N` cluster ring, basis digits
/// ordered with site 0 most significant.
pub fn zn_channel_dense(clock: usize, sites: usize, p: f64) -> Result<CMatrix> {
    Ok(zn_state(clock, sites, p)?.rho)
}

/// Clock dephasing of the `Z_N` cluster ring `h_i = Z_{i-1} X_i Z_{i+1}` with
/// Kraus data `K(i) = Z_i` (rates `1-p`, `p/2`, `p/2`), analysed in the joint
/// eigenbasis of the `h_i`.
pub fn zn_channel_to_gibbs(clock: usize, sites: usize, p: f64) -> Result<ZnReport> {
    let ZnState { rho, hs, projectors } = zn_state(clock, sites, p)?;
    let dim = rho.nrows();
    let h_total: CMatrix = projectors.iter().fold(CMatrix::zeros(dim, dim), |a, b| a - b);
    let commutator_with_h = linalg::max_abs(&linalg::commutator(&rho, &h_total));

    // a generic Hermitian combination of the commuting h_i resolves the joint
    // eigenbasis; logs of distinct primes keep its spectrum nondegenerate
    const PRIMES: [f64; 22] = [
        2., 3., 5., 7., 11., 13., 17., 19., 23., 29., 31., 37., 41., 43., 47., 53., 59., 61., 67.,
        71., 73., 79.,
    ];
    let mut gen = CMatrix::zeros(dim, dim);
    for (i, h) in hs.iter().enumerate() {
        let (a, b) = (PRIMES[i].ln(), 0.5 * PRIMES[i + 11].ln());
        gen += (h + h.adjoint()) * c(a) + (h - h.adjoint()) * Complex64::new(0.0, -b);
    }
    let (_, vecs) = linalg::eigh(&gen);
    let mut by_pattern: HashMap<Vec<bool>, Vec<f64>> = HashMap::new();
    let mut samples = Vec::with_capacity(dim);
    for j in 0..dim {
        let v = vecs.column(j);
        let w = (v.adjoint() * &rho * v)[(0, 0)].re;
        let pattern: Vec<bool> = hs
            .iter()
            .map(|h| ((v.adjoint() * h * v)[(0, 0)] - c(1.0)).norm() < 1e-6)
            .collect();
        let n_sat = pattern.iter().filter(|&&s| s).count();
        by_pattern.entry(pattern).or_default().push(w);
        samples.push((n_sat, w));
    }
    let projector_function_defect = by_pattern
        .values()
        .map(|ws| {
            let (lo, hi) = ws
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
            hi - lo
        })
        .fold(0.0, f64::max);
    let mut weight_by_satisfied = vec![0.0; sites + 1];
    for &(n, w) in &samples {
        weight_by_satisfied[n] += w;
    }
    let positive = samples.iter().all(|&(_, w)| w > 1e-14);
    let (fitted_weight, gibbs_residual) = if positive {
        let xs: Vec<f64> = samples.iter().map(|&(n, _)| n as f64).collect();
        let ys: Vec<f64> = samples.iter().map(|&(_, w)| w.ln()).collect();
        let (a, b, _) = crate::stats::line_fit(&xs, &ys);
        let resid = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - a - b * x).abs())
            .fold(0.0, f64::max);
        (Some(b), resid)
    } else {
        (None, f64::INFINITY)
    };
    Ok(ZnReport {
        clock,
        sites,
        p,
        commutator_with_h,
        projector_function_defect,
        fitted_weight,
        gibbs_residual,
        is_gibbs: commutator_with_h < 1e-10 && projector_function_defect < 1e-10 && gibbs_residual < 1e-8,
        weight_by_satisfied,
    })
}

/// The same ring for `N = 2`, as a qubit model with terms `-Z X Z` and flips `Z`.
pub fn z2_cluster_ring(sites: usize) -> Result<CommutingProjectorModel> {
    let terms = (0..sites)
        .map(|i| PauliOperator::xz(sites, &[i], &[(i + sites - 1) % sites, (i + 1) % sites]).negate())
        .collect();
    let flips = (0..sites)
        .map(|i| PauliOperator::xz(sites, &[], &[i]))
        .collect();
    CommutingProjectorModel::from_paulis(sites, terms, flips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_text_round_trip() {
        use crate::models::{LatticeModel, ModelKind};
        for (kind, l) in [(ModelKind::Cluster1d, 3), (ModelKind::Cluster2d, 2), (ModelKind::LevinGu, 3)] {
            let m = LatticeModel::build(kind, &[l]).unwrap().model().clone();
            let text = m.to_text();
            let back = CommutingProjectorModel::from_text(&text).unwrap();
            assert_eq!(back.terms(), m.terms());
            assert_eq!(back.flips(), m.flips());
        }
        assert!(CommutingProjectorModel::from_text("term +X0 | flip +Z0").is_err());
        assert!(CommutingProjectorModel::from_text("qubits 2\nterm +X0 X1").is_err());
    }

    fn ring(n: usize) -> CommutingProjectorModel {
        z2_cluster_ring(n).unwrap()
    }

    #[test]
    fn ring_is_valid() {
        assert!(ring(5).validate().unwrap().is_valid());
    }

    #[test]
    fn broken_flip_is_reported() {
        let m = ring(4);
        let mut flips = m.flips().to_vec();
        flips[1] = PauliOperator::xz(4, &[1], &[]);
        let bad = CommutingProjectorModel::new(4, m.terms().to_vec(), flips).unwrap();
        let rep = bad.validate().unwrap();
        assert_eq!(rep.flips_not_anticommuting, vec![1]);
        assert!(decohere_uniform(&bad, 0.1).is_err());
    }

    #[test]
    fn rate_bounds() {
        assert!(decohere_uniform(&ring(3), 0.6).is_err());
        assert!(decohere_uniform(&ring(3), -0.1).is_err());
        let g = decohere_uniform(&ring(3), 0.0).unwrap();
        assert!(g.betas.iter().all(|b| b.is_infinite()));
        let g = decohere_uniform(&ring(3), 0.5).unwrap();
        assert!(g.betas.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn channel_matches_product_form() {
        let m = ring(5);
        let rates = [0.05, 0.1, 0.2, 0.3, 0.45];
        let g = decohere_ground_state(&m, &rates).unwrap();
        let a = dense_channel_oracle(&m, &rates).unwrap();
        let b = g.to_dense(&m).unwrap();
        let t = dense_thermal_state(&m, &g.betas).unwrap();
        assert!(linalg::max_abs(&(&a - &b)) < 1e-12);
        assert!(linalg::max_abs(&(&a - &t)) < 1e-12);
    }

    #[test]
    fn dense_monomial_products() {
        let p = PauliOperator::parse("+X0 Y1 Z2", 3).unwrap();
        let m = DenseMonomial::from_pauli(&p).unwrap();
        let d = p.to_dense().unwrap();
        let r = CMatrix::from_fn(8, 8, |i, j| Complex64::new(i as f64 - j as f64, (i * j) as f64));
        assert!(linalg::max_abs(&(m.left_mul(&r) - &d * &r)) < 1e-12);
        assert!(linalg::max_abs(&(m.right_mul(&r) - &r * &d)) < 1e-12);
        assert!(linalg::max_abs(&(m.right_mul_adjoint(&r) - &r * d.adjoint())) < 1e-12);
    }

    #[test]
    fn pair_phase_commutation_by_enumeration() {
        // a closed cycle of pair phases has an even number of domain walls
        let cycle = vec![(1, 2), (2, 3), (3, 1)];
        let t = Term::with_pair_phases(PauliOperator::xz(4, &[0], &[]), cycle).unwrap();
        let zz = Term::from(PauliOperator::xz(4, &[], &[1, 2]));
        assert!(terms_commute(&t, &zz).unwrap());
        assert!(squares_to_identity(&t).unwrap());
        let open = Term::with_pair_phases(PauliOperator::xz(4, &[0], &[]), vec![(1, 2)]).unwrap();
        assert!(!squares_to_identity(&open).unwrap());
        // flipping one cycle site changes the phase by a configuration-dependent sign
        let x1 = Term::from(PauliOperator::xz(4, &[1], &[]));
        assert!(!terms_commute(&t, &x1).unwrap());
        assert!(!anticommutes(&PauliOperator::xz(4, &[1], &[]), &t).unwrap());
        assert!(anticommutes(&PauliOperator::xz(4, &[], &[0]), &t).unwrap());
    }

    #[test]
    fn z3_ring_is_gibbs() {
        let p = 0.2;
        let r = zn_channel_to_gibbs(3, 4, p).unwrap();
        assert!(r.is_gibbs, "{r:?}");
        let w = r.fitted_weight.unwrap();
        assert!((w - (2.0 * (1.0 - p) / p).ln()).abs() < 1e-9);
    }

    #[test]
    fn z4_ring_is_not_gibbs() {
        let r = zn_channel_to_gibbs(4, 3, 0.2).unwrap();
        assert!(r.commutator_with_h < 1e-10);
        assert!(!r.is_gibbs);
    }

    #[test]
    fn z2_clock_reduces_to_qubit_channel() {
        let p = 0.15;
        let r = zn_channel_to_gibbs(2, 4, p).unwrap();
        assert!(r.is_gibbs);
        assert!((r.fitted_weight.unwrap() - ((1.0 - p) / p).ln()).abs() < 1e-9);
        let m = ring(4);
        let g = decohere_uniform(&m, p).unwrap();
        let a = zn_channel_dense(2, 4, p).unwrap();
        assert!(linalg::max_abs(&(a - g.to_dense(&m).unwrap())) < 1e-12);
    }

    #[test]
    fn zn_dimension_cap() {
        assert!(matches!(
            zn_channel_to_gibbs(5, 5, 0.1),
            Err(Error::ResourceCap { .. })
        ));
    }
}
