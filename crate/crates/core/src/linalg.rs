//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(c)
}

fn to_faer(m: &CMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Uses faer: nalgebra's complex `symmetric_eigen` can return eigenvectors
/// with O(0.1) residuals on degenerate spectra.
pub fn eigh(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), CMatrix::zeros(0, 0));
    }
    let eig = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigendecomposition did not converge");
    let (s, u) = (eig.S(), eig.U());
    let vals = DVector::from_fn(n, |i, _| s[i].re);
    let vecs = CMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    (vals, vecs)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v = to_faer(m)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("Hermitian eigendecomposition did not converge");
    v.sort_by(f64::total_cmp);
    v
}

/// `V f(Λ) V†` for Hermitian `m`.
pub fn herm_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vecs.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMatrix) -> f64 {
    m.iter().map(|z| z.abs()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Antisymmetry defect `max |m + mᵀ|`.
pub fn antisymmetry_defect(m: &RMatrix) -> f64 {
    max_abs_real(&(m + m.transpose()))
}

/// Sub-matrix on the given rows and columns.
pub fn submatrix<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::random_pure_covariance;
    use crate::rng::task_rng;

    #[test]
    fn eigh_is_accurate_on_degenerate_spectra() {
        // iM for pure M has eigenvalues ±1 only
        let mut rng = task_rng(6, 0);
        for n in [2, 4, 6] {
            for _ in 0..40 {
                let h = to_complex(random_pure_covariance(n, &mut rng).matrix()).map(|z| z * I);
                let (vals, vecs) = eigh(&h);
                let res = &h * &vecs - &vecs * CMatrix::from_diagonal(&vals.map(c));
                assert!(max_abs(&res) < 1e-12);
                assert!(max_abs(&(vecs.adjoint() * &vecs - CMatrix::identity(2 * n, 2 * n))) < 1e-12);
                assert!(vals.as_slice().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
