//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// max |A - A^dagger|
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// max |U^dagger U - 1|
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    // symmetrize to keep roundoff from leaking into the solver
    let hs = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// `V f(Lambda) V^dagger` for a Hermitian matrix given by its eigen-decomposition.
pub fn hermitian_function(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= f(lam);
    }
    scaled * vectors.adjoint()
}

/// `exp(-i t H)` for Hermitian `H`, computed through its eigenbasis.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    hermitian_function(&vals, &vecs, |lam| Complex64::from_polar(1.0, -t * lam))
}

/// Eigenvalues and orthonormal eigenvectors of a unitary matrix.
///
/// Uses the complex Schur form: for a normal matrix the triangular factor is
/// diagonal up to roundoff, so the Schur vectors are eigenvectors.
pub fn eig_unitary(u: &CMatrix) -> Result<(Vec<Complex64>, CMatrix)> {
    let n = u.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    if n == 1 {
        return Ok((vec![u[(0, 0)]], CMatrix::identity(1, 1)));
    }
    let schur = Schur::try_new(u.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values = (0..n).map(|k| t[(k, k)]).collect();
    Ok((values, q))
}

pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// `<v|A|v>` real part for Hermitian `A`.
pub fn expect(a: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(a * v)).re
}
