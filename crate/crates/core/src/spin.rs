//! Fock basis, Schwinger angular-momentum matrices, SU(2) coherent states and
//! Husimi distributions.
//!
//! Basis index `n` counts the particles in well 1, so `|N>` (index `N`) is the
//! north pole of the Bloch sphere and `L_z` has diagonal entries `n - N/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, I};

/// Spin-N/2 representation of the two-mode operators.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    n: usize,
    pub lx: CMatrix,
    pub ly: CMatrix,
    pub lz: CMatrix,
    /// `exp(-i pi L_x)`
    pub rx: CMatrix,
    /// Eigenvalues `m = -l..l` of `L_x`, ascending.
    lx_values: Vec<f64>,
    /// Matching orthonormal eigenvectors of `L_x` (columns).
    lx_vectors: CMatrix,
    /// `<k+1|L_+|k>`
    ladder: Vec<f64>,
}

impl SpinOperators {
    pub fn new(n: usize) -> Result<Self> {
        build_spin_operators(n)
    }

    /// Particle number N (dimension is N + 1).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn ell(&self) -> f64 {
        self.n as f64 / 2.0
    }

    /// Eigenbasis of `L_x` with exact quantum numbers `m`.
    pub fn lx_eigen(&self) -> (&[f64], &CMatrix) {
        (&self.lx_values, &self.lx_vectors)
    }

    /// `L_z^2`, diagonal.
    pub fn lz_squared(&self) -> CMatrix {
        &self.lz * &self.lz
    }

    /// Diagonal of `L_z` as reals.
    pub fn m_values(&self) -> Vec<f64> {
        (0..=self.n).map(|k| k as f64 - self.ell()).collect()
    }

    pub fn components(&self) -> [&CMatrix; 3] {
        [&self.lx, &self.ly, &self.lz]
    }

    /// `(<L_x>, <L_y>, <L_z>)` from the tridiagonal structure, no dimension check.
    pub(crate) fn expectation_unchecked(&self, v: &CVector) -> [f64; 3] {
        let ell = self.ell();
        let mut lplus = Complex64::new(0.0, 0.0);
        let mut lz = 0.0;
        for k in 0..self.n {
            lplus += v[k + 1].conj() * v[k] * self.ladder[k];
        }
        for k in 0..=self.n {
            lz += v[k].norm_sqr() * (k as f64 - ell);
        }
        [lplus.re, lplus.im, lz]
    }
}

/// Builds `L_x, L_y, L_z` from the ladder elements and `R_x` from the exact
/// spectrum of `L_x`.
pub fn build_spin_operators(n: usize) -> Result<SpinOperators> {
    if n < 1 {
        return Err(Error::invalid("n", "particle number must be >= 1"));
    }
    let dim = n + 1;
    let ell = n as f64 / 2.0;
    let ladder: Vec<f64> = (0..n)
        .map(|k| {
            let m = k as f64 - ell;
            (ell * (ell + 1.0) - m * (m + 1.0)).sqrt()
        })
        .collect();
    let mut lplus = CMatrix::zeros(dim, dim);
    for (k, a) in ladder.iter().enumerate() {
        lplus[(k + 1, k)] = c(*a);
    }
    let lminus = lplus.adjoint();
    let lx = (&lplus + &lminus) * c(0.5);
    let ly = (&lplus - &lminus) * (c(0.5) / I);
    let lz = CMatrix::from_diagonal(&CVector::from_fn(dim, |k, _| c(k as f64 - ell)));

    let (numeric, vectors) = linalg::eigh(&lx);
    // spectrum is exactly -l, -l+1, ..., l
    let values: Vec<f64> = (0..dim).map(|k| k as f64 - ell).collect();
    debug_assert!(numeric.iter().zip(&values).all(|(a, b)| (a - b).abs() < 1e-8));
    let rx = linalg::hermitian_function(&values, &vectors, |m| Complex64::from_polar(1.0, -PI * m));

    Ok(SpinOperators {
        n,
        lx,
        ly,
        lz,
        rx,
        lx_values: values,
        lx_vectors: vectors,
        ladder,
    })
}

/// Normalized state over the Fock basis `|n>`, `n = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    const NORM_TOL: f64 = 1e-10;

    /// Wraps amplitudes that are already normalized.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::invalid("amplitudes", "need at least two basis states"));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::invalid("amplitudes", format!("norm {norm} is not 1")));
        }
        Ok(StateVector { amplitudes })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("amplitudes", "cannot normalize a zero vector"));
        }
        Self::new(amplitudes / c(norm))
    }

    pub(crate) fn from_raw(amplitudes: CVector) -> Self {
        StateVector { amplitudes }
    }

    /// Fock state with `k` particles in well 1.
    pub fn fock(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::invalid("k", format!("occupation {k} exceeds N = {n}")));
        }
        let mut a = CVector::zeros(n + 1);
        a[k] = c(1.0);
        Self::new(a)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_inner(self) -> CVector {
        self.amplitudes
    }

    pub fn n(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|<self|other>|^2`
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.overlap(other).norm_sqr()
    }

    pub fn apply(&self, op: &CMatrix) -> StateVector {
        StateVector::from_raw(op * &self.amplitudes)
    }
}

fn ln_binomial_table(n: usize) -> Vec<f64> {
    // ln C(n, k) for k = 0..n
    let mut lnfact = vec![0.0; n + 1];
    for k in 1..=n {
        lnfact[k] = lnfact[k - 1] + (k as f64).ln();
    }
    (0..=n).map(|k| lnfact[n] - lnfact[k] - lnfact[n - k]).collect()
}

/// Real Fock-basis weights `sqrt(C(N,n)) cos^n(theta/2) sin^(N-n)(theta/2)`.
fn coherent_weights(n: usize, theta: f64, ln_binom: &[f64]) -> Vec<f64> {
    let (sh, ch) = (theta / 2.0).sin_cos();
    (0..=n)
        .map(|k| (0.5 * ln_binom[k]).exp() * ch.powi(k as i32) * sh.powi((n - k) as i32))
        .collect()
}

/// SU(2) coherent state `|theta, phi>` in the Fock basis.
pub fn coherent_state(n: usize, theta: f64, phi: f64) -> Result<StateVector> {
    if n < 1 {
        return Err(Error::invalid("n", "particle number must be >= 1"));
    }
    if !(-1e-12..=PI + 1e-12).contains(&theta) {
        return Err(Error::invalid("theta", format!("{theta} outside [0, pi]")));
    }
    let lnb = ln_binomial_table(n);
    let w = coherent_weights(n, theta, &lnb);
    let amps = CVector::from_fn(n + 1, |k, _| Complex64::from_polar(w[k], (n - k) as f64 * phi));
    Ok(StateVector::from_raw(amps))
}

/// `(<L_x>, <L_y>, <L_z>)`.
pub fn angular_expectation(state: &StateVector, ops: &SpinOperators) -> Result<[f64; 3]> {
    if state.amplitudes.len() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: state.amplitudes.len(),
        });
    }
    Ok(ops.expectation_unchecked(&state.amplitudes))
}

/// Husimi distribution sampled on a uniform `(theta, phi)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    /// `n_theta` points spanning `[0, pi]` inclusive.
    pub thetas: Vec<f64>,
    /// `n_phi` points spanning `[-pi, pi)`.
    pub phis: Vec<f64>,
    /// `values[i][j] = Q(thetas[i], phis[j])`
    pub values: Vec<Vec<f64>>,
}

impl HusimiGrid {
    /// Location `(theta, phi)` of the largest sample.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                if q > best.2 {
                    best = (i, j, q);
                }
            }
        }
        (self.thetas[best.0], self.phis[best.1])
    }

    /// `(N+1)/(4 pi) * integral of Q over the sphere` with the `sin(theta)`
    /// area weight: trapezoid in theta, periodic rectangle rule in phi.
    pub fn normalization(&self, n: usize) -> f64 {
        let nt = self.thetas.len();
        let dphi = 2.0 * PI / self.phis.len() as f64;
        let mut total = 0.0;
        for i in 0..nt {
            let dtheta = if i == 0 {
                (self.thetas[1] - self.thetas[0]) / 2.0
            } else if i == nt - 1 {
                (self.thetas[nt - 1] - self.thetas[nt - 2]) / 2.0
            } else {
                (self.thetas[i + 1] - self.thetas[i - 1]) / 2.0
            };
            let row: f64 = self.values[i].iter().sum();
            total += row * self.thetas[i].sin() * dtheta * dphi;
        }
        (n as f64 + 1.0) / (4.0 * PI) * total
    }
}

/// `Q(theta, phi) = |<theta, phi|psi>|^2`.
pub fn husimi(state: &StateVector, n_theta: usize, n_phi: usize) -> Result<HusimiGrid> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::invalid("grid", "need at least 2 points per axis"));
    }
    let n = state.n();
    let lnb = ln_binomial_table(n);
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| PI * i as f64 / (n_theta - 1) as f64)
        .collect();
    let phis: Vec<f64> = (0..n_phi)
        .map(|j| -PI + 2.0 * PI * j as f64 / n_phi as f64)
        .collect();
    let psi = state.amplitudes();
    let values = thetas
        .iter()
        .map(|&th| {
            let w = coherent_weights(n, th, &lnb);
            // b_k = w_k psi_k, Q = |sum_k b_k e^{-i (N-k) phi}|^2
            let b: Vec<Complex64> = (0..=n).map(|k| psi[k] * w[k]).collect();
            phis.iter()
                .map(|&ph| {
                    let step = Complex64::from_polar(1.0, -ph);
                    // Horner in e^{-i phi}, highest power at k = 0
                    let mut acc = Complex64::new(0.0, 0.0);
                    for bk in &b {
                        acc = acc * step + bk;
                    }
                    acc.norm_sqr()
                })
                .collect()
        })
        .collect();
    Ok(HusimiGrid { thetas, phis, values })
}
