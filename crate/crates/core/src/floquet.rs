//! Many-particle Floquet operator, its spectrum and stroboscopic propagation.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::params::SystemParams;
use crate::spin::{SpinOperators, StateVector};

/// Order of the two factors of the one-period propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `F = exp(i c tau Lz^2) exp(-i H0 tau)`: free evolution, then the kick.
    KickAfterRotation,
    /// `F~ = exp(-i H0 tau) exp(i c tau Lz^2)`.
    RotationAfterKick,
}

#[derive(Debug, Clone)]
pub struct FloquetOperator {
    pub matrix: CMatrix,
    pub params: SystemParams,
    pub variant: Variant,
}

/// `H0 = eps Lz + v Lx` and `V = -Lz^2`.
pub fn build_hamiltonians(params: &SystemParams, ops: &SpinOperators) -> Result<(CMatrix, CMatrix)> {
    check_dim(params, ops)?;
    let h0 = &ops.lz * c(params.epsilon) + &ops.lx * c(params.v);
    let v = -ops.lz_squared();
    Ok((h0, v))
}

fn check_dim(params: &SystemParams, ops: &SpinOperators) -> Result<()> {
    if params.n != ops.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n + 1,
            found: ops.dim(),
        });
    }
    Ok(())
}

/// `exp(-i H0 tau)`. For a symmetric trap the exact `L_x` spectrum is used.
fn free_propagator(params: &SystemParams, ops: &SpinOperators) -> CMatrix {
    let tau = params.tau;
    if params.epsilon == 0.0 {
        let (m, vecs) = ops.lx_eigen();
        linalg::hermitian_function(m, vecs, |mm| Complex64::from_polar(1.0, -params.v * tau * mm))
    } else {
        let h0 = &ops.lz * c(params.epsilon) + &ops.lx * c(params.v);
        linalg::expm_hermitian(&h0, tau)
    }
}

/// Diagonal of the kick factor `exp(i c tau Lz^2)`.
fn kick_phases(params: &SystemParams, ops: &SpinOperators) -> Vec<Complex64> {
    ops.m_values()
        .iter()
        .map(|m| Complex64::from_polar(1.0, params.c * params.tau * m * m))
        .collect()
}

pub fn floquet_operator(
    params: &SystemParams,
    ops: &SpinOperators,
    variant: Variant,
) -> Result<FloquetOperator> {
    params.validate()?;
    check_dim(params, ops)?;
    let mut matrix = free_propagator(params, ops);
    let kick = kick_phases(params, ops);
    match variant {
        Variant::KickAfterRotation => {
            for (i, mut row) in matrix.row_iter_mut().enumerate() {
                row *= kick[i];
            }
        }
        Variant::RotationAfterKick => {
            for (j, mut col) in matrix.column_iter_mut().enumerate() {
                col *= kick[j];
            }
        }
    }
    Ok(FloquetOperator {
        matrix,
        params: *params,
        variant,
    })
}

impl FloquetOperator {
    pub fn new(params: &SystemParams, ops: &SpinOperators) -> Result<Self> {
        floquet_operator(params, ops, Variant::KickAfterRotation)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }
}

/// Symmetry class under `R_x = exp(-i pi L_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    /// Eigenvalue `+1` (even N) or `+i` (odd N).
    Even,
    /// Eigenvalue `-1` (even N) or `-i` (odd N).
    Odd,
    /// No parity symmetry (asymmetric trap).
    None,
}

impl Parity {
    /// Eigenvalue of `R_x` on this class.
    pub fn rx_eigenvalue(self, n: usize) -> Option<Complex64> {
        let unit = if n.is_multiple_of(2) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 1.0)
        };
        match self {
            Parity::Even => Some(unit),
            Parity::Odd => Some(-unit),
            Parity::None => None,
        }
    }

    pub fn opposite(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::None => Parity::None,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "+",
            Parity::Odd => "-",
            Parity::None => "none",
        })
    }
}

/// Quasi-energies, Floquet states and parity labels at one parameter point.
///
/// States are ordered by parity sector (`+` first) and by ascending
/// quasi-energy inside each sector.
#[derive(Debug, Clone)]
pub struct FloquetDecomposition {
    pub quasienergies: Vec<f64>,
    pub states: Vec<StateVector>,
    pub parities: Vec<Parity>,
    pub tau: f64,
}

/// Folds `-arg(lambda)/tau` into `[-pi/tau, pi/tau)`.
pub fn quasienergy(lambda: Complex64, tau: f64) -> f64 {
    let mut e = -lambda.arg() / tau;
    let half = PI / tau;
    if e >= half {
        e -= 2.0 * half;
    }
    if e < -half {
        e += 2.0 * half;
    }
    e
}

/// Columns of the `L_x` eigenbasis spanning one `R_x` sector.
fn sector_basis(ops: &SpinOperators, parity: Parity) -> CMatrix {
    let (m, vecs) = ops.lx_eigen();
    let target = parity.rx_eigenvalue(ops.n()).expect("sector parity");
    let cols: Vec<usize> = m
        .iter()
        .enumerate()
        .filter(|(_, &mm)| (Complex64::from_polar(1.0, -PI * mm) - target).norm() < 1e-6)
        .map(|(k, _)| k)
        .collect();
    CMatrix::from_fn(ops.dim(), cols.len(), |i, j| vecs[(i, cols[j])])
}

fn fix_phase(v: &mut CVector) {
    // largest component real and positive, first one wins on ties
    let mut best = 0;
    let mut best_abs = -1.0;
    for (k, z) in v.iter().enumerate() {
        let a = z.norm();
        if a > best_abs * (1.0 + 1e-9) {
            best = k;
            best_abs = a;
        }
    }
    if best_abs > 0.0 {
        let phase = v[best].conj() / best_abs;
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

fn dominant_index(v: &CVector) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Diagonalizes `F`. For a symmetric trap each `R_x` sector is diagonalized
/// separately so parity labels are exact.
pub fn diagonalize_floquet(fop: &FloquetOperator, ops: &SpinOperators) -> Result<FloquetDecomposition> {
    check_dim(&fop.params, ops)?;
    let tau = fop.params.tau;
    let mut entries: Vec<(Parity, f64, usize, CVector)> = Vec::with_capacity(fop.dim());
    let sectors: Vec<(Parity, Option<CMatrix>)> = if fop.params.is_symmetric() {
        vec![
            (Parity::Even, Some(sector_basis(ops, Parity::Even))),
            (Parity::Odd, Some(sector_basis(ops, Parity::Odd))),
        ]
    } else {
        vec![(Parity::None, None)]
    };
    for (parity, basis) in sectors {
        let block = match &basis {
            Some(b) => b.adjoint() * &fop.matrix * b,
            None => fop.matrix.clone(),
        };
        if block.nrows() == 0 {
            continue;
        }
        let (lams, q) = linalg::eig_unitary(&block)?;
        for (k, lam) in lams.iter().enumerate() {
            if (lam.norm() - 1.0).abs() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "Floquet eigenvalue of modulus {} is not unimodular",
                    lam.norm()
                )));
            }
            let local = q.column(k).into_owned();
            let mut v = match &basis {
                Some(b) => b * local,
                None => local,
            };
            let norm = v.norm();
            v /= c(norm);
            fix_phase(&mut v);
            let idx = dominant_index(&v);
            entries.push((parity, quasienergy(*lam, tau), idx, v));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = FloquetDecomposition {
        quasienergies: Vec::with_capacity(entries.len()),
        states: Vec::with_capacity(entries.len()),
        parities: Vec::with_capacity(entries.len()),
        tau,
    };
    for (p, e, _, v) in entries {
        out.parities.push(p);
        out.quasienergies.push(e);
        out.states.push(StateVector::from_raw(v));
    }
    Ok(out)
}

impl FloquetDecomposition {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Indices of the states in one parity class.
    pub fn sector(&self, parity: Parity) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.parities[k] == parity).collect()
    }

    /// `|<kappa|psi>|^2` for every Floquet state.
    pub fn populations(&self, psi: &StateVector) -> Vec<f64> {
        self.states.iter().map(|k| k.fidelity(psi)).collect()
    }

    /// `max_k |F|k> - exp(-i eps_k tau)|k>|`
    pub fn max_residual(&self, fop: &FloquetOperator) -> f64 {
        self.states
            .iter()
            .zip(&self.quasienergies)
            .map(|(st, &e)| {
                let lam = Complex64::from_polar(1.0, -e * self.tau);
                (fop.apply(st.amplitudes()) - st.amplitudes() * lam).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |<k|k'> - delta|`
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let z = self.states[i].overlap(&self.states[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((z - c(target)).norm());
            }
        }
        worst
    }
}

/// Circular distance of two quasi-energies on the zone `[-pi/tau, pi/tau)`.
pub fn circular_distance(a: f64, b: f64, tau: f64) -> f64 {
    let period = 2.0 * PI / tau;
    let d = (a - b).abs() % period;
    d.min(period - d)
}

/// `a - b` wrapped into `[-pi/tau, pi/tau)`.
pub fn signed_difference(a: f64, b: f64, tau: f64) -> f64 {
    let period = 2.0 * PI / tau;
    let mut d = (a - b) % period;
    if d >= period / 2.0 {
        d -= period;
    }
    if d < -period / 2.0 {
        d += period;
    }
    d
}

/// Observables recorded after every kick.
#[derive(Debug, Clone, Default)]
pub struct Observers {
    /// `(|+>, |->)`; when absent the island populations are reported as NaN.
    pub islands: Option<(StateVector, StateVector)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub kick: usize,
    /// `<L>/l`
    pub l: [f64; 3],
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_orth: f64,
    pub norm: f64,
}

/// Stroboscopic record `psi_{m+1} = F psi_m`, `m = 0..n_kicks`.
pub fn propagate(
    state: &StateVector,
    fop: &FloquetOperator,
    ops: &SpinOperators,
    n_kicks: usize,
    observers: &Observers,
) -> Result<Vec<TimeSample>> {
    let mut out = Vec::with_capacity(n_kicks + 1);
    propagate_with(state, fop, ops, n_kicks, observers, |s| {
        out.push(*s);
        true
    })?;
    Ok(out)
}

/// Streaming form of [`propagate`]; the callback returns `false` to stop early.
pub fn propagate_with(
    state: &StateVector,
    fop: &FloquetOperator,
    ops: &SpinOperators,
    n_kicks: usize,
    observers: &Observers,
    mut sink: impl FnMut(&TimeSample) -> bool,
) -> Result<StateVector> {
    if state.amplitudes().len() != fop.dim() || ops.dim() != fop.dim() {
        return Err(Error::DimensionMismatch {
            expected: fop.dim(),
            found: state.amplitudes().len(),
        });
    }
    let ell = ops.ell();
    let mut psi = state.amplitudes().clone();
    let mut next = CVector::zeros(psi.len());
    for kick in 0..=n_kicks {
        let l = ops.expectation_unchecked(&psi);
        let norm = psi.norm();
        let (p_plus, p_minus, p_orth) = match &observers.islands {
            Some((plus, minus)) => {
                let pp = plus.amplitudes().dotc(&psi).norm_sqr();
                let pm = minus.amplitudes().dotc(&psi).norm_sqr();
                (pp, pm, norm * norm - pp - pm)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let sample = TimeSample {
            kick,
            l: [l[0] / ell, l[1] / ell, l[2] / ell],
            p_plus,
            p_minus,
            p_orth,
            norm,
        };
        if !sink(&sample) || kick == n_kicks {
            break;
        }
        fop.matrix.mul_to(&psi, &mut next);
        std::mem::swap(&mut psi, &mut next);
    }
    Ok(StateVector::from_raw(psi))
}

/// Kick-to-kick Heisenberg map `A -> F^dagger A F`.
pub fn heisenberg_conjugate(fop: &FloquetOperator, a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != fop.dim() || a.ncols() != fop.dim() {
        return Err(Error::DimensionMismatch {
            expected: fop.dim(),
            found: a.nrows(),
        });
    }
    let scale = linalg::max_abs(a).max(1.0);
    if linalg::hermiticity_defect(a) > 1e-10 * scale {
        return Err(Error::invalid("a", "operator is not Hermitian"));
    }
    Ok(fop.matrix.adjoint() * a * &fop.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, unitarity_defect, I};
    use crate::spin::build_spin_operators;

    fn setup(n: usize, eps: f64, v: f64, c_scaled: f64, tau: f64) -> (SystemParams, SpinOperators) {
        let p = SystemParams::new(eps, v, c_scaled / (n as f64 + 1.0), tau, n).unwrap();
        (p, build_spin_operators(n).unwrap())
    }

    #[test]
    fn hamiltonians() {
        let (p, ops) = setup(2, 0.0, 1.0, 1.0, 1.0);
        let (h0, v) = build_hamiltonians(&p, &ops).unwrap();
        assert!(max_abs(&(h0 - &ops.lx)) < 1e-15);
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-1.0), c(0.0), c(-1.0)]));
        assert!(max_abs(&(v - want)) < 1e-15);

        let (p, ops) = setup(5, 2.0, 0.0, 0.0, 1.0);
        let (h0, _) = build_hamiltonians(&p, &ops).unwrap();
        for k in 0..6 {
            assert!((h0[(k, k)].re - 2.0 * (k as f64 - 2.5)).abs() < 1e-15);
        }
        assert!(linalg::hermiticity_defect(&h0) < 1e-12);
    }

    #[test]
    fn dimension_check() {
        let p = SystemParams::new(0.0, 1.0, 0.0, 1.0, 4).unwrap();
        let ops = build_spin_operators(5).unwrap();
        assert!(matches!(
            floquet_operator(&p, &ops, Variant::KickAfterRotation),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn no_kick_is_free_evolution() {
        let (p, ops) = setup(6, 0.3, 0.8, 0.0, 1.3);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let h0 = &ops.lz * c(0.3) + &ops.lx * c(0.8);
        assert!(max_abs(&(f.matrix - linalg::expm_hermitian(&h0, 1.3))) < 1e-12);
    }

    #[test]
    fn spin_half_closed_form() {
        // exp(-i pi sigma_x / 2) = -i sigma_x, Lz^2 = 1/4
        for cc in [0.0, 0.37, 2.0] {
            let p = SystemParams::new(0.0, 1.0, cc, PI, 1).unwrap();
            let ops = build_spin_operators(1).unwrap();
            let f = FloquetOperator::new(&p, &ops).unwrap();
            let sx = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
            let want = sx * (-I * Complex64::from_polar(1.0, cc * PI / 4.0));
            assert!(max_abs(&(f.matrix - want)) < 1e-12);
        }
    }

    #[test]
    fn unitarity_and_symmetry() {
        for n in [5, 20, 31] {
            let (p, ops) = setup(n, 0.0, 1.0, 2.3, 1.0);
            let f = FloquetOperator::new(&p, &ops).unwrap();
            assert!(unitarity_defect(&f.matrix) < 1e-12);
            assert!(max_abs(&linalg::commutator(&f.matrix, &ops.rx)) < 1e-12);
        }
    }

    #[test]
    fn variants_share_spectrum() {
        for (eps, n) in [(0.0, 12), (0.4, 9)] {
            let (p, ops) = setup(n, eps, 1.1, 2.7, 0.9);
            let a = diagonalize_floquet(
                &floquet_operator(&p, &ops, Variant::KickAfterRotation).unwrap(),
                &ops,
            )
            .unwrap();
            let b = diagonalize_floquet(
                &floquet_operator(&p, &ops, Variant::RotationAfterKick).unwrap(),
                &ops,
            )
            .unwrap();
            let mut ea = a.quasienergies.clone();
            let mut eb = b.quasienergies.clone();
            ea.sort_by(f64::total_cmp);
            eb.sort_by(f64::total_cmp);
            for (x, y) in ea.iter().zip(&eb) {
                assert!(circular_distance(*x, *y, p.tau) < 1e-10);
            }
        }
    }

    #[test]
    fn linear_spectrum() {
        let n = 8;
        let (p, ops) = setup(n, 0.0, 1.0, 0.0, 1.0);
        let d = diagonalize_floquet(&FloquetOperator::new(&p, &ops).unwrap(), &ops).unwrap();
        let mut want: Vec<f64> = (0..=n)
            .map(|k| quasienergy(Complex64::from_polar(1.0, -(k as f64 - 4.0)), 1.0))
            .collect();
        let mut got = d.quasienergies.clone();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sector_sizes_and_labels() {
        for n in [10, 11] {
            let (p, ops) = setup(n, 0.0, 1.0, 2.0, 1.0);
            let f = FloquetOperator::new(&p, &ops).unwrap();
            let d = diagonalize_floquet(&f, &ops).unwrap();
            let even = d.sector(Parity::Even).len();
            let odd = d.sector(Parity::Odd).len();
            assert_eq!(even.max(odd), (n + 2) / 2);
            assert_eq!(even.min(odd), n.div_ceil(2));
            assert!(d.max_residual(&f) < 1e-10);
            assert!(d.orthonormality_defect() < 1e-10);
            for (st, par) in d.states.iter().zip(&d.parities) {
                let lam = par.rx_eigenvalue(n).unwrap();
                let r = st.apply(&ops.rx).amplitudes() - st.amplitudes() * lam;
                assert!(r.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn asymmetric_trap_has_no_parity() {
        let (p, ops) = setup(7, 0.3, 1.0, 1.5, 1.0);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let d = diagonalize_floquet(&f, &ops).unwrap();
        assert!(d.parities.iter().all(|p| *p == Parity::None));
        assert!(d.max_residual(&f) < 1e-10);
    }

    #[test]
    fn quasienergy_zone() {
        assert_eq!(quasienergy(Complex64::new(-1.0, 0.0), 1.0), -PI);
        assert_eq!(quasienergy(Complex64::new(-1.0, -0.0), 1.0), -PI);
        let e = quasienergy(Complex64::from_polar(1.0, 0.3), 2.0);
        assert!((e + 0.15).abs() < 1e-15);
    }

    #[test]
    fn splitting_helpers() {
        let tau = 1.0;
        assert!((circular_distance(3.1, -3.1, tau) - (2.0 * PI - 6.2)).abs() < 1e-12);
        assert!((signed_difference(-3.1, 3.1, tau) - (2.0 * PI - 6.2)).abs() < 1e-12);
        assert!((signed_difference(0.2, 0.5, tau) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn heisenberg_lz_closed_form() {
        for (n, cs, tau) in [(10, 2.0, 1.0), (21, 3.1, 0.7)] {
            let (p, ops) = setup(n, 0.0, 1.0, cs, tau);
            let f = FloquetOperator::new(&p, &ops).unwrap();
            let out = heisenberg_conjugate(&f, &ops.lz).unwrap();
            let (s, co) = (p.v * tau).sin_cos();
            let want = &ops.ly * c(s) + &ops.lz * c(co);
            assert!(max_abs(&(out - want)) < 1e-10);
        }
    }

    #[test]
    fn heisenberg_lx_closed_form() {
        let (n, tau) = (14, 0.8);
        let (p, ops) = setup(n, 0.0, 1.0, 2.2, tau);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let (s, co) = (p.v * tau).sin_cos();
        let id = CMatrix::identity(n + 1, n + 1);
        let gen = (&id + &ops.ly * c(2.0 * s) + &ops.lz * c(2.0 * co)) * c(p.c);
        let phase = linalg::expm_hermitian(&gen, tau);
        let pre = &ops.lx + (&ops.ly * c(co) - &ops.lz * c(s)) * I;
        let core = pre * phase;
        let lx_want = (&core + core.adjoint()) * c(0.5);
        let ly_want = (&core - core.adjoint()) * (c(0.5) / I);
        let lx = heisenberg_conjugate(&f, &ops.lx).unwrap();
        let ly = heisenberg_conjugate(&f, &ops.ly).unwrap();
        assert!(max_abs(&(lx - lx_want)) < 1e-9);
        assert!(max_abs(&(ly - ly_want)) < 1e-9);
    }

    #[test]
    fn heisenberg_identity_and_rejection() {
        let (p, ops) = setup(6, 0.0, 1.0, 1.0, 1.0);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let id = CMatrix::identity(7, 7);
        assert!(max_abs(&(heisenberg_conjugate(&f, &id).unwrap() - &id)) < 1e-12);
        let bad = &ops.lx * I;
        assert!(heisenberg_conjugate(&f, &bad).is_err());
    }

    /// `exp(-i t H)` by scaling and squaring of a Taylor series.
    fn expm_series(h: &CMatrix, t: f64) -> CMatrix {
        let n = h.nrows();
        let a = h * Complex64::new(0.0, -t / 1024.0);
        let mut term = CMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / c(k as f64);
            sum += &term;
        }
        for _ in 0..10 {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn brute_force_small_n() {
        let (eps, v, tau) = (0.3, 0.9, 1.2);
        for n in 1..=3 {
            let (p, ops) = setup(n, eps, v, 1.7, tau);
            let h0 = &ops.lz * c(eps) + &ops.lx * c(v);
            let omega = p.omega();
            let nhat = &h0 / c(omega);
            let theta = omega * tau;
            let id = CMatrix::identity(n + 1, n + 1);
            let u = match n {
                // spin 1/2: cos(theta/2) - 2i sin(theta/2) n.S
                1 => &id * c((theta / 2.0).cos()) - &nhat * (I * 2.0 * (theta / 2.0).sin()),
                // spin 1: 1 - i sin(theta) n.S + (cos(theta) - 1)(n.S)^2
                2 => &id - &nhat * (I * theta.sin()) + &nhat * &nhat * c(theta.cos() - 1.0),
                _ => expm_series(&h0, tau),
            };
            let kick = CMatrix::from_diagonal(&CVector::from_iterator(
                n + 1,
                ops.m_values()
                    .iter()
                    .map(|m| Complex64::from_polar(1.0, p.c * tau * m * m)),
            ));
            let want = kick * u;
            let f = FloquetOperator::new(&p, &ops).unwrap();
            assert!(max_abs(&(&f.matrix - &want)) < 1e-12, "N={n}");
            let d = diagonalize_floquet(&f, &ops).unwrap();
            let ev = want.clone().schur().eigenvalues().unwrap();
            let mut e1: Vec<f64> = ev.iter().map(|l| quasienergy(*l, tau)).collect();
            let mut e2 = d.quasienergies.clone();
            e1.sort_by(f64::total_cmp);
            e2.sort_by(f64::total_cmp);
            for (a, b) in e1.iter().zip(&e2) {
                assert!(circular_distance(*a, *b, tau) < 1e-10);
            }
        }
    }

    #[test]
    fn propagate_zero_kicks() {
        let (p, ops) = setup(6, 0.0, 1.0, 1.0, 1.0);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let st = StateVector::fock(6, 6).unwrap();
        let out = propagate(&st, &f, &ops, 0, &Observers::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].l, [0.0, 0.0, 1.0]);
        assert!(out[0].p_plus.is_nan());
    }

    #[test]
    fn propagation_conserves_norm() {
        let (p, ops) = setup(30, 0.0, 1.0, 2.5, 1.0);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let st = crate::spin::coherent_state(30, 2.0, 0.4).unwrap();
        let mut worst: f64 = 0.0;
        propagate_with(&st, &f, &ops, 10_000, &Observers::default(), |s| {
            worst = worst.max((s.norm - 1.0).abs());
            true
        })
        .unwrap();
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn linear_dynamics_matches_mean_field() {
        use crate::meanfield::{iterate_map, BlochVector};
        let n = 16;
        let (p, ops) = setup(n, 0.4, 0.9, 0.0, 0.8);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let (th, ph) = (1.0, 2.2);
        let st = crate::spin::coherent_state(n, th, ph).unwrap();
        let q = propagate(&st, &f, &ops, 200, &Observers::default()).unwrap();
        let mf = iterate_map(&BlochVector::from_angles(th, ph, p.s()), &p, 200);
        for (a, b) in q.iter().zip(&mf) {
            let u = b.as_vector() / p.s();
            for k in 0..3 {
                assert!((a.l[k] - u[k]).abs() < 1e-8);
            }
        }
    }
}
