//! Stroboscopic mean-field dynamics on the Bloch sphere.
//!
//! One period is a free rotation about `(v, 0, eps)/omega` followed by the
//! kick, a torsion about the z axis by the angle `-2 c tau s_z`, evaluated at
//! the z component after the rotation.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Mean-field point of the Bloch sphere, `|s| = (N+1)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochVector {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        BlochVector { sx, sy, sz }
    }

    /// Point at polar angle `theta` and azimuth `phi` on the sphere of radius `s`.
    pub fn from_angles(theta: f64, phi: f64, s: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        BlochVector::new(s * st * cp, s * st * sp, s * ct)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    /// `(theta, phi)` with `theta` in `[0, pi]`, `phi` in `(-pi, pi]`.
    pub fn angles(&self) -> (f64, f64) {
        let r = self.norm();
        let theta = (self.sz / r).clamp(-1.0, 1.0).acos();
        (theta, self.sy.atan2(self.sx))
    }

    /// Population imbalance `|psi_2|^2 - |psi_1|^2 = -2 s_z`.
    pub fn imbalance(&self) -> f64 {
        -2.0 * self.sz
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.sx, self.sy, self.sz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        BlochVector::new(v.x, v.y, v.z)
    }

    /// Image under the pi-rotation about x: `(x, y, z) -> (x, -y, -z)`.
    pub fn parity_image(&self) -> Self {
        BlochVector::new(self.sx, -self.sy, -self.sz)
    }
}

/// Two-mode mean-field amplitudes, `|psi1|^2 + |psi2|^2 = N + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldWave {
    pub psi1: Complex64,
    pub psi2: Complex64,
}

impl MeanFieldWave {
    pub fn new(psi1: Complex64, psi2: Complex64) -> Self {
        MeanFieldWave { psi1, psi2 }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi1.norm_sqr() + self.psi2.norm_sqr()
    }

    /// A wave function with the given Bloch vector (`psi1` chosen real, non-negative).
    pub fn from_bloch(s: &BlochVector) -> Self {
        let radius = s.norm();
        let p1 = (radius + s.sz).max(0.0).sqrt();
        if p1 < 1e-300 {
            return MeanFieldWave::new(
                Complex64::new(0.0, 0.0),
                Complex64::new((2.0 * radius).sqrt(), 0.0),
            );
        }
        MeanFieldWave::new(Complex64::new(p1, 0.0), Complex64::new(s.sx, s.sy) / p1)
    }
}

/// Bloch vector of a mean-field wave function.
pub fn bloch_from_wave(psi: &MeanFieldWave) -> BlochVector {
    let cross = psi.psi1.conj() * psi.psi2;
    BlochVector::new(
        cross.re,
        cross.im,
        0.5 * (psi.psi1.norm_sqr() - psi.psi2.norm_sqr()),
    )
}

/// Free rotation over one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeRotation {
    pub matrix: Matrix3<f64>,
    /// Set when `omega = 0`; the matrix is then the identity.
    pub degenerate: bool,
}

pub fn rotation_matrix(params: &SystemParams) -> FreeRotation {
    let (eps, v, tau) = (params.epsilon, params.v, params.tau);
    let w = params.omega();
    if w == 0.0 {
        log::warn!("omega = 0: no dynamics between kicks, using the identity");
        return FreeRotation {
            matrix: Matrix3::identity(),
            degenerate: true,
        };
    }
    let (sn, cs) = (w * tau).sin_cos();
    let (e, u) = (eps / w, v / w);
    #[rustfmt::skip]
    let matrix = Matrix3::new(
        u * u + e * e * cs, -e * sn,  e * u * (1.0 - cs),
        e * sn,             cs,       -u * sn,
        e * u * (1.0 - cs), u * sn,   e * e + u * u * cs,
    );
    FreeRotation {
        matrix,
        degenerate: false,
    }
}

/// Kick torsion at the given `s_z`.
pub fn torsion_matrix(c: f64, tau: f64, sz: f64) -> Matrix3<f64> {
    let (sn, cs) = (2.0 * c * tau * sz).sin_cos();
    #[rustfmt::skip]
    let m = Matrix3::new(
        cs,  sn,  0.0,
        -sn, cs,  0.0,
        0.0, 0.0, 1.0,
    );
    m
}

/// Precomputed one-period map `s -> K(R s) R s`.
#[derive(Debug, Clone, Copy)]
pub struct KickMap {
    rotation: Matrix3<f64>,
    /// `2 c tau`
    twist: f64,
    params: SystemParams,
}

impl KickMap {
    pub fn new(params: &SystemParams) -> Self {
        KickMap {
            rotation: rotation_matrix(params).matrix,
            twist: 2.0 * params.c * params.tau,
            params: *params,
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn apply_vec(&self, s: &Vector3<f64>) -> Vector3<f64> {
        let w = self.rotation * s;
        let (sn, cs) = (self.twist * w.z).sin_cos();
        Vector3::new(cs * w.x + sn * w.y, -sn * w.x + cs * w.y, w.z)
    }

    pub fn apply(&self, s: &BlochVector) -> BlochVector {
        BlochVector::from_vector(&self.apply_vec(&s.as_vector()))
    }

    /// Derivative of the map in Cartesian coordinates.
    pub fn jacobian(&self, s: &Vector3<f64>) -> Matrix3<f64> {
        let w = self.rotation * s;
        let (sn, cs) = (self.twist * w.z).sin_cos();
        // dK/da applied to w
        let dk_w = Vector3::new(-sn * w.x + cs * w.y, -cs * w.x - sn * w.y, 0.0);
        let mut dw = Matrix3::new(cs, sn, 0.0, -sn, cs, 0.0, 0.0, 0.0, 1.0);
        for i in 0..3 {
            dw[(i, 2)] += dk_w[i] * self.twist;
        }
        dw * self.rotation
    }
}

pub fn kick_map(s: &BlochVector, params: &SystemParams) -> BlochVector {
    KickMap::new(params).apply(s)
}

/// Trajectory `[s0, F s0, ..., F^n s0]`.
pub fn iterate_map(s0: &BlochVector, params: &SystemParams, n_kicks: usize) -> Vec<BlochVector> {
    let map = KickMap::new(params);
    let mut out = Vec::with_capacity(n_kicks + 1);
    let mut s = s0.as_vector();
    out.push(*s0);
    for _ in 0..n_kicks {
        s = map.apply_vec(&s);
        out.push(BlochVector::from_vector(&s));
    }
    out
}

/// One sample of a stroboscopic orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitPoint {
    pub seed_id: usize,
    pub kick: usize,
    pub theta: f64,
    pub phi: f64,
    pub s: BlochVector,
}

/// Union of stroboscopic orbits started at `(theta, phi)` seeds, ordered by
/// seed index and then kick.
pub fn phase_portrait(
    params: &SystemParams,
    seeds: &[(f64, f64)],
    n_kicks: usize,
) -> Result<Vec<PortraitPoint>> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let radius = params.s();
    let orbits: Vec<Vec<PortraitPoint>> = seeds
        .par_iter()
        .enumerate()
        .map(|(id, &(th, ph))| {
            iterate_map(&BlochVector::from_angles(th, ph, radius), params, n_kicks)
                .into_iter()
                .enumerate()
                .map(|(k, s)| {
                    let (theta, phi) = s.angles();
                    PortraitPoint {
                        seed_id: id,
                        kick: k,
                        theta,
                        phi,
                        s,
                    }
                })
                .collect()
        })
        .collect();
    Ok(orbits.into_iter().flatten().collect())
}

/// Evenly spread portrait seeds: `n_theta` latitudes times `n_phi` longitudes.
pub fn seed_grid(n_theta: usize, n_phi: usize) -> Vec<(f64, f64)> {
    let mut seeds = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let th = PI * (i as f64 + 0.5) / n_theta as f64;
        for j in 0..n_phi {
            seeds.push((th, -PI + 2.0 * PI * (j as f64 + 0.5) / n_phi as f64));
        }
    }
    seeds
}

/// Period-one fixed point of the kick map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub theta: f64,
    pub phi: f64,
    pub stable: bool,
    /// Eigenvalues of the tangent map, as `(re, im)` pairs.
    pub multipliers: [(f64, f64); 2],
    /// `|F(s) - s|`
    pub residual: f64,
}

impl FixedPoint {
    pub fn bloch(&self, s: f64) -> BlochVector {
        BlochVector::from_angles(self.theta, self.phi, s)
    }

    pub fn max_multiplier(&self) -> f64 {
        self.multipliers
            .iter()
            .map(|&(re, im)| re.hypot(im))
            .fold(0.0, f64::max)
    }

    fn unit(&self) -> Vector3<f64> {
        self.bloch(1.0).as_vector()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    /// Starts whose polishing stalled above the residual tolerance.
    pub unconverged_starts: usize,
}

/// Multi-start settings for [`find_fixed_points_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSearch {
    pub n_theta: usize,
    pub n_phi: usize,
    pub max_iter: usize,
    /// Residual tolerance relative to the sphere radius.
    pub rel_tol: f64,
    /// Angular merge radius for duplicates.
    pub merge_radius: f64,
}

impl Default for FixedPointSearch {
    fn default() -> Self {
        FixedPointSearch {
            n_theta: 20,
            n_phi: 40,
            max_iter: 60,
            rel_tol: 1e-10,
            merge_radius: 1e-6,
        }
    }
}

/// Orthonormal tangent basis at a unit vector.
fn tangent_basis(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if u.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (helper - u * u.dot(&helper)).normalize();
    let e2 = u.cross(&e1);
    (e1, e2)
}

/// Map restricted to the unit sphere, tangent-plane Newton with retraction.
struct UnitSphereMap {
    map: KickMap,
    radius: f64,
}

impl UnitSphereMap {
    fn f(&self, u: &Vector3<f64>) -> Vector3<f64> {
        self.map.apply_vec(&(u * self.radius)) / self.radius
    }

    fn df(&self, u: &Vector3<f64>) -> Matrix3<f64> {
        // the map is homogeneous up to the twist, so rescale the derivative
        self.map.jacobian(&(u * self.radius))
    }

    fn residual(&self, u: &Vector3<f64>) -> Vector3<f64> {
        self.f(u) - u
    }

    fn polish(&self, mut u: Vector3<f64>, max_iter: usize, tol: f64) -> (Vector3<f64>, f64) {
        let mut r = self.residual(&u);
        let mut rn = r.norm();
        for _ in 0..max_iter {
            if rn <= tol * 1e-3 {
                break;
            }
            let (e1, e2) = tangent_basis(&u);
            let a = (self.df(&u) - Matrix3::identity()) * nalgebra::Matrix3x2::from_columns(&[e1, e2]);
            let ata: Matrix2<f64> = a.transpose() * a;
            let atr: Vector2<f64> = a.transpose() * r;
            let Some(step) = ata.lu().solve(&(-atr)) else {
                break;
            };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial = (u + (e1 * step.x + e2 * step.y) * lambda).normalize();
                let tr = self.residual(&trial);
                let tn = tr.norm();
                if tn < rn {
                    u = trial;
                    r = tr;
                    rn = tn;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (u, rn)
    }

    fn multipliers(&self, u: &Vector3<f64>) -> [Complex64; 2] {
        let (e1, e2) = tangent_basis(u);
        let b = nalgebra::Matrix3x2::from_columns(&[e1, e2]);
        let t: Matrix2<f64> = b.transpose() * self.df(u) * b;
        eig2(&t)
    }
}

fn eig2(t: &Matrix2<f64>) -> [Complex64; 2] {
    let half_tr = 0.5 * (t[(0, 0)] + t[(1, 1)]);
    let det = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
    let disc = Complex64::new(half_tr * half_tr - det, 0.0).sqrt();
    [half_tr + disc, half_tr - disc]
}

fn classify(map: &UnitSphereMap, u: &Vector3<f64>, residual: f64) -> FixedPoint {
    let mults = map.multipliers(u);
    let stable = mults.iter().all(|m| m.norm() <= 1.0 + 1e-8);
    let s = BlochVector::from_vector(u);
    let (theta, phi) = s.angles();
    FixedPoint {
        theta,
        phi,
        stable,
        multipliers: [(mults[0].re, mults[0].im), (mults[1].re, mults[1].im)],
        residual: residual * map.radius,
    }
}

/// Tangent-map multipliers of the kick map at an arbitrary sphere point.
pub fn tangent_multipliers(params: &SystemParams, s: &BlochVector) -> [Complex64; 2] {
    let m = UnitSphereMap {
        map: KickMap::new(params),
        radius: params.s(),
    };
    m.multipliers(&(s.as_vector() / s.norm()))
}

pub fn find_fixed_points(params: &SystemParams) -> FixedPointReport {
    find_fixed_points_with(params, &FixedPointSearch::default())
}

/// All period-one fixed points reachable from a `(theta, phi)` start grid.
pub fn find_fixed_points_with(params: &SystemParams, search: &FixedPointSearch) -> FixedPointReport {
    let map = UnitSphereMap {
        map: KickMap::new(params),
        radius: params.s(),
    };
    let mut found: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut unconverged = 0;
    for (th, ph) in seed_grid(search.n_theta, search.n_phi) {
        let u0 = BlochVector::from_angles(th, ph, 1.0).as_vector();
        let (u, res) = map.polish(u0, search.max_iter, search.rel_tol);
        if res > search.rel_tol {
            unconverged += 1;
            continue;
        }
        let duplicate = found.iter().any(|(v, _)| {
            v.dot(&u).clamp(-1.0, 1.0).acos() < search.merge_radius.max(1e-12)
                || (v - u).norm() < search.merge_radius
        });
        if !duplicate {
            found.push((u, res));
        }
    }
    let mut points: Vec<FixedPoint> = found.iter().map(|(u, r)| classify(&map, u, *r)).collect();
    points.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.phi.total_cmp(&b.phi)));
    FixedPointReport {
        points,
        unconverged_starts: unconverged,
    }
}

/// The symmetric pair of stable off-axis fixed points (self-trapping islands),
/// returned as `(northern, southern)`.
///
/// Points within `axis_tol` (radians) of `(+-s, 0, 0)` are excluded. When more
/// than one stable pair exists the one farthest from the equator wins.
pub fn island_pair(report: &FixedPointReport, axis_tol: f64) -> Option<(FixedPoint, FixedPoint)> {
    let off_axis: Vec<&FixedPoint> = report
        .points
        .iter()
        .filter(|p| p.stable)
        .filter(|p| {
            let u = p.unit();
            u.x.abs() < (1.0 - 0.5 * axis_tol * axis_tol).min(1.0 - 1e-12)
        })
        .collect();
    let mut best: Option<(FixedPoint, FixedPoint)> = None;
    for a in off_axis.iter().filter(|p| p.theta < PI / 2.0) {
        let image = {
            let u = a.unit();
            Vector3::new(u.x, -u.y, -u.z)
        };
        let partner = off_axis
            .iter()
            .filter(|b| b.theta > PI / 2.0)
            .min_by(|x, y| (x.unit() - image).norm().total_cmp(&(y.unit() - image).norm()));
        if let Some(b) = partner {
            if (b.unit() - image).norm() < 1e-5 {
                let better = match &best {
                    None => true,
                    Some((n, _)) => a.theta < n.theta,
                };
                if better {
                    best = Some((**a, **b));
                }
            }
        }
    }
    best
}

/// Open interval of `c` for which `(-s, 0, 0)` is a stable fixed point of the
/// symmetric map.
pub fn stability_interval(params: &SystemParams) -> Result<(f64, f64)> {
    if params.epsilon != 0.0 {
        return Err(Error::invalid(
            "epsilon",
            "(-s, 0, 0) is a fixed point only for a symmetric trap",
        ));
    }
    let (sn, cs) = (params.v * params.tau).sin_cos();
    if sn.abs() < 1e-14 {
        return Err(Error::Degenerate(format!(
            "sin(v tau) = {sn:e}: the stability bound is undefined"
        )));
    }
    let denom = params.s() * params.tau * sn;
    let a = (-1.0 - cs) / denom;
    let b = (1.0 - cs) / denom;
    Ok(if sn > 0.0 { (a, b) } else { (b, a) })
}

/// Right-hand side of the discrete GPE, `i d psi/dt = H(psi) psi`, with an
/// optional continuous interaction `c_cont`.
pub fn gpe_rhs(psi: &MeanFieldWave, epsilon: f64, v: f64, c_cont: f64) -> MeanFieldWave {
    let kappa = psi.psi2.norm_sqr() - psi.psi1.norm_sqr();
    let d = 0.5 * (epsilon + c_cont * kappa);
    let mi = Complex64::new(0.0, -1.0);
    MeanFieldWave::new(
        mi * (psi.psi1 * d + psi.psi2 * (0.5 * v)),
        mi * (psi.psi1 * (0.5 * v) - psi.psi2 * d),
    )
}

/// Nonlinear Bloch equations for a continuous interaction `c`.
pub fn bloch_rhs(s: &BlochVector, epsilon: f64, v: f64, c: f64) -> BlochVector {
    BlochVector::new(
        -epsilon * s.sy + 2.0 * c * s.sy * s.sz,
        epsilon * s.sx - v * s.sz - 2.0 * c * s.sx * s.sz,
        v * s.sy,
    )
}

/// Fixed-step RK4 integration of the linear GPE between kicks.
pub fn gpe_oracle_evolve(
    psi: &MeanFieldWave,
    params: &SystemParams,
    t: f64,
    dt: f64,
) -> Result<MeanFieldWave> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "step must be > 0"));
    }
    if t < 0.0 {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    let steps = (t / dt).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(*psi);
    }
    let h = t / steps as f64;
    let (eps, v) = (params.epsilon, params.v);
    let f = |p: &MeanFieldWave| gpe_rhs(p, eps, v, 0.0);
    let axpy = |p: &MeanFieldWave, k: &MeanFieldWave, a: f64| {
        MeanFieldWave::new(p.psi1 + k.psi1 * a, p.psi2 + k.psi2 * a)
    };
    let mut y = *psi;
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, h / 2.0));
        let k3 = f(&axpy(&y, &k2, h / 2.0));
        let k4 = f(&axpy(&y, &k3, h));
        y = MeanFieldWave::new(
            y.psi1 + (k1.psi1 + k2.psi1 * 2.0 + k3.psi1 * 2.0 + k4.psi1) * (h / 6.0),
            y.psi2 + (k1.psi2 + k2.psi2 * 2.0 + k3.psi2 * 2.0 + k4.psi2) * (h / 6.0),
        );
    }
    Ok(y)
}
