//! C ABI for `kicktop`.
//!
//! Every fallible function returns a [`KtStatus`]; on failure a message is
//! available from [`kt_last_error`] on the same thread. Objects with state are
//! opaque handles created by `*_new` and released by the matching `*_free`.
//! Parameters use the scaled kick strength `c_scaled = c (N + 1)`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use kicktop::floquet::{
    diagonalize_floquet, propagate_with, FloquetDecomposition, FloquetOperator, Observers, Parity,
};
use kicktop::meanfield::{iterate_map, BlochVector};
use kicktop::spin::{SpinOperators, StateVector};
use kicktop::tunneling::{analyze_point, island_states, sweep_over_c, PointAnalysis, Validity};
use kicktop::{Error, SystemParams};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KtStatus {
    Ok = 0,
    InvalidParameter = 1,
    /// The mean-field island pair does not exist at these parameters.
    NoIslands = 2,
    Numerical = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary; this is a bug.
    Panic = 6,
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KtValidity {
    Valid = 0,
    /// Doublet found but the two-state picture is poor.
    Gap = 1,
    NoIsland = 2,
}

/// Values accepted by [`kt_propagator_new`].
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KtInitialState {
    /// Coherent state on the southern island.
    Minus = 0,
    /// Coherent state on the northern island.
    Plus = 1,
    /// All particles in well 1.
    North = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtParams {
    pub n: usize,
    pub c_scaled: f64,
    pub v: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl KtParams {
    fn system(&self) -> Result<SystemParams, Error> {
        SystemParams::new(
            self.epsilon,
            self.v,
            self.c_scaled / (self.n as f64 + 1.0),
            self.tau,
            self.n,
        )
    }
}

/// Doublet summary; NaN where undefined (no islands), `t_tunnel` infinite at
/// an exact crossing.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtTunneling {
    pub validity: KtValidity,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub delta_eps: f64,
    pub t_tunnel: f64,
    pub overlap_plus: f64,
    pub overlap_minus: f64,
    pub third_overlap: f64,
    pub t_c: f64,
}

/// One stroboscopic sample; `l*` are divided by `l = N/2`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtSample {
    pub kick: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_orth: f64,
    pub norm: f64,
}

pub struct KtSpectrum {
    decomp: FloquetDecomposition,
}

pub struct KtPropagator {
    ops: SpinOperators,
    fop: FloquetOperator,
    observers: Observers,
    psi: StateVector,
    kick: usize,
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Buffer { needed: usize, given: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KtStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            match e {
                Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } | Error::Degenerate(_) => {
                    KtStatus::InvalidParameter
                }
                Error::NoIslands(_) => KtStatus::NoIslands,
                Error::Numerical(_) => KtStatus::Numerical,
            }
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("`{what}` is null"));
            KtStatus::NullPointer
        }
        Ok(Err(Fail::Buffer { needed, given })) => {
            set_error(format!("buffer holds {given} entries, {needed} needed"));
            KtStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            KtStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    needed: usize,
    what: &'static str,
) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    if len < needed {
        return Err(Fail::Buffer { needed, given: len });
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

/// Message for the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn kt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

#[no_mangle]
pub extern "C" fn kt_version() -> *const c_char {
    const VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Symmetric trap with `v = tau = 1`.
#[no_mangle]
pub extern "C" fn kt_params_default(n: usize, c_scaled: f64) -> KtParams {
    KtParams {
        n,
        c_scaled,
        v: 1.0,
        tau: 1.0,
        epsilon: 0.0,
    }
}

/// Diagonalizes the Floquet operator at `params`.
///
/// # Safety
/// `params` must point to a valid `KtParams`, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn kt_spectrum_new(params: *const KtParams, out: *mut *mut KtSpectrum) -> KtStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let p = read(params, "params")?.system()?;
        let ops = SpinOperators::new(p.n)?;
        let decomp = diagonalize_floquet(&FloquetOperator::new(&p, &ops)?, &ops)?;
        *out = Box::into_raw(Box::new(KtSpectrum { decomp }));
        Ok(())
    })
}

/// Number of levels, `N + 1`; 0 for a null handle.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kt_spectrum_len(spectrum: *const KtSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.decomp.len())
}

/// Copies the quasi-energies, sorted by parity sector and then ascending.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kt_spectrum_quasienergies(
    spectrum: *const KtSpectrum,
    buf: *mut f64,
    len: usize,
) -> KtStatus {
    guard(|| {
        let s = read(spectrum, "spectrum")?;
        out_slice(buf, len, s.decomp.len(), "buf")?.copy_from_slice(&s.decomp.quasienergies);
        Ok(())
    })
}

/// Copies the parities: +1 even, -1 odd, 0 when the trap is asymmetric.
///
/// # Safety
/// `buf` must hold `len` ints.
#[no_mangle]
pub unsafe extern "C" fn kt_spectrum_parities(
    spectrum: *const KtSpectrum,
    buf: *mut i32,
    len: usize,
) -> KtStatus {
    guard(|| {
        let s = read(spectrum, "spectrum")?;
        let out = out_slice(buf, len, s.decomp.len(), "buf")?;
        for (o, p) in out.iter_mut().zip(&s.decomp.parities) {
            *o = match p {
                Parity::Even => 1,
                Parity::Odd => -1,
                Parity::None => 0,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be null or a handle from [`kt_spectrum_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kt_spectrum_free(spectrum: *mut KtSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

fn summarize(a: &PointAnalysis) -> KtTunneling {
    let nan = f64::NAN;
    let validity = match a.validity {
        Validity::Valid => KtValidity::Valid,
        Validity::Gap => KtValidity::Gap,
        Validity::NoIsland => KtValidity::NoIsland,
    };
    match &a.result {
        Some(r) => {
            let (third_overlap, t_c) = r.third_level.map_or((nan, nan), |t| (t.overlap, t.t_c));
            KtTunneling {
                validity,
                eps_plus: r.eps_plus,
                eps_minus: r.eps_minus,
                delta_eps: r.delta_eps,
                t_tunnel: r.t_tunnel,
                overlap_plus: r.overlaps.0,
                overlap_minus: r.overlaps.1,
                third_overlap,
                t_c,
            }
        }
        None => KtTunneling {
            validity,
            eps_plus: nan,
            eps_minus: nan,
            delta_eps: nan,
            t_tunnel: nan,
            overlap_plus: nan,
            overlap_minus: nan,
            third_overlap: nan,
            t_c: nan,
        },
    }
}

/// Tunneling doublet at one point. A missing island pair is not an error:
/// the result then has `validity == NoIsland`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn kt_tunneling(params: *const KtParams, out: *mut KtTunneling) -> KtStatus {
    guard(|| {
        let p = read(params, "params")?.system()?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        *out = summarize(&analyze_point(&p, &SpinOperators::new(p.n)?)?);
        Ok(())
    })
}

/// Tunneling over `len` values of `c_scaled` (strictly increasing), with the
/// other parameters from `base`. Points are evaluated in parallel; results are
/// independent of the thread count.
///
/// # Safety
/// `c_scaled` must hold `len` doubles and `out` room for `len` results.
#[no_mangle]
pub unsafe extern "C" fn kt_sweep_c(
    base: *const KtParams,
    c_scaled: *const f64,
    len: usize,
    out: *mut KtTunneling,
) -> KtStatus {
    guard(|| {
        let b = read(base, "base")?;
        let template = b.system()?;
        if c_scaled.is_null() {
            return Err(Fail::Null("c_scaled"));
        }
        let cs = slice::from_raw_parts(c_scaled, len);
        let out = out_slice(out, len, len, "out")?;
        let curve = sweep_over_c(b.n, cs, &template)?;
        for (o, pt) in out.iter_mut().zip(&curve.points) {
            *o = summarize(&pt.analysis);
        }
        Ok(())
    })
}

/// Mean-field orbit from `(theta, phi)` on the sphere of radius `(N + 1)/2`:
/// `n_kicks + 1` points written to `xyz` as consecutive `(sx, sy, sz)`.
///
/// # Safety
/// `xyz` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kt_mean_field_orbit(
    params: *const KtParams,
    theta: f64,
    phi: f64,
    n_kicks: usize,
    xyz: *mut f64,
    len: usize,
) -> KtStatus {
    guard(|| {
        let p = read(params, "params")?.system()?;
        let needed = 3 * (n_kicks + 1);
        let out = out_slice(xyz, len, needed, "xyz")?;
        let orbit = iterate_map(&BlochVector::from_angles(theta, phi, p.s()), &p, n_kicks);
        for (chunk, s) in out.chunks_exact_mut(3).zip(&orbit) {
            chunk.copy_from_slice(&[s.sx, s.sy, s.sz]);
        }
        Ok(())
    })
}

/// Quantum propagator starting from one of the [`KtInitialState`] values.
/// Island populations are reported as NaN when the islands do not exist.
///
/// # Safety
/// `params` must be valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kt_propagator_new(
    params: *const KtParams,
    initial_state: i32,
    out: *mut *mut KtPropagator,
) -> KtStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let p = read(params, "params")?.system()?;
        let ops = SpinOperators::new(p.n)?;
        let islands = match island_states(&p) {
            Ok(i) => Some(i),
            Err(Error::NoIslands(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let no_islands = || Error::NoIslands(format!("no island pair at c_scaled = {}", p.c_scaled()));
        let psi = match initial_state {
            x if x == KtInitialState::Minus as i32 => islands.as_ref().ok_or_else(no_islands)?.minus.clone(),
            x if x == KtInitialState::Plus as i32 => islands.as_ref().ok_or_else(no_islands)?.plus.clone(),
            x if x == KtInitialState::North as i32 => StateVector::fock(p.n, p.n)?,
            other => {
                return Err(Error::InvalidParameter {
                    field: "initial_state",
                    reason: format!("unknown value {other}"),
                }
                .into())
            }
        };
        let fop = FloquetOperator::new(&p, &ops)?;
        let observers = Observers {
            islands: islands.map(|i| (i.plus, i.minus)),
        };
        *out = Box::into_raw(Box::new(KtPropagator {
            ops,
            fop,
            observers,
            psi,
            kick: 0,
        }));
        Ok(())
    })
}

/// Records the current state and the next `n_kicks` (so `n_kicks + 1`
/// samples) and leaves the propagator `n_kicks` further on. Kick numbers
/// continue across calls; the first sample repeats the last of the previous call.
///
/// # Safety
/// `prop` must be a live handle and `samples` hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn kt_propagator_run(
    prop: *mut KtPropagator,
    n_kicks: usize,
    samples: *mut KtSample,
    len: usize,
) -> KtStatus {
    guard(|| {
        let h = prop.as_mut().ok_or(Fail::Null("prop"))?;
        let out = out_slice(samples, len, n_kicks + 1, "samples")?;
        let offset = h.kick;
        let mut slots = out.iter_mut();
        let psi = propagate_with(&h.psi, &h.fop, &h.ops, n_kicks, &h.observers, |s| {
            if let Some(slot) = slots.next() {
                *slot = KtSample {
                    kick: offset + s.kick,
                    lx: s.l[0],
                    ly: s.l[1],
                    lz: s.l[2],
                    p_plus: s.p_plus,
                    p_minus: s.p_minus,
                    p_orth: s.p_orth,
                    norm: s.norm,
                };
            }
            true
        })?;
        h.psi = psi;
        h.kick += n_kicks;
        Ok(())
    })
}

/// # Safety
/// `prop` must be null or a handle from [`kt_propagator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kt_propagator_free(prop: *mut KtPropagator) {
    if !prop.is_null() {
        drop(Box::from_raw(prop));
    }
}
