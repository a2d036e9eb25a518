use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use kicktop::spin::SpinOperators;
use kicktop::tunneling::analyze_point;
use kicktop::SystemParams;
use kicktop_ffi::*;

fn last_error() -> String {
    let p = kt_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tunneling(p: &KtParams) -> KtTunneling {
    let mut out = KtTunneling {
        validity: KtValidity::Gap,
        eps_plus: 0.0,
        eps_minus: 0.0,
        delta_eps: 0.0,
        t_tunnel: 0.0,
        overlap_plus: 0.0,
        overlap_minus: 0.0,
        third_overlap: 0.0,
        t_c: 0.0,
    };
    assert_eq!(unsafe { kt_tunneling(p, &mut out) }, KtStatus::Ok);
    out
}

#[test]
fn spectrum_handle() {
    let p = kt_params_default(12, 1.5);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { kt_spectrum_new(&p, &mut h) }, KtStatus::Ok);
    let n = unsafe { kt_spectrum_len(h) };
    assert_eq!(n, 13);
    let mut e = vec![0.0; n];
    let mut par = vec![0; n];
    unsafe {
        assert_eq!(kt_spectrum_quasienergies(h, e.as_mut_ptr(), n), KtStatus::Ok);
        assert_eq!(kt_spectrum_parities(h, par.as_mut_ptr(), n), KtStatus::Ok);
        assert_eq!(
            kt_spectrum_quasienergies(h, e.as_mut_ptr(), n - 1),
            KtStatus::BufferTooSmall
        );
        kt_spectrum_free(h);
    }
    assert!(e
        .iter()
        .all(|x| (-std::f64::consts::PI..std::f64::consts::PI).contains(x)));
    // N = 12: seven even and six odd levels
    assert_eq!(par.iter().filter(|&&x| x == 1).count(), 7);
    assert_eq!(par.iter().filter(|&&x| x == -1).count(), 6);
}

#[test]
fn tunneling_matches_the_library() {
    let p = kt_params_default(20, 2.0);
    let out = tunneling(&p);
    let sys = SystemParams::with_c_scaled(20, 2.0, 1.0, 1.0).unwrap();
    let direct = analyze_point(&sys, &SpinOperators::new(20).unwrap()).unwrap();
    let r = direct.result.unwrap();
    assert_eq!(out.validity, KtValidity::Valid);
    assert_eq!(out.t_tunnel, r.t_tunnel);
    assert_eq!((out.overlap_plus, out.overlap_minus), r.overlaps);
    assert!((out.t_tunnel - 1978.4).abs() < 1.0, "{}", out.t_tunnel);
}

#[test]
fn missing_islands_is_a_result_not_an_error() {
    let out = tunneling(&kt_params_default(10, 0.0));
    assert_eq!(out.validity, KtValidity::NoIsland);
    assert!(out.t_tunnel.is_nan());
}

#[test]
fn error_codes_and_messages() {
    let mut p = kt_params_default(10, 1.0);
    p.tau = 0.0;
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { kt_spectrum_new(&p, &mut h) }, KtStatus::InvalidParameter);
    assert!(h.is_null());
    assert!(last_error().contains("tau"));

    assert_eq!(
        unsafe { kt_spectrum_new(ptr::null(), &mut h) },
        KtStatus::NullPointer
    );
    assert!(last_error().contains("params"));

    let mut prop = ptr::null_mut();
    let free = kt_params_default(10, 0.0);
    assert_eq!(
        unsafe { kt_propagator_new(&free, KtInitialState::Minus as i32, &mut prop) },
        KtStatus::NoIslands
    );
    assert_eq!(
        unsafe { kt_propagator_new(&free, 17, &mut prop) },
        KtStatus::InvalidParameter
    );
    assert!(last_error().contains("initial_state"));

    // success clears the message
    assert_eq!(
        unsafe { kt_propagator_new(&free, KtInitialState::North as i32, &mut prop) },
        KtStatus::Ok
    );
    assert!(kt_last_error().is_null());
    unsafe { kt_propagator_free(prop) };
    unsafe { kt_spectrum_free(ptr::null_mut()) };
}

fn blank() -> KtSample {
    KtSample {
        kick: 0,
        lx: 0.0,
        ly: 0.0,
        lz: 0.0,
        p_plus: 0.0,
        p_minus: 0.0,
        p_orth: 0.0,
        norm: 0.0,
    }
}

#[test]
fn propagation_resumes_where_it_stopped() {
    let p = kt_params_default(16, 2.0);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            kt_propagator_new(&p, KtInitialState::Minus as i32, &mut a),
            KtStatus::Ok
        );
        assert_eq!(
            kt_propagator_new(&p, KtInitialState::Minus as i32, &mut b),
            KtStatus::Ok
        );
    }
    let mut whole = vec![blank(); 41];
    let mut first = vec![blank(); 21];
    let mut second = vec![blank(); 21];
    unsafe {
        assert_eq!(
            kt_propagator_run(a, 40, whole.as_mut_ptr(), whole.len()),
            KtStatus::Ok
        );
        assert_eq!(
            kt_propagator_run(b, 20, first.as_mut_ptr(), first.len()),
            KtStatus::Ok
        );
        assert_eq!(
            kt_propagator_run(b, 20, second.as_mut_ptr(), second.len()),
            KtStatus::Ok
        );
        kt_propagator_free(a);
        kt_propagator_free(b);
    }
    assert_eq!(whole[0].kick, 0);
    assert!(whole[0].p_minus > 0.99);
    assert_eq!(&whole[..21], &first[..]);
    assert_eq!(second[0].kick, 20);
    for (x, y) in whole[20..].iter().zip(&second) {
        assert_eq!(x.kick, y.kick);
        assert!((x.lz - y.lz).abs() < 1e-12 && (x.p_plus - y.p_plus).abs() < 1e-12);
    }
}

#[test]
fn sweep_agrees_with_single_points() {
    let base = kt_params_default(14, 0.0);
    let cs = [1.5, 1.8, 2.1, 2.4];
    let mut out = vec![tunneling(&kt_params_default(14, 1.0)); cs.len()];
    assert_eq!(
        unsafe { kt_sweep_c(&base, cs.as_ptr(), cs.len(), out.as_mut_ptr()) },
        KtStatus::Ok
    );
    for (c, r) in cs.iter().zip(&out) {
        let single = tunneling(&kt_params_default(14, *c));
        assert_eq!(r.t_tunnel.to_bits(), single.t_tunnel.to_bits());
    }
    let unsorted = [2.0, 1.0];
    assert_eq!(
        unsafe { kt_sweep_c(&base, unsorted.as_ptr(), 2, out.as_mut_ptr()) },
        KtStatus::InvalidParameter
    );
}

#[test]
fn orbit_stays_on_the_sphere() {
    let p = kt_params_default(30, 2.5);
    let mut xyz = vec![0.0; 3 * 101];
    assert_eq!(
        unsafe { kt_mean_field_orbit(&p, 1.0, 0.3, 100, xyz.as_mut_ptr(), xyz.len()) },
        KtStatus::Ok
    );
    for s in xyz.chunks(3) {
        let r = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        assert!((r - 15.5).abs() < 1e-10);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(kt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "kicktop.h"

int main(void) {
    KtParams p = kt_params_default(20, 2.0);
    KtTunneling t;
    if (kt_tunneling(&p, &t) != KT_STATUS_OK) return 10;
    if (t.validity != KT_VALIDITY_VALID) return 11;
    if (fabs(t.t_tunnel - 1978.4) > 1.0) return 12;

    KtSpectrum *s = NULL;
    p.tau = -1.0;
    if (kt_spectrum_new(&p, &s) != KT_STATUS_INVALID_PARAMETER) return 13;
    if (kt_last_error() == NULL || s != NULL) return 14;
    p.tau = 1.0;
    if (kt_spectrum_new(&p, &s) != KT_STATUS_OK) return 15;
    size_t n = kt_spectrum_len(s);
    double e[21];
    if (n != 21 || kt_spectrum_quasienergies(s, e, n) != KT_STATUS_OK) return 16;
    kt_spectrum_free(s);

    KtPropagator *prop = NULL;
    KtSample samples[11];
    if (kt_propagator_new(&p, KT_INITIAL_STATE_MINUS, &prop) != KT_STATUS_OK) return 17;
    if (kt_propagator_run(prop, 10, samples, 11) != KT_STATUS_OK) return 18;
    kt_propagator_free(prop);
    if (samples[10].kick != 10 || fabs(samples[10].norm - 1.0) > 1e-12) return 19;
    printf("%s ok\n", kt_version());
    return 0;
}
"#;

fn c_compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .map(String::from)
}

/// Compiles a C client against the generated header, and links and runs it
/// when the static library of this build is present.
#[test]
fn c_client_uses_the_header() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("kicktop.h").exists());
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_client");
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();

    let status = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile");

    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libkicktop_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; header checked only", lib.display());
        return;
    }
    let exe = dir.join("client");
    let status = Command::new(&cc)
        .args(["-std=c11", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("ok\n"));
}
