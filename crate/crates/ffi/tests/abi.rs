use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mbpre_ffi::*;

const MEAN: [f64; 4] = [1.5, 0.6, 0.6, 1.5];

fn last_error() -> String {
    let p = mbpre_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn landscape() -> *mut MbpreLandscape {
    let mut l = ptr::null_mut();
    assert_eq!(mbpre_landscape_new(MEAN.as_ptr(), 2, 2, &mut l), MbpreStatus::Ok);
    l
}

#[test]
fn iid_optimum_mixes_evenly() {
    unsafe {
        let l = landscape();
        let mut env = ptr::null_mut();
        assert_eq!(mbpre_env_iid_new([0.5, 0.5].as_ptr(), 2, &mut env), MbpreStatus::Ok);

        let mut r = ptr::null_mut();
        assert_eq!(mbpre_optimize_no_sensing(l, env, ptr::null(), &mut r), MbpreStatus::Ok);
        assert!(mbpre_result_converged(r));
        assert!((mbpre_result_rate(r) - 1.05f64.ln()).abs() < 1e-12);
        assert!(mbpre_result_certificate_gap(r) <= 1e-8);
        assert_eq!(mbpre_result_strategy_len(r), 2);
        let mut p = [0.0; 2];
        assert_eq!(mbpre_result_strategy(r, p.as_mut_ptr(), 2), MbpreStatus::Ok);
        assert!((p[0] - 0.5).abs() < 1e-9);

        let mut rate = 0.0;
        assert_eq!(mbpre_gamma_no_sensing(l, env, p.as_ptr(), 2, &mut rate), MbpreStatus::Ok);
        assert!((rate - mbpre_result_rate(r)).abs() < 1e-12);

        mbpre_result_free(r);
        mbpre_env_free(env);
        mbpre_landscape_free(l);
    }
}

#[test]
fn markov_sensing_switches() {
    let q = 0.2;
    unsafe {
        let l = landscape();
        let mut env = ptr::null_mut();
        let t = [1.0 - q, q, q, 1.0 - q];
        assert_eq!(mbpre_env_markov_new(t.as_ptr(), 2, &mut env), MbpreStatus::Ok);
        let opts = mbpre_solver_options_default();
        let mut r = ptr::null_mut();
        assert_eq!(mbpre_optimize_sensing(l, env, &opts, &mut r), MbpreStatus::Ok);
        let expected = 1.5f64.ln() - q * 2.5f64.ln();
        assert!((mbpre_result_rate(r) - expected).abs() < 1e-9);

        let mut p = [0.0; 4];
        let mut small = [0.0; 2];
        assert_eq!(mbpre_result_strategy(r, small.as_mut_ptr(), 2), MbpreStatus::BufferTooSmall);
        assert_eq!(mbpre_result_strategy(r, p.as_mut_ptr(), 4), MbpreStatus::Ok);
        assert_eq!(p, [1.0, 0.0, 0.0, 1.0]);

        let mut rate = 0.0;
        assert_eq!(mbpre_gamma_sensing(l, env, p.as_ptr(), &mut rate), MbpreStatus::Ok);
        assert!((rate - expected).abs() < 1e-12);
        mbpre_result_free(r);
        mbpre_env_free(env);
        mbpre_landscape_free(l);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut l = ptr::null_mut();
        let bad = [1.0, -1.0];
        assert_eq!(mbpre_landscape_new(bad.as_ptr(), 1, 2, &mut l), MbpreStatus::InvalidParameter);
        assert!(l.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(mbpre_landscape_new(ptr::null(), 2, 2, &mut l), MbpreStatus::NullPointer);
        assert!(last_error().contains("mean"));

        let mut env = ptr::null_mut();
        assert_eq!(mbpre_env_iid_new([0.7, 0.7].as_ptr(), 2, &mut env), MbpreStatus::InvalidParameter);

        let mut rate = 0.0;
        assert_eq!(
            mbpre_gamma_no_sensing(ptr::null(), ptr::null(), ptr::null(), 0, &mut rate),
            MbpreStatus::NullPointer
        );
        assert!(mbpre_result_rate(ptr::null()).is_nan());

        // A successful call clears the message.
        let l = landscape();
        assert!(mbpre_last_error_message().is_null());
        mbpre_landscape_free(l);
        mbpre_landscape_free(ptr::null_mut());
    }
}

#[test]
fn gaussian_closed_forms() {
    let mut o = MbpreGaussianOptimum::default();
    unsafe {
        assert_eq!(mbpre_gaussian_optimal(1.0, 1.0, 0.0, 10.0, 0.5, &mut o), MbpreStatus::Ok);
    }
    assert!((o.variance - 9.0).abs() < 1e-12);
    assert!((o.sensing_slope - 0.5).abs() < 1e-12);
    assert!((o.sensing_variance - 6.5).abs() < 1e-12);
    let rate = -0.5 * (2.0 * std::f64::consts::PI * 10.0).ln() - 0.5;
    assert!((o.rate - rate).abs() < 1e-12);

    let (mut mixed, mut sensing) = (0.0, 0.0);
    unsafe {
        assert_eq!(mbpre_gaussian_gains(10.0, 0.5, &mut mixed, &mut sensing), MbpreStatus::Ok);
    }
    assert!((mixed - (4.5 - 0.5 * 10.0f64.ln())).abs() < 1e-12);
    assert!((sensing - (o.sensing_rate - o.rate)).abs() < 1e-12);
    unsafe {
        assert_eq!(mbpre_gaussian_gains(-1.0, 0.5, &mut mixed, &mut sensing), MbpreStatus::InvalidParameter);
        assert_eq!(mbpre_gaussian_optimal(1.0, 0.0, 0.0, 1.0, 0.0, &mut o), MbpreStatus::InvalidParameter);
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "mbpre.h"

int main(void) {
    const double mean[4] = {1.5, 0.6, 0.6, 1.5};
    const double nu[2] = {0.5, 0.5};
    MbpreLandscape *l = NULL;
    MbpreEnv *env = NULL;
    MbpreResult *r = NULL;
    if (mbpre_landscape_new(mean, 2, 2, &l) != MBPRE_STATUS_OK) return 1;
    if (mbpre_env_iid_new(nu, 2, &env) != MBPRE_STATUS_OK) return 2;
    if (mbpre_optimize_no_sensing(l, env, NULL, &r) != MBPRE_STATUS_OK) return 3;
    if (fabs(mbpre_result_rate(r) - log(1.05)) > 1e-12) return 4;
    if (mbpre_landscape_new(NULL, 2, 2, &l) != MBPRE_STATUS_NULL_POINTER) return 5;
    printf("%s\n", mbpre_last_error_message());
    mbpre_result_free(r);
    mbpre_env_free(env);
    mbpre_landscape_free(l);
    return 0;
}
"#;

#[test]
fn header_links_from_c() {
    let deps = std::env::current_exe().unwrap();
    let profile_dir = deps.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libmbpre_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("null"));
}
