use std::ffi::{c_char, c_int, CStr};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use quasilab_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        ql_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn golden_frequency_round_trip() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(ql_frequency_golden(20, &mut f), QlStatus::Ok);
        let mut depth = 0;
        assert_eq!(ql_frequency_depth(f, &mut depth), QlStatus::Ok);
        assert_eq!(depth, 20);
        let mut q = 0u64;
        assert_eq!(ql_frequency_denominator(f, 10, &mut q), QlStatus::Ok);
        assert_eq!(q, 89);
        assert_eq!(
            ql_frequency_denominator(f, 500, &mut q),
            QlStatus::InvalidArgument
        );
        assert!(last_error().contains("500"));
        ql_frequency_free(f);
    }
}

#[test]
fn liouville_beta_and_errors() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(ql_frequency_liouville(1.0, 4, &mut f), QlStatus::Ok);
        let mut beta = 0.0;
        assert_eq!(ql_frequency_beta(f, &mut beta), QlStatus::Ok);
        assert!((beta - (152f64).ln() / 5.0).abs() < 1e-12);
        ql_frequency_free(f);

        let mut g = ptr::null_mut();
        assert_ne!(ql_frequency_liouville(0.0, 4, &mut g), QlStatus::Ok);
        assert!(g.is_null());
        assert_eq!(
            ql_frequency_liouville(1.0, 4, ptr::null_mut()),
            QlStatus::NullPointer
        );
        let mut h = ptr::null_mut();
        let bad = c"not a number";
        assert_eq!(
            ql_frequency_decimal(bad.as_ptr(), 10, &mut h),
            QlStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());
    }
}

#[test]
fn operator_lyapunov_and_m_function() {
    unsafe {
        let mut free = ptr::null_mut();
        assert_eq!(ql_operator_free_potential(&mut free), QlStatus::Ok);
        let mut l = -1.0;
        assert_eq!(ql_lyapunov(free, 3.0, 10_000, 64, 1, &mut l), QlStatus::Ok);
        assert!((l - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 5e-3);
        // free full-line transform at z: 2 / sqrt(z^2 - 4) with Im > 0
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            ql_full_line_m(free, 0.5, 0.5, 1e-12, &mut re, &mut im),
            QlStatus::Ok
        );
        let z = num_complex::Complex64::new(0.5, 0.5);
        let mut g = 1.0 / (z * z - 4.0).sqrt();
        if g.im < 0.0 {
            g = -g;
        }
        assert!(
            (re - 2.0 * g.re).abs() < 1e-8 && (im - 2.0 * g.im).abs() < 1e-8,
            "{re} {im} {g}"
        );
        ql_operator_free(free);

        let mut f = ptr::null_mut();
        assert_eq!(ql_frequency_golden(30, &mut f), QlStatus::Ok);
        let mut op = ptr::null_mut();
        assert_eq!(
            ql_operator_sawtooth(f, -1.0, 0.0, &mut op),
            QlStatus::InvalidArgument
        );
        assert_eq!(ql_operator_sawtooth(f, 2.0, 0.1, &mut op), QlStatus::Ok);
        ql_frequency_free(f);
        assert_eq!(
            ql_full_line_m(op, 0.0, 0.0, 1e-10, &mut re, &mut im),
            QlStatus::InvalidArgument
        );
        ql_operator_free(op);
    }
}

#[test]
fn measure_atoms_buffer_protocol() {
    unsafe {
        let mut f = ptr::null_mut();
        ql_frequency_golden(30, &mut f);
        let mut op = ptr::null_mut();
        ql_operator_sawtooth(f, 1.0, 0.2, &mut op);
        let mut mu = ptr::null_mut();
        assert_eq!(ql_measure_new(op, 100, 1, &mut mu), QlStatus::Ok);
        let mut len = 0;
        assert_eq!(
            ql_measure_atoms(mu, ptr::null_mut(), ptr::null_mut(), 0, &mut len),
            QlStatus::BufferTooSmall
        );
        assert!(len > 0);
        let mut e = vec![0.0; len];
        let mut w = vec![0.0; len];
        assert_eq!(
            ql_measure_atoms(mu, e.as_mut_ptr(), w.as_mut_ptr(), len, &mut len),
            QlStatus::Ok
        );
        // weights are |ψ(0)|² + |ψ(1)|², so the total mass is 2
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-8);
        assert!(e.windows(2).all(|p| p[0] <= p[1]));
        ql_measure_free(mu);
        ql_operator_free(op);
        ql_frequency_free(f);
        ql_measure_free(ptr::null_mut());
    }
}

#[test]
fn selftest_through_the_abi() {
    unsafe {
        let mut pass: c_int = -1;
        assert_eq!(ql_selftest(c"gram".as_ptr(), 3, &mut pass), QlStatus::Ok);
        assert_eq!(pass, 1);
        assert_eq!(
            ql_selftest(c"tarot".as_ptr(), 3, &mut pass),
            QlStatus::InvalidArgument
        );
        assert_eq!(
            ql_selftest(ptr::null(), 3, &mut pass),
            QlStatus::NullPointer
        );
        let v = CStr::from_ptr(ql_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("quasilab.h")
}

#[test]
fn header_declares_the_interface() {
    let text = std::fs::read_to_string(header()).unwrap();
    for needle in [
        "#ifndef QUASILAB_H",
        "typedef struct QlOperator QlOperator;",
        "typedef struct QlFrequency QlFrequency;",
        "typedef struct QlMeasure QlMeasure;",
        "QL_STATUS_OK = 0",
        "QL_STATUS_BUFFER_TOO_SMALL = 4",
        "const char *ql_version(void);",
        "enum QlStatus ql_lyapunov(",
        "enum QlStatus ql_measure_atoms(",
        "void ql_operator_free(struct QlOperator *op);",
        "size_t ql_last_error(char *buf, size_t len);",
    ] {
        assert!(text.contains(needle), "header lacks {needle}");
    }
}

/// Compiles and runs a C program against the static library.
#[test]
fn c_program_links_and_runs() {
    let deps = std::env::current_exe().unwrap();
    let profile_dir = deps.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libquasilab_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "quasilab.h"
int main(void) {
    QlFrequency *f = NULL;
    QlOperator *op = NULL;
    double l = -1.0;
    if (ql_frequency_golden(20, &f) != QL_STATUS_OK) return 10;
    if (ql_operator_sawtooth(f, 40.0, 0.1, &op) != QL_STATUS_OK) return 11;
    if (ql_lyapunov(op, 0.0, 2000, 32, 5, &l) != QL_STATUS_OK) return 12;
    if (!(l > 2.0)) return 13;
    if (ql_lyapunov(NULL, 0.0, 2000, 32, 5, &l) != QL_STATUS_NULL_POINTER) return 14;
    char msg[64];
    if (ql_last_error(msg, sizeof msg) == 0) return 15;
    ql_operator_free(op);
    ql_frequency_free(f);
    printf("%s %.6f\n", ql_version(), l);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("probe");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
