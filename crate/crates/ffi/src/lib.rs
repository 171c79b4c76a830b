//! C interface to quasilab.
//!
//! Objects cross the boundary as opaque handles created by `ql_*_new`
//! constructors and released with the matching `ql_*_free`. Every fallible
//! call returns a [`QlStatus`]; on failure the message is retrievable with
//! [`ql_last_error`] from the same thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use quasilab::arithmetic::{
    beta_estimate, build_liouville_frequency, continued_fraction, AlphaSource, CfExpansion,
};
use quasilab::dynamics::lyapunov;
use quasilab::model::{OperatorPoint, PotentialSpec};
use quasilab::spectral::{empirical_measure, full_line_m, AtomicMeasure};
use quasilab::verify::run_identity_family;
use quasilab::{Error, ErrorClass};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// A continued-fraction expansion of a rotation number.
pub struct QlFrequency(CfExpansion);

/// A potential, rotation and phase.
pub struct QlOperator(OperatorPoint);

/// An atomic spectral measure.
pub struct QlMeasure(AtomicMeasure);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(message: &str) {
    LAST_ERROR.with(|e| {
        let mut buf = e.borrow_mut();
        buf.clear();
        buf.extend(message.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> QlStatus {
    match err.class() {
        ErrorClass::Config => QlStatus::InvalidArgument,
        ErrorClass::Numeric => QlStatus::Numeric,
    }
}

/// Runs `body`, recording the error message and containing panics.
fn guard(body: impl FnOnce() -> Result<(), (QlStatus, String)>) -> QlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            QlStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QlStatus::Panic
        }
    }
}

fn lift<T>(r: quasilab::Result<T>) -> Result<T, (QlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (QlStatus, String) {
    (QlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (QlStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), (QlStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (QlStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ql_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ql_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Expansion of the golden mean (√5 − 1)/2 to `depth` quotients.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_golden(depth: usize, out: *mut *mut QlFrequency) -> QlStatus {
    guard(|| {
        store(
            out,
            QlFrequency(lift(continued_fraction(&AlphaSource::Golden, depth, 256))?),
        )
    })
}

/// Expansion of a decimal string in (0, 1).
///
/// # Safety
/// `decimal` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_decimal(
    decimal: *const c_char,
    depth: usize,
    out: *mut *mut QlFrequency,
) -> QlStatus {
    guard(|| {
        if decimal.is_null() {
            return Err(null("decimal"));
        }
        let text = CStr::from_ptr(decimal)
            .to_str()
            .map_err(|e| (QlStatus::InvalidArgument, e.to_string()))?;
        let cf = lift(continued_fraction(
            &AlphaSource::Decimal(text.to_string()),
            depth,
            256,
        ))?;
        store(out, QlFrequency(cf))
    })
}

/// Liouville-type frequency with growth rate `beta`.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_liouville(
    beta: f64,
    terms: usize,
    out: *mut *mut QlFrequency,
) -> QlStatus {
    guard(|| {
        store(
            out,
            QlFrequency(lift(build_liouville_frequency(beta, terms))?),
        )
    })
}

/// # Safety
/// `f` must be null or a handle from a `ql_frequency_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_free(f: *mut QlFrequency) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of stored partial quotients.
///
/// # Safety
/// `f` must be a live frequency handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_depth(f: *const QlFrequency, out: *mut usize) -> QlStatus {
    guard(|| write(out, deref(f, "frequency")?.0.quotients().len()))
}

/// Denominator q_n; fails with `InvalidArgument` beyond the stored depth and
/// `Numeric` if q_n does not fit in 64 bits.
///
/// # Safety
/// `f` must be a live frequency handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_denominator(
    f: *const QlFrequency,
    n: usize,
    out: *mut u64,
) -> QlStatus {
    guard(|| {
        let q = deref(f, "frequency")?.0.q(n).ok_or((
            QlStatus::InvalidArgument,
            format!("index {n} beyond stored depth"),
        ))?;
        let q =
            u64::try_from(q).map_err(|_| (QlStatus::Numeric, format!("q_{n} exceeds 64 bits")))?;
        write(out, q)
    })
}

/// Growth-rate estimate max ln q_{n+1}/q_n.
///
/// # Safety
/// `f` must be a live frequency handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_frequency_beta(f: *const QlFrequency, out: *mut f64) -> QlStatus {
    guard(|| write(out, lift(beta_estimate(&deref(f, "frequency")?.0))?.0))
}

unsafe fn operator_with(
    spec: PotentialSpec,
    f: *const QlFrequency,
    phase: f64,
    out: *mut *mut QlOperator,
) -> Result<(), (QlStatus, String)> {
    let cf = &deref(f, "frequency")?.0;
    lift(spec.validate())?;
    if !phase.is_finite() {
        return Err((QlStatus::InvalidArgument, "phase must be finite".into()));
    }
    store(
        out,
        QlOperator(OperatorPoint::from_expansion(spec, cf, phase)),
    )
}

/// Mean-zero sawtooth with the given slope.
///
/// # Safety
/// `f` must be a live frequency handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_sawtooth(
    f: *const QlFrequency,
    slope: f64,
    phase: f64,
    out: *mut *mut QlOperator,
) -> QlStatus {
    guard(|| operator_with(PotentialSpec::centered_sawtooth(slope), f, phase, out))
}

/// `coupling · tan(πx)`.
///
/// # Safety
/// `f` must be a live frequency handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_tangent(
    f: *const QlFrequency,
    coupling: f64,
    phase: f64,
    out: *mut *mut QlOperator,
) -> QlStatus {
    guard(|| operator_with(PotentialSpec::TangentMonotone { coupling }, f, phase, out))
}

/// Zero potential.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_free_potential(out: *mut *mut QlOperator) -> QlStatus {
    guard(|| store(out, QlOperator(OperatorPoint::free())))
}

/// # Safety
/// `op` must be null or a handle from a `ql_operator_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_free(op: *mut QlOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Phase-averaged Lyapunov estimate over `phases` random phases.
///
/// # Safety
/// `op` must be a live operator handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_lyapunov(
    op: *const QlOperator,
    energy: f64,
    n: usize,
    phases: usize,
    seed: u64,
    out: *mut f64,
) -> QlStatus {
    guard(|| {
        let op = &deref(op, "operator")?.0;
        write(
            out,
            lift(lyapunov(&op.spec, op.rotation, energy, n, phases, seed))?.l_hat,
        )
    })
}

/// Full-line transform M(z) = ⟨δ_0, G δ_0⟩ + ⟨δ_1, G δ_1⟩ at z = re + i·im.
///
/// # Safety
/// `op` must be a live operator handle; `out_re` and `out_im` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_full_line_m(
    op: *const QlOperator,
    re: f64,
    im: f64,
    tol: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> QlStatus {
    guard(|| {
        let r = lift(full_line_m(
            &deref(op, "operator")?.0,
            Complex64::new(re, im),
            tol,
        ))?;
        write(out_re, r.m.re)?;
        write(out_im, r.m.im)
    })
}

/// Spectral measure of the truncation to [−n, n], weighted by |ψ(0)|² + |ψ(1)|²
/// (total mass 2).
///
/// # Safety
/// `op` must be a live operator handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_measure_new(
    op: *const QlOperator,
    n: usize,
    bc_average: usize,
    out: *mut *mut QlMeasure,
) -> QlStatus {
    guard(|| {
        let mu = lift(empirical_measure(&deref(op, "operator")?.0, n, bc_average))?;
        store(out, QlMeasure(mu))
    })
}

/// # Safety
/// `m` must be null or a handle from [`ql_measure_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_measure_free(m: *mut QlMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Copies atoms into caller arrays of capacity `cap`. `out_len` always
/// receives the atom count; `BufferTooSmall` is returned if `cap` is short.
///
/// # Safety
/// `m` must be a live measure handle; `energies` and `weights` must each hold
/// `cap` doubles (or be null when `cap` is 0); `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_measure_atoms(
    m: *const QlMeasure,
    energies: *mut f64,
    weights: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> QlStatus {
    guard(|| {
        let atoms = deref(m, "measure")?.0.atoms();
        write(out_len, atoms.len())?;
        if cap < atoms.len() {
            return Err((
                QlStatus::BufferTooSmall,
                format!("{} atoms, capacity {cap}", atoms.len()),
            ));
        }
        if energies.is_null() || weights.is_null() {
            return Err(null("output array"));
        }
        for (i, (e, w)) in atoms.iter().enumerate() {
            *energies.add(i) = *e;
            *weights.add(i) = *w;
        }
        Ok(())
    })
}

/// Runs one identity family at self-test size; `out_pass` receives 1 or 0.
///
/// # Safety
/// `family` must be a NUL-terminated string; `out_pass` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_selftest(
    family: *const c_char,
    seed: u64,
    out_pass: *mut c_int,
) -> QlStatus {
    guard(|| {
        if family.is_null() {
            return Err(null("family"));
        }
        let name = CStr::from_ptr(family)
            .to_str()
            .map_err(|e| (QlStatus::InvalidArgument, e.to_string()))?;
        let outcome = lift(run_identity_family(name, seed))?;
        write(out_pass, c_int::from(outcome.pass))
    })
}
