//! C ABI for the stability certification pipeline.
//!
//! The surface follows the usual opaque-handle pattern: a parsed system
//! (document JSON plus synthesized Lyapunov data) and a certificate are
//! heap-allocated handles with explicit `_free` functions. Every fallible
//! call reports a [`SguesStatus`] and stores a thread-local message
//! retrievable with [`sgues_last_error`]. Mode indices are zero-based on
//! this surface.
//!
//! The generated header lives at `include/sgues.h`.

// Raw-pointer arguments are part of the C contract; every function
// null-checks before dereferencing and documents ownership.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sgues_core::certifier::{self, CertConfig, Certificate, CombinedBound, SweepObjective};
use sgues_core::cli::{load_system_text, resolve_lyapunov, LoadedSystem};
use sgues_core::jumpgraph::WeightedJumpGraph;
use sgues_core::lyapunov::LyapunovData;
use sgues_core::model::Time;
use sgues_core::simulator::{self, InputSignal, SignalStyle};

/// Call outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SguesStatus {
    Ok = 0,
    /// A pointer argument was null or an index out of range.
    InvalidArgument = 1,
    /// The document failed to parse or validate.
    ParseError = 2,
    /// Certification failed (missing constraints, no admissible walk, ...).
    CertifyError = 3,
    /// Signal generation or integration failed.
    SimulationError = 4,
    /// The requested quantity needs a valid certificate.
    NotValid = 5,
    /// A panic was caught at the boundary.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_out(out: *mut SguesStatus, value: SguesStatus) {
    if !out.is_null() {
        unsafe { *out = value };
    }
}

fn guarded<T>(
    status: *mut SguesStatus,
    fallback: T,
    body: impl FnOnce() -> Result<T, (SguesStatus, String)>,
) -> T {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match outcome {
        Ok(Ok(value)) => {
            status_out(status, SguesStatus::Ok);
            value
        }
        Ok(Err((code, message))) => {
            set_error(&message);
            status_out(status, code);
            fallback
        }
        Err(_) => {
            set_error("internal panic");
            status_out(status, SguesStatus::Internal);
            fallback
        }
    }
}

/// Copies the most recent error message into `buffer` (NUL-terminated,
/// truncated to `length`). Returns the full message length in bytes.
#[no_mangle]
pub extern "C" fn sgues_last_error(buffer: *mut c_char, length: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && length > 0 {
            let n = bytes.len().min(length);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buffer, n);
                *buffer.add(n - 1) = 0;
            }
        }
        bytes.len() - 1
    })
}

/// A parsed system document with synthesized Lyapunov data.
pub struct SguesSystem {
    loaded: LoadedSystem,
    lyap: LyapunovData,
    weighted: WeightedJumpGraph,
}

/// An assembled stability certificate.
pub struct SguesCertificate {
    inner: Certificate,
}

/// Parses a system specification document (JSON text) and synthesizes its
/// Lyapunov data. Returns null on failure.
#[no_mangle]
pub extern "C" fn sgues_system_parse(
    json: *const c_char,
    status: *mut SguesStatus,
) -> *mut SguesSystem {
    guarded(status, ptr::null_mut(), || {
        if json.is_null() {
            return Err((SguesStatus::InvalidArgument, "json must not be null".into()));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| (SguesStatus::ParseError, format!("document is not UTF-8: {e}")))?;
        let loaded = load_system_text(text, "document")
            .map_err(|e| (SguesStatus::ParseError, e.to_string()))?;
        let lyap =
            resolve_lyapunov(&loaded).map_err(|e| (SguesStatus::ParseError, e.to_string()))?;
        let weighted = WeightedJumpGraph::from_lyapunov(&loaded.system.graph, &lyap)
            .map_err(|e| (SguesStatus::ParseError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(SguesSystem { loaded, lyap, weighted })))
    })
}

/// Frees a system handle; null is accepted.
#[no_mangle]
pub extern "C" fn sgues_system_free(system: *mut SguesSystem) {
    if !system.is_null() {
        drop(unsafe { Box::from_raw(system) });
    }
}

/// Number of modes.
#[no_mangle]
pub extern "C" fn sgues_system_mode_count(system: *const SguesSystem) -> usize {
    if system.is_null() {
        return 0;
    }
    unsafe { &*system }.lyap.mode_count()
}

/// Flow rate bound `lambda_bar(mode)`; NaN for a bad handle or index.
#[no_mangle]
pub extern "C" fn sgues_system_flow_rate(system: *const SguesSystem, mode: usize) -> f64 {
    if system.is_null() {
        return f64::NAN;
    }
    let system = unsafe { &*system };
    system.lyap.flow_rate.get(mode).copied().unwrap_or(f64::NAN)
}

/// Jump gain `r_bar(from, to)`; NaN when the pair carries no jump map.
#[no_mangle]
pub extern "C" fn sgues_system_jump_gain(
    system: *const SguesSystem,
    from: usize,
    to: usize,
) -> f64 {
    if system.is_null() {
        return f64::NAN;
    }
    let system = unsafe { &*system };
    system.lyap.jump_gain.get(&(from, to)).copied().unwrap_or(f64::NAN)
}

/// Combined switching weight `R(length)`; NaN when the graph admits no
/// walk of that length.
#[no_mangle]
pub extern "C" fn sgues_system_combined_weight(
    system: *const SguesSystem,
    length: u64,
    status: *mut SguesStatus,
) -> f64 {
    guarded(status, f64::NAN, || {
        if system.is_null() {
            return Err((SguesStatus::InvalidArgument, "system must not be null".into()));
        }
        let system = unsafe { &*system };
        system
            .weighted
            .combined_weight(length)
            .map_err(|e| (SguesStatus::CertifyError, e.to_string()))?
            .ok_or((SguesStatus::CertifyError, format!("no walk of length {length}")))
    })
}

fn certify(system: &SguesSystem, config: &CertConfig) -> Result<Certificate, (SguesStatus, String)> {
    let identity_selfs = system.loaded.system.self_jumps_are_identity();
    let all_neutral =
        (0..system.lyap.mode_count()).all(|i| system.lyap.self_gain(i) == 1.0);
    let result = if identity_selfs && all_neutral {
        certifier::certify_no_self_impulses(
            &system.lyap,
            &system.loaded.profile,
            &system.weighted,
            config,
            true,
        )
    } else {
        certifier::certify_main(&system.lyap, &system.loaded.profile, &system.weighted, config)
    };
    result.map_err(|e| (SguesStatus::CertifyError, e.to_string()))
}

/// Assembles a certificate for the given sequence length and balance
/// coefficients (`c_mode` may be null for all-zero coefficients).
#[no_mangle]
pub extern "C" fn sgues_certify(
    system: *const SguesSystem,
    length: u64,
    c_switch: f64,
    c_mode: *const f64,
    c_mode_len: usize,
    status: *mut SguesStatus,
) -> *mut SguesCertificate {
    guarded(status, ptr::null_mut(), || {
        if system.is_null() {
            return Err((SguesStatus::InvalidArgument, "system must not be null".into()));
        }
        let system = unsafe { &*system };
        let coefficients = if c_mode.is_null() {
            vec![0.0; system.lyap.mode_count()]
        } else {
            unsafe { std::slice::from_raw_parts(c_mode, c_mode_len) }.to_vec()
        };
        let config =
            CertConfig { sequence_length: length, c_switch, c_mode: coefficients };
        let cert = certify(system, &config)?;
        Ok(Box::into_raw(Box::new(SguesCertificate { inner: cert })))
    })
}

/// Scans coefficient grids over the given sequence lengths and returns the
/// best certificate by decay rate (the least-invalid one when none is
/// valid).
#[no_mangle]
pub extern "C" fn sgues_certify_sweep(
    system: *const SguesSystem,
    lengths: *const u64,
    lengths_len: usize,
    status: *mut SguesStatus,
) -> *mut SguesCertificate {
    guarded(status, ptr::null_mut(), || {
        if system.is_null() || lengths.is_null() || lengths_len == 0 {
            return Err((SguesStatus::InvalidArgument, "system and lengths are required".into()));
        }
        let system = unsafe { &*system };
        let lengths = unsafe { std::slice::from_raw_parts(lengths, lengths_len) };
        let outcome = certifier::sweep(
            &system.lyap,
            &system.loaded.profile,
            &system.weighted,
            lengths,
            SweepObjective::MaxLambda,
            system.loaded.system.self_jumps_are_identity(),
        )
        .map_err(|e| (SguesStatus::CertifyError, e.to_string()))?;
        Ok(Box::into_raw(Box::new(SguesCertificate { inner: outcome.best })))
    })
}

/// Frees a certificate handle; null is accepted.
#[no_mangle]
pub extern "C" fn sgues_certificate_free(cert: *mut SguesCertificate) {
    if !cert.is_null() {
        drop(unsafe { Box::from_raw(cert) });
    }
}

/// Maximum overshoot `K`.
#[no_mangle]
pub extern "C" fn sgues_certificate_overshoot(cert: *const SguesCertificate) -> f64 {
    if cert.is_null() {
        return f64::NAN;
    }
    unsafe { &*cert }.inner.k
}

/// Decay rate `lambda` (negative for invalid certificates).
#[no_mangle]
pub extern "C" fn sgues_certificate_decay_rate(cert: *const SguesCertificate) -> f64 {
    if cert.is_null() {
        return f64::NAN;
    }
    unsafe { &*cert }.inner.lambda
}

/// Aggregate rate `lambda_0`; the certificate is valid iff positive.
#[no_mangle]
pub extern "C" fn sgues_certificate_lambda0(cert: *const SguesCertificate) -> f64 {
    if cert.is_null() {
        return f64::NAN;
    }
    unsafe { &*cert }.inner.lambda0
}

#[no_mangle]
pub extern "C" fn sgues_certificate_is_valid(cert: *const SguesCertificate) -> bool {
    if cert.is_null() {
        return false;
    }
    unsafe { &*cert }.inner.valid
}

/// Perturbation margin `lambda / (K e^lambda)`; requires a valid
/// certificate.
#[no_mangle]
pub extern "C" fn sgues_certificate_iiss_margin(
    cert: *const SguesCertificate,
    status: *mut SguesStatus,
) -> f64 {
    guarded(status, f64::NAN, || {
        if cert.is_null() {
            return Err((SguesStatus::InvalidArgument, "certificate must not be null".into()));
        }
        certifier::iiss_margin(&unsafe { &*cert }.inner)
            .map_err(|e| (SguesStatus::NotValid, e.to_string()))
    })
}

/// Generates an admissible signal for `seed`, simulates the system from a
/// seeded unit initial state over `horizon` seconds and returns the largest
/// ratio of the state norm to the certificate envelope (at most one when
/// the certificate is sound).
#[no_mangle]
pub extern "C" fn sgues_simulate_max_ratio(
    system: *const SguesSystem,
    cert: *const SguesCertificate,
    seed: u64,
    horizon: f64,
    status: *mut SguesStatus,
) -> f64 {
    guarded(status, f64::NAN, || {
        if system.is_null() || cert.is_null() {
            return Err((SguesStatus::InvalidArgument, "system and certificate are required".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err((SguesStatus::InvalidArgument, "horizon must be positive".into()));
        }
        let system = unsafe { &*system };
        let cert = unsafe { &*cert };
        let horizon = Time::from_secs_f64(horizon);
        let signal = simulator::generate_signal(
            &system.loaded.profile,
            &system.loaded.system.graph,
            horizon,
            seed,
            SignalStyle::Randomized,
        )
        .map_err(|e| (SguesStatus::SimulationError, e.to_string()))?;
        let n = system.loaded.system.dimension;
        use sgues_core::model::TICKS_PER_SEC;
        let mut state = vec![0.0; n];
        let mut acc = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        for slot in state.iter_mut() {
            acc = acc.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *slot = ((acc >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
        }
        let x0 = nalgebra::DVector::from_vec(state);
        let x0 = if x0.norm() < 1e-9 {
            nalgebra::DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
        } else {
            let norm = x0.norm();
            x0 / norm
        };
        let ceiling = Time::from_ticks(TICKS_PER_SEC / 500);
        let step = simulator::max_admissible_step(&signal, Time::ZERO, ceiling);
        let trajectory = simulator::simulate(
            &system.loaded.system,
            &signal,
            &x0,
            Time::ZERO,
            step,
            &InputSignal::Zero,
        )
        .map_err(|e| (SguesStatus::SimulationError, e.to_string()))?;
        let bound = CombinedBound::new(std::slice::from_ref(&cert.inner))
            .map_err(|e| (SguesStatus::CertifyError, e.to_string()))?;
        let outcome = simulator::verify_bound(&trajectory, &bound)
            .map_err(|e| (SguesStatus::SimulationError, e.to_string()))?;
        Ok(outcome.max_ratio)
    })
}

// `nalgebra` is reached through sgues-core; re-exported here for the
// initial-state construction above.
use sgues_core::nalgebra;
