//! C ABI over the polykin DSMC solver.
//!
//! A simulation is an opaque `PkSimulation` handle created from a TOML
//! configuration (the same format as the `polykin` binary) and released with
//! `pk_simulation_free`. Every fallible call returns a `PkStatus`; the message
//! of the last failure on the calling thread is available through
//! `pk_last_error`.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use polykin::cli::parse_config;
use polykin::dsmc::SimState;
use polykin::error::Error;
use polykin::kernels::Channel;
use polykin::kinematics::MomentFamily;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkMomentFamily {
    Velocity = 0,
    Internal = 1,
    Total = 2,
}

fn family_of(raw: u32) -> Result<MomentFamily, PkStatus> {
    match raw {
        x if x == PkMomentFamily::Velocity as u32 => Ok(MomentFamily::Velocity),
        x if x == PkMomentFamily::Internal as u32 => Ok(MomentFamily::Internal),
        x if x == PkMomentFamily::Total as u32 => Ok(MomentFamily::Total),
        other => {
            set_error(format!("unknown moment family {other}"));
            Err(PkStatus::InvalidArgument)
        }
    }
}

/// Opaque simulation handle.
pub struct PkSimulation {
    state: SimState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PkStatus {
    match e {
        Error::Config(_) | Error::ConfigAt { .. } => PkStatus::Config,
        Error::InvalidParam(_) | Error::MissingRr | Error::WrongChannel { .. } | Error::PovznerOrder(_) => {
            PkStatus::InvalidArgument
        }
        _ => PkStatus::Simulation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PkStatus>) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PkStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            PkStatus::Panic
        }
    }
}

fn fail(e: Error) -> PkStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> PkStatus {
    set_error(format!("{what} is null"));
    PkStatus::NullPointer
}

unsafe fn sim<'a>(p: *mut PkSimulation) -> Result<&'a mut PkSimulation, PkStatus> {
    // SAFETY: the caller passes a handle from pk_simulation_new or null.
    unsafe { p.as_mut() }.ok_or_else(|| null("simulation"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), PkStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: non-null and provided by the caller as writable.
    unsafe { out.write(value) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulation from a TOML configuration. The initial ensemble is
/// sampled from `[initial]` with `run.n_particles` particles; `run.dt`
/// (absent: the solver default) and `seed` are honoured.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_new(config_toml: *const c_char, out: *mut *mut PkSimulation) -> PkStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let text = unsafe { CStr::from_ptr(config_toml) }.to_str().map_err(|_| {
            set_error("config is not valid UTF-8");
            PkStatus::InvalidArgument
        })?;
        let cfg = parse_config(text).map_err(fail)?;
        let mixture = cfg.model.mixture().map_err(fail)?;
        let ens = cfg.initial.sample_ensemble(cfg.run.n_particles, mixture.mass(), cfg.seed).map_err(fail)?;
        let state = SimState::new(ens, mixture, cfg.run.dt, cfg.seed).map_err(fail)?;
        // SAFETY: checked non-null.
        unsafe { out.write(Box::into_raw(Box::new(PkSimulation { state }))) };
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `sim` must come from `pk_simulation_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_free(sim: *mut PkSimulation) {
    if !sim.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Takes `n_steps` steps of the current time step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_step(sim: *mut PkSimulation, n_steps: u64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        for _ in 0..n_steps {
            s.state.step().map_err(fail)?;
        }
        Ok(())
    })
}

/// Advances by `duration` (absolute time); the last step is shortened to land
/// exactly on the target.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_advance(sim: *mut PkSimulation, duration: f64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        if !(duration >= 0.0) || !duration.is_finite() {
            set_error(format!("duration must be finite and >= 0, got {duration}"));
            return Err(PkStatus::InvalidArgument);
        }
        s.state.advance(duration).map_err(fail)
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_time(sim: *mut PkSimulation, out: *mut f64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        unsafe { write(out, s.state.time()) }
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_dt(sim: *mut PkSimulation, out: *mut f64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        unsafe { write(out, s.state.dt()) }
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_particle_count(sim: *mut PkSimulation, out: *mut usize) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        unsafe { write(out, s.state.ensemble().len()) }
    })
}

/// Weighted moment `sum_i w_i <.>^k` of the current ensemble; `family` is a
/// `PkMomentFamily` value.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_moment(
    sim: *mut PkSimulation,
    family: u32,
    k: f64,
    out: *mut f64,
) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        let m = s.state.ensemble().moment(family_of(family)?, k).map_err(fail)?;
        unsafe { write(out, m) }
    })
}

/// Mean collision time of the current ensemble.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_mean_collision_time(sim: *mut PkSimulation, out: *mut f64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        let t = s.state.mean_collision_time().map_err(fail)?;
        unsafe { write(out, t) }
    })
}

/// Accepted collisions so far; `polyatomic` selects the channel.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pk_simulation_collisions(sim: *mut PkSimulation, polyatomic: bool, out: *mut u64) -> PkStatus {
    guard(|| {
        let s = unsafe { self::sim(sim) }?;
        let ch = if polyatomic { Channel::Polyatomic } else { Channel::Frozen };
        unsafe { write(out, s.state.counters(ch).accepted) }
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated).
/// `needed` receives the buffer size required, terminator included.
///
/// # Safety
/// `buf` must hold `len` bytes (or be null with `len == 0`); `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn pk_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> PkStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !needed.is_null() {
            // SAFETY: non-null and writable per contract.
            unsafe { needed.write(bytes.len() + 1) };
        }
        if len < bytes.len() + 1 {
            return PkStatus::BufferTooSmall;
        }
        if buf.is_null() {
            return PkStatus::NullPointer;
        }
        // SAFETY: buf holds at least bytes.len() + 1 bytes.
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
            buf.add(bytes.len()).write(0);
        }
        PkStatus::Ok
    })
}
