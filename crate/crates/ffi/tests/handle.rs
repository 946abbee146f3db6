use std::ffi::{c_char, CString};
use std::ptr;

use polykin_ffi::*;

const CONFIG: &str = "seed = 3\n[model]\nomega = 0.5\n[run]\nn_particles = 4000\n";

fn last_error() -> String {
    let mut needed = 0usize;
    unsafe { pk_last_error(ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { pk_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) }, PkStatus::Ok);
    let bytes: Vec<u8> = buf[..needed - 1].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn new_sim(text: &str) -> Result<*mut PkSimulation, PkStatus> {
    let c = CString::new(text).unwrap();
    let mut sim = ptr::null_mut();
    match unsafe { pk_simulation_new(c.as_ptr(), &mut sim) } {
        PkStatus::Ok => Ok(sim),
        s => Err(s),
    }
}

#[test]
fn run_through_the_handle_conserves_energy() {
    let sim = new_sim(CONFIG).unwrap();
    let mut n = 0usize;
    let mut e0 = 0.0;
    unsafe {
        assert_eq!(pk_simulation_particle_count(sim, &mut n), PkStatus::Ok);
        assert_eq!(pk_simulation_moment(sim, PkMomentFamily::Total as u32, 2.0, &mut e0), PkStatus::Ok);
        assert_eq!(pk_simulation_step(sim, 5), PkStatus::Ok);
        assert_eq!(pk_simulation_advance(sim, 0.25), PkStatus::Ok);
    }
    assert_eq!(n, 4000);
    let (mut t, mut dt, mut e1, mut tau, mut hits) = (0.0, 0.0, 0.0, 0.0, 0u64);
    unsafe {
        pk_simulation_time(sim, &mut t);
        pk_simulation_dt(sim, &mut dt);
        pk_simulation_moment(sim, PkMomentFamily::Total as u32, 2.0, &mut e1);
        pk_simulation_mean_collision_time(sim, &mut tau);
        pk_simulation_collisions(sim, true, &mut hits);
    }
    assert!((t - (5.0 * dt + 0.25)).abs() < 1e-12);
    assert!((e1 - e0).abs() / e0 < 1e-12);
    assert!(tau > 0.0 && hits > 0);
    unsafe { pk_simulation_free(sim) };
}

#[test]
fn bad_input_reports_status_and_message() {
    assert_eq!(new_sim("[model]\nomega = 2.0\n").unwrap_err(), PkStatus::Config);
    assert!(last_error().contains("model.omega"));

    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { pk_simulation_new(ptr::null(), &mut sim) }, PkStatus::NullPointer);
    assert_eq!(unsafe { pk_simulation_step(ptr::null_mut(), 1) }, PkStatus::NullPointer);

    let sim = new_sim(CONFIG).unwrap();
    assert_eq!(unsafe { pk_simulation_advance(sim, -1.0) }, PkStatus::InvalidArgument);
    assert_eq!(unsafe { pk_simulation_time(sim, ptr::null_mut()) }, PkStatus::NullPointer);
    let mut m = 0.0;
    assert_eq!(unsafe { pk_simulation_moment(sim, 9, 2.0, &mut m) }, PkStatus::InvalidArgument);
    let mut buf = [0 as c_char; 2];
    assert_eq!(unsafe { pk_last_error(buf.as_mut_ptr(), 2, ptr::null_mut()) }, PkStatus::BufferTooSmall);
    unsafe { pk_simulation_free(sim) };
    unsafe { pk_simulation_free(ptr::null_mut()) };
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/polykin.h")).unwrap();
    for name in ["pk_simulation_new", "pk_simulation_free", "pk_simulation_moment", "pk_last_error", "PK_STATUS_OK", "PkSimulation"] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { std::ffi::CStr::from_ptr(pk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
