use std::ffi::{CStr, CString};
use std::ptr;

use mgp_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = mgp_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; n + 1];
        mgp_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn bundled(name: &str) -> *mut MgpScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { mgp_scenario_bundled(name.as_ptr(), &mut sc) }, MgpStatus::Ok);
    assert!(!sc.is_null());
    sc
}

fn short_run(name: &str, t_final_steps: f64) -> *mut MgpSimulation {
    let sc = bundled(name);
    unsafe {
        assert_eq!(mgp_scenario_set_numerics(sc, 0.01, t_final_steps), MgpStatus::Ok);
        let mut sim = ptr::null_mut();
        assert_eq!(mgp_simulation_run(sc, &mut sim), MgpStatus::Ok, "{}", last_error());
        mgp_scenario_free(sc);
        sim
    }
}

#[test]
fn version_and_status_names() {
    unsafe {
        let v = CStr::from_ptr(mgp_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
        assert_eq!(CStr::from_ptr(mgp_status_name(MgpStatus::BufferTooSmall)).to_str().unwrap(), "buffer-too-small");
    }
}

#[test]
fn parse_errors_are_reported() {
    let bad = CString::new("{\"name\": ").unwrap();
    let mut sc = ptr::null_mut();
    let st = unsafe { mgp_scenario_from_json(bad.as_ptr(), &mut sc) };
    assert_eq!(st, MgpStatus::Parse);
    assert!(sc.is_null());
    assert!(last_error().starts_with("syntax:"), "{}", last_error());

    let unknown = CString::new("no-such-graph").unwrap();
    assert_eq!(unsafe { mgp_scenario_bundled(unknown.as_ptr(), &mut sc) }, MgpStatus::InvalidArgument);
}

#[test]
fn graph_errors_are_reported() {
    let json = CString::new(
        r#"{"name": "x",
            "graph": {"vertices": ["a", "b"], "edges": [{"id": "e", "from": "a", "to": "c", "length": 1.0}]},
            "numerics": {"h": 0.1, "dt": 0.001},
            "initial_state": {"eigenstate": 0},
            "run": {"t_final": 0.01}}"#,
    )
    .unwrap();
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(mgp_scenario_from_json(json.as_ptr(), &mut sc), MgpStatus::Ok);
        let mut sim = ptr::null_mut();
        assert_eq!(mgp_simulation_run(sc, &mut sim), MgpStatus::Graph);
        assert!(sim.is_null());
        assert!(last_error().contains("`c`"), "{}", last_error());
        mgp_scenario_free(sc);
    }
}

#[test]
fn null_handles_are_rejected() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(mgp_simulation_run(ptr::null(), &mut sim), MgpStatus::NullPointer);
        assert_eq!(mgp_simulation_run(ptr::null(), ptr::null_mut()), MgpStatus::NullPointer);
        let mut r = 0.0;
        assert_eq!(mgp_simulation_symmetry_residual(ptr::null(), &mut r), MgpStatus::NullPointer);
        assert_eq!(mgp_simulation_edge_count(ptr::null()), 0);
        mgp_simulation_free(ptr::null_mut());
        mgp_scenario_free(ptr::null_mut());
        mgp_ensemble_free(ptr::null_mut());
    }
}

#[test]
fn simulation_queries() {
    let sim = short_run("star3-sym", 2e-4);
    unsafe {
        assert_eq!(mgp_simulation_edge_count(sim), 3);
        assert_eq!(mgp_simulation_vertex_count(sim), 4);
        let n = mgp_simulation_snapshot_count(sim);
        assert_eq!(n, 501);
        let mut t = 0.0;
        assert_eq!(mgp_simulation_snapshot_time(sim, n - 1, &mut t), MgpStatus::Ok);
        assert!((t - 0.1).abs() < 1e-12);
        assert_eq!(mgp_simulation_snapshot_time(sim, n, &mut t), MgpStatus::OutOfRange);
        let mut norm = 0.0;
        assert_eq!(mgp_simulation_norm(sim, n - 1, &mut norm), MgpStatus::Ok);
        assert!((norm - 1.0).abs() < 1e-10);
        let mut res = 1.0;
        assert_eq!(mgp_simulation_symmetry_residual(sim, &mut res), MgpStatus::Ok);
        assert!(res < 1e-13);

        // two-call buffer protocol
        let mut written = 0;
        assert_eq!(mgp_simulation_density(sim, 0, 0, ptr::null_mut(), 0, &mut written), MgpStatus::BufferTooSmall);
        assert_eq!(written, 101);
        let mut rho = vec![0.0; written];
        assert_eq!(mgp_simulation_density(sim, 0, 0, rho.as_mut_ptr(), rho.len(), &mut written), MgpStatus::Ok);
        assert!(rho[50] > 1.0 && rho[0] < 1e-6);
        assert_eq!(mgp_simulation_density(sim, 0, 7, rho.as_mut_ptr(), rho.len(), &mut written), MgpStatus::OutOfRange);

        let mut flux = [0.0; 3];
        let mut edges = [99usize; 3];
        assert_eq!(mgp_simulation_vertex_flux(sim, 0, 0.025, flux.as_mut_ptr(), edges.as_mut_ptr(), 3, &mut written), MgpStatus::Ok);
        assert_eq!(edges, [0, 1, 2]);
        assert!(flux[0] < 0.0 && flux[1] > 0.0);
        assert!((flux[1] - flux[2]).abs() < 1e-9 * flux[1]);
        let mut p = [0.0; 3];
        assert_eq!(mgp_simulation_edge_selection(sim, 0, 0.025, p.as_mut_ptr(), 3, &mut written), MgpStatus::Ok);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-9);
        assert_eq!(mgp_simulation_edge_selection(sim, 0, 5.0, p.as_mut_ptr(), 3, &mut written), MgpStatus::OutOfRange);
        // a Dirichlet leaf carries no current
        assert_eq!(mgp_simulation_edge_selection(sim, 1, 0.025, p.as_mut_ptr(), 3, &mut written), MgpStatus::Numeric);
        mgp_simulation_free(sim);
    }
}

#[test]
fn ensemble_round_trip() {
    let sim = short_run("star3-asym", 2e-4);
    let times = [0.05, 0.1];
    unsafe {
        let mut ens = ptr::null_mut();
        assert_eq!(mgp_ensemble_sample(sim, 2000, 3, MgpTurnRule::Minimal, times.as_ptr(), 2, &mut ens), MgpStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(mgp_ensemble_tv(ens, 1, &mut a, &mut b), MgpStatus::Ok);
        assert!(a < 0.05 && b < 0.15, "{a} {b}");
        assert_eq!(mgp_ensemble_tv(ens, 2, &mut a, &mut b), MgpStatus::OutOfRange);
        let (mut total_emp, mut total_exact) = (0.0, 0.0);
        for e in 0..3 {
            let (mut x, mut y) = (0.0, 0.0);
            assert_eq!(mgp_ensemble_edge_mass(ens, 0, e, &mut x, &mut y), MgpStatus::Ok);
            total_emp += x;
            total_exact += y;
        }
        assert!((total_emp - 1.0).abs() < 1e-12);
        assert!((total_exact - 1.0).abs() < 1e-6);
        mgp_ensemble_free(ens);

        let mut ens = ptr::null_mut();
        assert_eq!(mgp_ensemble_sample(sim, 0, 3, MgpTurnRule::Minimal, times.as_ptr(), 2, &mut ens), MgpStatus::InvalidArgument);
        assert_eq!(mgp_ensemble_sample(sim, 10, 3, MgpTurnRule::Minimal, ptr::null(), 0, &mut ens), MgpStatus::InvalidArgument);
        mgp_simulation_free(sim);
    }
}

#[test]
fn markovize_matches_selection() {
    let flux = [-2.0, -1.0, 1.5, 1.5];
    let mut m = [0.0; 4];
    let mut s = [0.0; 4];
    unsafe {
        for seed in 0..20 {
            assert_eq!(mgp_markovize(flux.as_ptr(), 4, seed, m.as_mut_ptr(), s.as_mut_ptr()), MgpStatus::Ok);
            for i in 0..4 {
                assert!((m[i] - s[i]).abs() < 1e-12);
            }
        }
        let stalled = [0.0; 3];
        assert_eq!(mgp_markovize(stalled.as_ptr(), 3, 0, m.as_mut_ptr(), s.as_mut_ptr()), MgpStatus::Numeric);
        let nan = [f64::NAN, 1.0];
        assert_eq!(mgp_markovize(nan.as_ptr(), 2, 0, m.as_mut_ptr(), s.as_mut_ptr()), MgpStatus::InvalidArgument);
    }
}

#[test]
fn errors_are_per_thread() {
    let bad = CString::new("[").unwrap();
    let mut sc = ptr::null_mut();
    unsafe { mgp_scenario_from_json(bad.as_ptr(), &mut sc) };
    assert!(!last_error().is_empty());
    std::thread::spawn(|| assert!(last_error().is_empty())).join().unwrap();
    // success clears it
    let s = bundled("interval");
    assert!(last_error().is_empty());
    unsafe { mgp_scenario_free(s) };
}
