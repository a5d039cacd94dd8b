use std::ffi::{CStr, CString};
use std::ptr;

use carnot_homog_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(carnot_last_error()) }.to_string_lossy().into_owned()
}

fn group(name: &str) -> *mut CarnotGroup {
    let name = CString::new(name).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { carnot_group_new(name.as_ptr(), &mut g) }, CarnotStatus::Ok);
    assert!(!g.is_null());
    g
}

#[test]
fn heisenberg_product_and_inverse() {
    let g = group("heisenberg1");
    unsafe {
        assert_eq!(carnot_group_dim(g), 3);
        assert_eq!(carnot_group_rank(g), 2);
        let x = [1.0, 2.0, 0.5];
        let y = [-0.5, 3.0, 1.0];
        let mut z = [0.0; 3];
        assert_eq!(carnot_group_compose(g, x.as_ptr(), y.as_ptr(), z.as_mut_ptr(), 3), CarnotStatus::Ok);
        // Third coordinate: 0.5 + 1 + (1·3 − 2·(−0.5))/2 = 3.5.
        assert_eq!(z, [0.5, 5.0, 3.5]);
        let mut inv = [0.0; 3];
        assert_eq!(carnot_group_inverse(g, x.as_ptr(), inv.as_mut_ptr(), 3), CarnotStatus::Ok);
        assert_eq!(inv, [-1.0, -2.0, -0.5]);
        let mut d = [0.0; 3];
        assert_eq!(carnot_group_dilate(g, 2.0, x.as_ptr(), d.as_mut_ptr(), 3), CarnotStatus::Ok);
        assert_eq!(d, [2.0, 4.0, 2.0]);
        let (mut n1, mut n2) = (0.0, 0.0);
        assert_eq!(carnot_group_hnorm(g, x.as_ptr(), 3, &mut n1), CarnotStatus::Ok);
        assert_eq!(carnot_group_hnorm(g, d.as_ptr(), 3, &mut n2), CarnotStatus::Ok);
        assert!((n2 - 2.0 * n1).abs() < 1e-12 * n2);
        carnot_group_free(g);
    }
}

#[test]
fn errors_are_codes_with_messages() {
    let name = CString::new("sl2").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { carnot_group_new(name.as_ptr(), &mut g) }, CarnotStatus::Input);
    assert!(g.is_null());
    assert!(last_error().contains("sl2"), "{}", last_error());

    let g = group("engel");
    let x = [0.0; 3];
    let mut out = [0.0; 4];
    let s = unsafe { carnot_group_inverse(g, x.as_ptr(), out.as_mut_ptr(), 3) };
    assert_eq!(s, CarnotStatus::InvalidArgument);
    assert!(last_error().contains("length 3"));
    let s = unsafe { carnot_group_hnorm(ptr::null(), x.as_ptr(), 3, ptr::null_mut()) };
    assert_eq!(s, CarnotStatus::InvalidArgument);
    let nan = [f64::NAN, 0.0, 0.0, 0.0];
    let mut n = 0.0;
    assert_eq!(unsafe { carnot_group_hnorm(g, nan.as_ptr(), 4, &mut n) }, CarnotStatus::Input);
    unsafe {
        assert_eq!(carnot_group_dim(ptr::null()), 0);
        carnot_group_free(g);
        carnot_group_free(ptr::null_mut());
    }
}

#[test]
fn constant_environment_action_is_closed_form() {
    let g = group("heisenberg1");
    let cfg = CString::new(r#"{"kind": "constant", "v_amplitude": 0.0}"#).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { carnot_env_new(g, cfg.as_ptr(), &mut env) }, CarnotStatus::Ok);
    let x = [0.3, -0.2, 0.1];
    let (mut a, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { carnot_env_sample(env, x.as_ptr(), 3, &mut a, &mut v) }, CarnotStatus::Ok);
    assert_eq!((a, v), (1.0, 0.0));

    // Along the X-line the optimum is the straight control: |q|²/2 per unit time.
    let q = [1.0, -2.0];
    let mut mu = 0.0;
    let s = unsafe { carnot_mu(env, 2.0, q.as_ptr(), 2, 0.0, 3.0, 8, ptr::null(), &mut mu) };
    assert_eq!(s, CarnotStatus::Ok, "{}", last_error());
    assert!((mu - 7.5).abs() < 1e-6, "{mu}");

    let start = [0.0; 3];
    let target = [1.0, 0.0, 0.0];
    let (mut value, mut residual) = (0.0, 1.0);
    let s = unsafe {
        carnot_action(env, 2.0, 0.5, start.as_ptr(), target.as_ptr(), 3, 2.0, 8, ptr::null(), &mut value, &mut residual)
    };
    assert_eq!(s, CarnotStatus::Ok, "{}", last_error());
    assert!((value - 0.25).abs() < 1e-6, "{value}");
    assert!(residual < 1e-6);
    unsafe {
        carnot_env_free(env);
        carnot_group_free(g);
    }
}

#[test]
fn invalid_configs_report_schema_or_input() {
    let g = group("heisenberg1");
    let cfg = CString::new(r#"{"kind": "lumpy"}"#).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { carnot_env_new(g, cfg.as_ptr(), &mut env) }, CarnotStatus::Schema);
    let cfg = CString::new(r#"{"kind": "product"}"#).unwrap();
    assert_eq!(unsafe { carnot_env_new(g, cfg.as_ptr(), &mut env) }, CarnotStatus::Ok);
    let q = [0.0, 0.0];
    let mut mu = 0.0;
    let s = unsafe { carnot_mu(env, 0.5, q.as_ptr(), 2, 0.0, 1.0, 4, ptr::null(), &mut mu) };
    assert_eq!(s, CarnotStatus::Input);
    assert!(last_error().contains("beta"));
    let bad = CString::new(r#"{"max_iters": "many"}"#).unwrap();
    let s = unsafe { carnot_mu(env, 2.0, q.as_ptr(), 2, 0.0, 1.0, 4, bad.as_ptr(), &mut mu) };
    assert_eq!(s, CarnotStatus::Schema);
    unsafe {
        carnot_env_free(env);
        carnot_group_free(g);
    }
}

#[test]
fn run_writes_a_table_that_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("lbar.json");
    std::fs::write(
        &config,
        r#"{
            "group": "heisenberg1",
            "environment": {"kind": "constant", "v_amplitude": 0.0},
            "model": {"beta": 2.0},
            "task": {"type": "effective-lagrangian", "lbar": {"q_nodes": 5, "t_ladder": [2.0, 4.0], "n_seeds": 2}}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let task = CString::new("effective-lagrangian").unwrap();
    let cpath = CString::new(config.to_str().unwrap()).unwrap();
    let cout = CString::new(out.to_str().unwrap()).unwrap();
    let s = unsafe { carnot_run(task.as_ptr(), cpath.as_ptr(), cout.as_ptr(), 1) };
    assert_eq!(s, CarnotStatus::Ok, "{}", last_error());

    let json = CString::new(std::fs::read_to_string(out.join("lbar_table.json")).unwrap()).unwrap();
    let mut lbar = ptr::null_mut();
    assert_eq!(unsafe { carnot_lbar_from_json(json.as_ptr(), &mut lbar) }, CarnotStatus::Ok);
    let q = [0.5, -1.0];
    let mut v = 0.0;
    assert_eq!(unsafe { carnot_lbar_eval(lbar, q.as_ptr(), 2, &mut v) }, CarnotStatus::Ok);
    // Node values are |q|²/2; (0.5, −1) sits on a cell edge, so
    // interpolation error is at most h²/8 with h = 1.
    assert!((v - 0.625).abs() <= 0.125 + 1e-9, "{v}");
    unsafe { carnot_lbar_free(lbar) };

    let wrong = CString::new("verify").unwrap();
    let s = unsafe { carnot_run(wrong.as_ptr(), cpath.as_ptr(), cout.as_ptr(), 1) };
    assert_eq!(s, CarnotStatus::Schema);
    assert!(last_error().contains("task.type"));
    let unknown = CString::new("dance").unwrap();
    assert_eq!(unsafe { carnot_run(unknown.as_ptr(), cpath.as_ptr(), ptr::null(), 0) }, CarnotStatus::InvalidArgument);
}

#[test]
fn header_declares_every_export() {
    let root = env!("CARGO_MANIFEST_DIR");
    let src = std::fs::read_to_string(format!("{root}/src/lib.rs")).unwrap();
    let header = std::fs::read_to_string(format!("{root}/include/carnot_homog.h")).unwrap();
    let mut n = 0;
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = &rest[..rest.find('(').unwrap()];
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
            n += 1;
        }
    }
    assert!(n >= 15, "{n}");
    for ty in ["typedef struct CarnotGroup", "typedef struct CarnotEnv", "typedef struct CarnotLbar", "CARNOT_STATUS_OK = 0"] {
        assert!(header.contains(ty), "{ty}");
    }
}
