use std::ffi::{c_char, CString};
use std::ptr;

use tbc_ffi::*;

const FREE: &str = "
grid.x0 = 1
grid.J = 200
time.T = 0.005
time.N = 64
initial.alpha = 0.06
initial.k = 20
initial.mu = 0
boundary.leaf = 16
boundary.L = 3
";

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { tbc_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn config(text: &str) -> *mut TbcConfig {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { tbc_config_parse(c.as_ptr(), &mut cfg) }, TbcStatus::Ok, "{}", last_error());
    cfg
}

fn state(s: *const TbcSolver) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0;
    assert_eq!(unsafe { tbc_solver_state(s, ptr::null_mut(), ptr::null_mut(), 0, &mut n) }, TbcStatus::BufferTooSmall);
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { tbc_solver_state(s, re.as_mut_ptr(), im.as_mut_ptr(), n, &mut n) }, TbcStatus::Ok);
    (re, im)
}

#[test]
fn config_errors_carry_messages() {
    let bad = CString::new("grid.x0 = 1\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { tbc_config_parse(bad.as_ptr(), &mut cfg) }, TbcStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("grid.J"), "{}", last_error());
    assert_eq!(unsafe { tbc_config_parse(ptr::null(), &mut cfg) }, TbcStatus::InvalidArgument);
    assert_eq!(unsafe { tbc_config_parse(bad.as_ptr(), ptr::null_mut()) }, TbcStatus::InvalidArgument);
    let missing = CString::new("/nonexistent/x.cfg").unwrap();
    assert_eq!(unsafe { tbc_config_load(missing.as_ptr(), &mut cfg) }, TbcStatus::Config);
}

#[test]
fn canonical_text_roundtrips() {
    let cfg = config(FREE);
    let mut needed = 0;
    let st = unsafe { tbc_config_canonical(cfg, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, TbcStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed + 1];
    assert_eq!(unsafe { tbc_config_canonical(cfg, buf.as_mut_ptr(), buf.len(), &mut needed) }, TbcStatus::Ok);
    let text: String = buf[..needed].iter().map(|&c| c as u8 as char).collect();
    let again = config(&text);
    let (mut n, mut j) = (0, 0);
    assert_eq!(unsafe { tbc_config_dims(again, &mut n, &mut j) }, TbcStatus::Ok);
    assert_eq!((n, j), (64, 200));
    unsafe {
        tbc_config_free(cfg);
        tbc_config_free(again);
    }
}

#[test]
fn modes_agree_through_the_c_api() {
    let cfg = config(FREE);
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { tbc_operator_precompute(cfg, &mut op) }, TbcStatus::Ok, "{}", last_error());
    let (mut steps, mut ratio) = (0, 0.0);
    assert_eq!(unsafe { tbc_operator_info(op, &mut steps, &mut ratio) }, TbcStatus::Ok);
    assert_eq!(steps, 64);
    assert!(ratio > 0.0 && ratio <= 1.0);

    let mut bf = ptr::null_mut();
    let mut direct = ptr::null_mut();
    assert_eq!(unsafe { tbc_solver_new(cfg, op, 0, &mut bf) }, TbcStatus::Ok, "{}", last_error());
    // a solver keeps its operator alive
    unsafe { tbc_operator_free(op) };
    assert_eq!(unsafe { tbc_solver_new(cfg, ptr::null(), 1, &mut direct) }, TbcStatus::Ok);
    let mut taken = 0;
    assert_eq!(unsafe { tbc_solver_step(bf, 1000, &mut taken) }, TbcStatus::Ok, "{}", last_error());
    assert_eq!(taken, 64);
    assert_eq!(unsafe { tbc_solver_step(bf, 1, &mut taken) }, TbcStatus::Ok);
    assert_eq!(taken, 0);
    for _ in 0..4 {
        assert_eq!(unsafe { tbc_solver_step(direct, 16, &mut taken) }, TbcStatus::Ok);
    }
    let (mut m, mut t) = (0, 0.0);
    assert_eq!(unsafe { tbc_solver_progress(direct, &mut m, &mut t) }, TbcStatus::Ok);
    assert_eq!(m, 64);
    assert!((t - 0.005).abs() < 1e-15);
    let (a, b) = (state(bf), state(direct));
    let diff = a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");

    let mut wall = ptr::null_mut();
    assert_eq!(unsafe { tbc_solver_new(cfg, ptr::null(), 2, &mut wall) }, TbcStatus::Ok);
    assert_eq!(unsafe { tbc_solver_step(wall, 64, &mut taken) }, TbcStatus::Ok);
    assert_eq!(state(wall).0.len(), 601);
    unsafe {
        tbc_solver_free(bf);
        tbc_solver_free(direct);
        tbc_solver_free(wall);
        tbc_config_free(cfg);
    }
}

#[test]
fn operator_mismatch_and_bad_mode() {
    let cfg = config(FREE);
    let other = config(&FREE.replace("time.N = 64", "time.N = 32"));
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { tbc_operator_precompute(other, &mut op) }, TbcStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ops.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tbc_operator_save(op, path.as_ptr()) }, TbcStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { tbc_operator_load(path.as_ptr(), &mut loaded) }, TbcStatus::Ok);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tbc_solver_new(cfg, loaded, 0, &mut s) }, TbcStatus::OperatorMismatch);
    assert!(s.is_null());
    assert!(last_error().contains("N: operator 32 vs run 64"), "{}", last_error());
    assert_eq!(unsafe { tbc_solver_new(cfg, ptr::null(), 0, &mut s) }, TbcStatus::InvalidArgument);
    assert_eq!(unsafe { tbc_solver_new(cfg, ptr::null(), 9, &mut s) }, TbcStatus::InvalidArgument);
    let junk = CString::new(dir.path().join("junk").to_str().unwrap()).unwrap();
    std::fs::write(dir.path().join("junk"), b"not an operator").unwrap();
    assert_eq!(unsafe { tbc_operator_load(junk.as_ptr(), &mut loaded) }, TbcStatus::OperatorMismatch);
    unsafe {
        tbc_operator_free(op);
        tbc_config_free(cfg);
        tbc_config_free(other);
        tbc_config_free(ptr::null_mut());
    }
}

#[test]
fn run_writes_outputs() {
    let cfg = config(&format!("{FREE}boundary.mode = tbc_direct\noutput.snapshot_stride = 8\n"));
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tbc_run(cfg, ptr::null(), out.as_ptr()) }, TbcStatus::Ok, "{}", last_error());
    for f in ["snapshots.bin", "traces.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    unsafe { tbc_config_free(cfg) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tbc.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.trim().strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!(" {name}(")), "{name} missing from header");
    }
    // the header is valid C when a compiler is around
    if let Ok(st) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tbc.h"))
        .status()
    {
        assert!(st.success());
    }
}
