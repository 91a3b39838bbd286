use std::ffi::CString;
use std::ptr;

use grape_ffi::*;

fn new_problem(kind: GrapeProblemKind, tg: f64) -> *mut GrapeProblem {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { grape_problem_new(kind, tg, &mut p) },
        GrapeStatus::Ok
    );
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { grape_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn evaluate_and_gradient() {
    let p = new_problem(GrapeProblemKind::IfredkinPlus, 12.0);
    let n = unsafe { grape_problem_n_vars(p) };
    assert_eq!(n, 3 * 4);
    let x: Vec<f64> = (0..n).map(|k| 0.1 * k as f64).collect();
    let mut f = 0.0;
    let mut g = vec![0.0; n];
    let s = unsafe { grape_problem_evaluate(p, x.as_ptr(), n, &mut f, g.as_mut_ptr()) };
    assert_eq!(s, GrapeStatus::Ok);
    let mut f2 = -1.0;
    let s = unsafe { grape_problem_evaluate(p, x.as_ptr(), n, &mut f2, ptr::null_mut()) };
    assert_eq!(s, GrapeStatus::Ok);
    assert_eq!(f, f2);
    assert!((0.0..=1.0).contains(&f));
    assert!(g.iter().any(|&v| v != 0.0));
    unsafe { grape_problem_free(p) };
}

#[test]
fn errors_are_reported() {
    let mut p = ptr::null_mut();
    let s = unsafe { grape_problem_new(GrapeProblemKind::IfredkinPlus, 6.0, &mut p) };
    assert_eq!(s, GrapeStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("gate time"), "{}", last_error());

    let name = CString::new("cnot").unwrap();
    let s = unsafe { grape_problem_from_name(name.as_ptr(), 20.0, &mut p) };
    assert_eq!(s, GrapeStatus::InvalidArgument);
    assert!(last_error().contains("unknown problem"));

    let q = new_problem(GrapeProblemKind::IfredkinPlus, 12.0);
    let x = [0.0; 3];
    let mut f = 0.0;
    let s = unsafe { grape_problem_evaluate(q, x.as_ptr(), x.len(), &mut f, ptr::null_mut()) };
    assert_eq!(s, GrapeStatus::InvalidArgument);
    let s = unsafe { grape_problem_evaluate(ptr::null(), x.as_ptr(), 3, &mut f, ptr::null_mut()) };
    assert_eq!(s, GrapeStatus::NullPointer);
    assert_eq!(unsafe { grape_problem_n_vars(ptr::null()) }, 0);
    unsafe { grape_problem_free(q) };
    unsafe { grape_problem_free(ptr::null_mut()) };
}

#[test]
fn baseline_by_name_optimises() {
    let name = CString::new("iswap-baseline").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { grape_problem_from_name(name.as_ptr(), 30.0, &mut p) },
        GrapeStatus::Ok
    );
    let n = unsafe { grape_problem_n_vars(p) };
    assert_eq!(n, 2 * 22);
    let opts = GrapeOptions {
        restarts: 2,
        max_iterations: 400,
        ..grape_options_default()
    };
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { grape_optimize(p, &opts, &mut r) }, GrapeStatus::Ok);
    let f = unsafe { grape_result_fidelity(r) };
    assert!(f >= 0.9999, "baseline fidelity {f}");
    assert!(unsafe { grape_result_iterations(r) } > 0);

    let mut small = vec![0.0; n - 1];
    assert_eq!(
        unsafe { grape_result_pulse(r, small.as_mut_ptr(), small.len()) },
        GrapeStatus::BufferTooSmall
    );
    let mut x = vec![0.0; n];
    assert_eq!(
        unsafe { grape_result_pulse(r, x.as_mut_ptr(), n) },
        GrapeStatus::Ok
    );
    let mut f2 = 0.0;
    unsafe { grape_problem_evaluate(p, x.as_ptr(), n, &mut f2, ptr::null_mut()) };
    assert_eq!(f, f2);
    unsafe { grape_result_free(r) };
    unsafe { grape_problem_free(p) };
    assert!(unsafe { grape_result_fidelity(ptr::null()) }.is_nan());
}

#[test]
fn entangler_of_idle_pulse() {
    let p = new_problem(GrapeProblemKind::IfredkinMinus, 12.0);
    let n = unsafe { grape_problem_n_vars(p) };
    let x = vec![1.0; n];
    let mut v = 0.0;
    assert_eq!(
        unsafe { grape_problem_entangler(p, x.as_ptr(), n, &mut v) },
        GrapeStatus::Ok
    );
    assert!((0.0..=1.0).contains(&v));
    unsafe { grape_problem_free(p) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/grape.h");
    for f in [
        "grape_last_error",
        "grape_problem_new",
        "grape_problem_from_name",
        "grape_problem_free",
        "grape_problem_n_vars",
        "grape_problem_evaluate",
        "grape_options_default",
        "grape_optimize",
        "grape_result_free",
        "grape_result_fidelity",
        "grape_result_iterations",
        "grape_result_pulse",
        "grape_problem_entangler",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct GrapeProblem GrapeProblem;"));
}
