//! C interface to the pulse optimiser.
//!
//! Problems and results are opaque handles created and released through
//! this interface. Every function returns a [`GrapeStatus`]; on failure the
//! message of the last error on the calling thread is available from
//! [`grape_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grape_core::config::ProblemKind;
use grape_core::device::canonical_params;
use grape_core::experiments::{entangler_check, iswap_baseline};
use grape_core::optimizer::{optimize, OptimizeResult, OptimizerOptions};
use grape_core::problem::ControlProblem;
use grape_core::pulse::ScheduleSpec;
use grape_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrapeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrapeProblemKind {
    IfredkinPlus = 0,
    IfredkinMinus = 1,
    IswapBaseline = 2,
}

/// Opaque control problem.
pub struct GrapeProblem {
    inner: ControlProblem,
}

/// Opaque optimisation outcome.
pub struct GrapeResult {
    inner: OptimizeResult,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GrapeOptions {
    pub target_fidelity: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> GrapeStatus {
    if e.is_usage() {
        GrapeStatus::InvalidArgument
    } else {
        GrapeStatus::Numerical
    }
}

fn guard(f: impl FnOnce() -> Result<(), GrapeStatus>) -> GrapeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrapeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            GrapeStatus::Panic
        }
    }
}

fn check<T>(r: grape_core::Result<T>) -> Result<T, GrapeStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, GrapeStatus> {
    // SAFETY: caller passes a pointer obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| {
        set_error("null pointer");
        GrapeStatus::NullPointer
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], GrapeStatus> {
    if p.is_null() {
        set_error("null pointer");
        return Err(GrapeStatus::NullPointer);
    }
    // SAFETY: caller guarantees `len` readable values at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], GrapeStatus> {
    if p.is_null() {
        set_error("null pointer");
        return Err(GrapeStatus::NullPointer);
    }
    // SAFETY: caller guarantees `len` writable values at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Copies the last error message on this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn grape_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: `n + 1 <= len` bytes fit in `buf`.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Problem on the default device with the default schedule at
/// `gate_time_ns`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn grape_problem_new(
    kind: GrapeProblemKind,
    gate_time_ns: f64,
    out: *mut *mut GrapeProblem,
) -> GrapeStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return Err(GrapeStatus::NullPointer);
        }
        let spec = ScheduleSpec::with_gate_time(gate_time_ns);
        let params = canonical_params();
        let inner = check(match kind {
            GrapeProblemKind::IfredkinPlus => ControlProblem::ifredkin(params, spec, 1),
            GrapeProblemKind::IfredkinMinus => ControlProblem::ifredkin(params, spec, -1),
            GrapeProblemKind::IswapBaseline => iswap_baseline(&params, spec),
        })?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(GrapeProblem { inner })) };
        Ok(())
    })
}

/// Parses a problem name such as `ifredkin+` and builds it like
/// [`grape_problem_new`].
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` as for
/// [`grape_problem_new`].
#[no_mangle]
pub unsafe extern "C" fn grape_problem_from_name(
    name: *const c_char,
    gate_time_ns: f64,
    out: *mut *mut GrapeProblem,
) -> GrapeStatus {
    if name.is_null() {
        set_error("null problem name");
        return GrapeStatus::NullPointer;
    }
    // SAFETY: caller passes a NUL-terminated string.
    let name = unsafe { CStr::from_ptr(name) }.to_string_lossy();
    let kind = match name.parse::<ProblemKind>() {
        Ok(ProblemKind::IfredkinPlus) => GrapeProblemKind::IfredkinPlus,
        Ok(ProblemKind::IfredkinMinus) => GrapeProblemKind::IfredkinMinus,
        Ok(ProblemKind::IswapBaseline) => GrapeProblemKind::IswapBaseline,
        Err(e) => {
            set_error(e.to_string());
            return GrapeStatus::InvalidArgument;
        }
    };
    // SAFETY: forwarded caller guarantees.
    unsafe { grape_problem_new(kind, gate_time_ns, out) }
}

/// # Safety
/// `problem` must be null or a handle from [`grape_problem_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn grape_problem_free(problem: *mut GrapeProblem) {
    if !problem.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Length of the decision vector; 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grape_problem_n_vars(problem: *const GrapeProblem) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { problem.as_ref() }.map_or(0, |p| p.inner.n_vars())
}

/// Fidelity of a decision vector; the gradient is written when `grad` is
/// not null.
///
/// # Safety
/// `x` and a non-null `grad` must each hold `len` values; `fidelity` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn grape_problem_evaluate(
    problem: *const GrapeProblem,
    x: *const f64,
    len: usize,
    fidelity: *mut f64,
    grad: *mut f64,
) -> GrapeStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let p = unsafe { deref(problem) }?;
        let x = unsafe { slice(x, len) }?;
        if fidelity.is_null() {
            set_error("null fidelity pointer");
            return Err(GrapeStatus::NullPointer);
        }
        let f = if grad.is_null() {
            check(p.inner.fidelity(x))?
        } else {
            let r = check(p.inner.fidelity_and_gradient(x))?;
            let g = unsafe { slice_mut(grad, len) }?;
            g.copy_from_slice(&r.gradient.expect("gradient requested"));
            r.fidelity
        };
        // SAFETY: checked non-null.
        unsafe { *fidelity = f };
        Ok(())
    })
}

/// Default optimiser settings.
#[no_mangle]
pub extern "C" fn grape_options_default() -> GrapeOptions {
    let o = OptimizerOptions::default();
    GrapeOptions {
        target_fidelity: o.target_fidelity,
        max_iterations: o.max_iterations,
        restarts: o.restarts,
        seed: o.seed,
    }
}

/// Runs the optimiser. The result handle is written even when the target
/// is missed; check [`grape_result_fidelity`].
///
/// # Safety
/// `problem` must be a live handle; `opts` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn grape_optimize(
    problem: *const GrapeProblem,
    opts: *const GrapeOptions,
    out: *mut *mut GrapeResult,
) -> GrapeStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let p = unsafe { deref(problem) }?;
        let o = unsafe { deref(opts) }?;
        if out.is_null() {
            set_error("null output pointer");
            return Err(GrapeStatus::NullPointer);
        }
        let options = OptimizerOptions {
            target_fidelity: o.target_fidelity,
            max_iterations: o.max_iterations,
            restarts: o.restarts,
            seed: o.seed,
            ..OptimizerOptions::default()
        };
        let inner = check(optimize(&p.inner, &options))?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(GrapeResult { inner })) };
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grape_result_free(result: *mut GrapeResult) {
    if !result.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Best fidelity; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grape_result_fidelity(result: *const GrapeResult) -> f64 {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { result.as_ref() }.map_or(f64::NAN, |r| r.inner.best_fidelity)
}

/// Total accepted iterations over all restarts.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grape_result_iterations(result: *const GrapeResult) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { result.as_ref() }.map_or(0, |r| r.inner.total_iterations)
}

/// Copies the best decision vector into `x`.
///
/// # Safety
/// `x` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn grape_result_pulse(
    result: *const GrapeResult,
    x: *mut f64,
    len: usize,
) -> GrapeStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let r = unsafe { deref(result) }?;
        let best = &r.inner.best_x;
        if len < best.len() {
            set_error(format!(
                "buffer holds {len} values, pulse has {}",
                best.len()
            ));
            return Err(GrapeStatus::BufferTooSmall);
        }
        let x = unsafe { slice_mut(x, best.len()) }?;
        x.copy_from_slice(best);
        Ok(())
    })
}

/// GHZ production fidelity of the full propagator under pulse `x`.
///
/// # Safety
/// As for [`grape_problem_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn grape_problem_entangler(
    problem: *const GrapeProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> GrapeStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let p = unsafe { deref(problem) }?;
        let x = unsafe { slice(x, len) }?;
        if out.is_null() {
            set_error("null output pointer");
            return Err(GrapeStatus::NullPointer);
        }
        let u = check(p.inner.propagate_dense(x))?.total;
        let v = check(entangler_check(&u, &p.inner.params.dims))?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}
