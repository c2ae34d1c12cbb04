//! C ABI over `tbc-core`.
//!
//! Every fallible call returns a [`TbcStatus`]; on failure the message is
//! kept per thread and can be copied out with [`tbc_last_error`]. Handles
//! are opaque and owned by the caller, who releases them with the matching
//! `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use tbc_core::boundary::{load_operator, save_operator, BoundaryOperator, DirectTbc, StreamingTbc};
use tbc_core::config::SimulationConfig;
use tbc_core::harness::{build_operator, cmd_run, problem, problem_on, RunOptions};
use tbc_core::kernel::EntryEngine;
use tbc_core::solver::{Closure, CrankNicolson};
use tbc_core::{Error, C64};

/// Result codes. The first five match the exit codes of the `tbc` tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbcStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 1,
    Config = 2,
    OperatorMismatch = 3,
    Numerical = 4,
    Io = 5,
    /// Caller buffer too small; nothing written.
    BufferTooSmall = 6,
    Panic = 7,
}

impl From<&Error> for TbcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => Self::Config,
            Error::OperatorMismatch(_) | Error::Format(_) => Self::OperatorMismatch,
            Error::Io(_) => Self::Io,
            Error::Domain(_) | Error::Quadrature { .. } | Error::SingularSystem { .. } | Error::Contract(_) => {
                Self::Numerical
            }
        }
    }
}

/// Parsed run configuration.
pub struct TbcConfig {
    inner: SimulationConfig,
}

/// Precomputed boundary operator; shareable between solvers.
pub struct TbcOperator {
    inner: Arc<BoundaryOperator>,
}

enum Source {
    Streaming(StreamingTbc<'static>),
    Direct(Box<DirectTbc>),
    Dirichlet,
}

/// A march in progress.
pub struct TbcSolver {
    cn: CrankNicolson,
    source: Source,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: TbcStatus, msg: impl Into<String>) -> TbcStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), TbcStatus>) -> TbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbcStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TbcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn core(e: Error) -> TbcStatus {
    let s = TbcStatus::from(&e);
    fail(s, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, TbcStatus> {
    if p.is_null() {
        return Err(fail(TbcStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(TbcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, TbcStatus> {
    p.as_mut().ok_or_else(|| fail(TbcStatus::InvalidArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, TbcStatus> {
    p.as_ref().ok_or_else(|| fail(TbcStatus::InvalidArgument, format!("{what} is null")))
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf`. Returns the message length without the terminator; when that is
/// `>= len` the message was truncated. `buf` may be null when `len` is 0.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tbc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses configuration text. Relative paths resolve against the current
/// directory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_config_parse(text: *const c_char, out: *mut *mut TbcConfig) -> TbcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimulationConfig::parse(str_arg(text, "text")?).map_err(core)?;
        *out = Box::into_raw(Box::new(TbcConfig { inner: cfg }));
        Ok(())
    })
}

/// Reads a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_config_load(path: *const c_char, out: *mut *mut TbcConfig) -> TbcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimulationConfig::load(str_arg(path, "path")?).map_err(core)?;
        *out = Box::into_raw(Box::new(TbcConfig { inner: cfg }));
        Ok(())
    })
}

/// Writes the canonical text of `cfg` into `buf` (NUL-terminated) and its
/// length into `needed`. With a short buffer nothing is written and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `cfg` must be a live handle, `buf` must point to `len` writable bytes
/// and `needed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_config_canonical(
    cfg: *const TbcConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> TbcStatus {
    guard(|| {
        let text = handle(cfg, "cfg")?.inner.to_canonical();
        *out_arg(needed, "needed")? = text.len();
        if buf.is_null() || len <= text.len() {
            return Err(fail(TbcStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1)));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Steps and spatial intervals of `cfg`.
///
/// # Safety
/// `cfg` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_config_dims(cfg: *const TbcConfig, steps: *mut usize, intervals: *mut usize) -> TbcStatus {
    guard(|| {
        let c = &handle(cfg, "cfg")?.inner;
        *out_arg(steps, "steps")? = c.steps;
        *out_arg(intervals, "intervals")? = c.intervals;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbc_config_free(cfg: *mut TbcConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the boundary operator for `cfg`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_operator_precompute(cfg: *const TbcConfig, out: *mut *mut TbcOperator) -> TbcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (op, _) = build_operator(&handle(cfg, "cfg")?.inner).map_err(core)?;
        *out = Box::into_raw(Box::new(TbcOperator { inner: Arc::new(op) }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_operator_load(path: *const c_char, out: *mut *mut TbcOperator) -> TbcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let op = load_operator(str_arg(path, "path")?).map_err(core)?;
        *out = Box::into_raw(Box::new(TbcOperator { inner: Arc::new(op) }));
        Ok(())
    })
}

/// # Safety
/// `op` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tbc_operator_save(op: *const TbcOperator, path: *const c_char) -> TbcStatus {
    guard(|| {
        let op = handle(op, "op")?;
        save_operator(&op.inner, str_arg(path, "path")?).map_err(core)
    })
}

/// Step count and compressed-to-dense block storage ratio.
///
/// # Safety
/// `op` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_operator_info(op: *const TbcOperator, steps: *mut usize, storage_ratio: *mut f64) -> TbcStatus {
    guard(|| {
        let op = &handle(op, "op")?.inner;
        *out_arg(steps, "steps")? = op.grid().steps();
        *out_arg(storage_ratio, "storage_ratio")? = op.storage().block_ratio();
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from this library, not yet freed.
/// Solvers created from it stay valid.
#[no_mangle]
pub unsafe extern "C" fn tbc_operator_free(op: *mut TbcOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Starts a march. `mode` is 0 for the butterfly operator (then `op` is
/// required and must match `cfg`), 1 for direct rows and 2 for Dirichlet
/// walls at `boundary.L`. In Dirichlet mode the state covers
/// `[-L, L]`.
///
/// # Safety
/// `cfg` must be a live handle, `op` null or a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_solver_new(
    cfg: *const TbcConfig,
    op: *const TbcOperator,
    mode: u32,
    out: *mut *mut TbcSolver,
) -> TbcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let c = &handle(cfg, "cfg")?.inner;
        let (p, source) = match mode {
            0 => {
                let op = handle(op, "op")?;
                let vp = c.vector_potential().map_err(core)?;
                op.inner.check_compatible(&c.time_grid().map_err(core)?, &vp.descriptor()).map_err(core)?;
                (problem(c).map_err(core)?, Source::Streaming(StreamingTbc::shared(op.inner.clone())))
            }
            1 => {
                let engine = EntryEngine::new(c.vector_potential().map_err(core)?, c.time_grid().map_err(core)?, c.quad())
                    .map_err(core)?;
                (problem(c).map_err(core)?, Source::Direct(Box::new(DirectTbc::new(engine))))
            }
            2 => {
                let grid = c.dirichlet_grid().map_err(core)?;
                (problem_on(c, grid).map_err(core)?, Source::Dirichlet)
            }
            _ => return Err(fail(TbcStatus::InvalidArgument, format!("unknown mode {mode}"))),
        };
        let cn = CrankNicolson::new(&p).map_err(core)?;
        *out = Box::into_raw(Box::new(TbcSolver { cn, source }));
        Ok(())
    })
}

/// Advances up to `steps` steps, stopping at the final time; the number
/// taken goes to `taken` when it is not null.
///
/// # Safety
/// `solver` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn tbc_solver_step(solver: *mut TbcSolver, steps: usize, taken: *mut usize) -> TbcStatus {
    guard(|| {
        let s = solver.as_mut().ok_or_else(|| fail(TbcStatus::InvalidArgument, "solver is null"))?;
        let mut done = 0;
        let mut result = Ok(());
        while done < steps && s.cn.step_index() < s.cn.steps() {
            let mut closure = match &mut s.source {
                Source::Streaming(src) => Closure::Transparent(src),
                Source::Direct(src) => Closure::Transparent(src.as_mut()),
                Source::Dirichlet => Closure::Dirichlet,
            };
            if let Err(e) = s.cn.step(&mut closure) {
                result = Err(core(e));
                break;
            }
            done += 1;
        }
        if !taken.is_null() {
            *taken = done;
        }
        result
    })
}

/// Current step index and time.
///
/// # Safety
/// `solver` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_solver_progress(solver: *const TbcSolver, step: *mut usize, t: *mut f64) -> TbcStatus {
    guard(|| {
        let s = handle(solver, "solver")?;
        *out_arg(step, "step")? = s.cn.step_index();
        *out_arg(t, "t")? = s.cn.t();
        Ok(())
    })
}

/// Copies the current state into `re` and `im`, each of length `len`,
/// which must equal the node count (written to `points`).
///
/// # Safety
/// `solver` must be a live handle, `re` and `im` must point to `len`
/// writable doubles and `points` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tbc_solver_state(
    solver: *const TbcSolver,
    re: *mut f64,
    im: *mut f64,
    len: usize,
    points: *mut usize,
) -> TbcStatus {
    guard(|| {
        let u: &[C64] = handle(solver, "solver")?.cn.u();
        *out_arg(points, "points")? = u.len();
        if re.is_null() || im.is_null() || len < u.len() {
            return Err(fail(TbcStatus::BufferTooSmall, format!("need {} values", u.len())));
        }
        for (j, z) in u.iter().enumerate() {
            *re.add(j) = z.re;
            *im.add(j) = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `solver` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbc_solver_free(solver: *mut TbcSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Runs `cfg` to completion as `tbc run` would, writing outputs into
/// `out_dir`. `ops_path` may be null; the butterfly operator is then
/// built in process.
///
/// # Safety
/// `cfg` must be a live handle; the strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tbc_run(cfg: *const TbcConfig, ops_path: *const c_char, out_dir: *const c_char) -> TbcStatus {
    guard(|| {
        let c = &handle(cfg, "cfg")?.inner;
        let mut opts = RunOptions::from_config(c);
        if !ops_path.is_null() {
            opts.ops = Some(PathBuf::from(str_arg(ops_path, "ops_path")?));
        }
        opts.out_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        cmd_run(c, &opts).map(|_| ()).map_err(core)
    })
}
